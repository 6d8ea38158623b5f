// Command-line front end for the language-diarization toolkit.
//
// Subcommands: synth, segment, diarize, identify, transcribe, score, report.
// Exit codes: 0 success, 1 config error, 2 data error, 3 downstream-client
// error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "langdiar/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace langdiar;

namespace {

std::string file_id_of(const std::string& path) {
    return fs::path(path).stem().string();
}

PipelineConfig load_config(const std::string& config_path, bool seed_set, uint64_t seed) {
    PipelineConfig cfg;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw ConfigError("cannot open config file: " + config_path);
        json j;
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
        cfg = config_from_json(j);
    } else {
        cfg.languages = {"lang0", "lang1", "lang2"};
    }
    if (seed_set) cfg.seed = seed;
    return cfg;
}

std::map<std::string, LabeledAnnotation> load_rttm_file(const std::string& path, LabelKind kind) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open RTTM file: " + path);
    return read_rttm(f, kind);
}

std::ostream& open_output(std::ofstream& file, const std::string& out_dir,
                          const std::string& name) {
    if (out_dir.empty()) return std::cout;
    fs::create_directories(out_dir);
    file.open(fs::path(out_dir) / name);
    if (!file) throw DataError("cannot write " + name + " under " + out_dir);
    return file;
}

std::vector<FileInput> load_inputs(const std::vector<std::string>& audio_paths,
                                   const std::string& ref_language_path,
                                   const std::string& ref_speaker_path) {
    std::map<std::string, LabeledAnnotation> ref_lang, ref_spk;
    if (!ref_language_path.empty())
        ref_lang = load_rttm_file(ref_language_path, LabelKind::language);
    if (!ref_speaker_path.empty())
        ref_spk = load_rttm_file(ref_speaker_path, LabelKind::speaker);

    std::vector<FileInput> files;
    for (const std::string& path : audio_paths) {
        FileInput f;
        f.file_id = file_id_of(path);
        f.audio = read_wav(path);
        const auto rl = ref_lang.find(f.file_id);
        if (rl != ref_lang.end()) f.ref_language = rl->second;
        const auto rs = ref_spk.find(f.file_id);
        if (rs != ref_spk.end()) f.ref_speaker = rs->second;
        files.push_back(std::move(f));
    }
    return files;
}

// --- synth ---------------------------------------------------------------

int cmd_synth(const std::string& mode, const std::string& gap, int n_files,
              const std::vector<std::string>& languages, double target_len, bool reuse_voice,
              uint64_t seed, const std::string& out_dir) {
    MixSpec spec;
    if (mode == "short") spec.mode = MixMode::short_segments;
    else if (mode == "long") spec.mode = MixMode::long_segments;
    else throw ConfigError("--mode must be short or long");
    if (gap == "1s") spec.gap = GapMode::one_second;
    else if (gap == "none") spec.gap = GapMode::none;
    else throw ConfigError("--gap must be 1s or none");
    spec.n_files = n_files;
    spec.languages = languages;
    spec.target_file_len = target_len;
    spec.reuse_voice = reuse_voice;
    spec.seed = seed;

    fs::create_directories(out_dir);
    const Voicebank bank;
    const std::vector<MixPlaylist> playlists = make_mix_playlists(spec);

    std::ofstream lang_rttm(fs::path(out_dir) / "ref_language.rttm");
    std::ofstream spk_rttm(fs::path(out_dir) / "ref_speaker.rttm");
    json manifest;
    manifest["mode"] = mode;
    manifest["gap"] = gap;
    manifest["languages"] = languages;
    manifest["seed"] = seed;
    manifest["reuse_voice"] = reuse_voice;
    manifest["files"] = json::array();

    for (const MixPlaylist& pl : playlists) {
        const RenderedMix mix = render_synthetic_audio(pl, bank);
        const std::string wav_name = pl.file_id + ".wav";
        write_wav((fs::path(out_dir) / wav_name).string(), mix.audio);
        write_rttm(lang_rttm, mix.ref_language);
        write_rttm(spk_rttm, mix.ref_speaker);
        json entry;
        entry["file_id"] = pl.file_id;
        entry["wav"] = wav_name;
        entry["duration_s"] = mix.audio.duration();
        entry["segments"] = pl.entries.size();
        manifest["files"].push_back(std::move(entry));
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << '\n';
    std::cerr << "wrote " << playlists.size() << " files to " << out_dir << '\n';
    return 0;
}

// --- segment / diarize ----------------------------------------------------

int cmd_segment(const PipelineConfig& cfg, const std::vector<std::string>& audio_paths,
                const std::string& ref_language_path, const std::string& out_dir) {
    const auto files = load_inputs(audio_paths, ref_language_path, "");
    std::ofstream out_file;
    std::ostream& os = open_output(out_file, out_dir, "speech.rttm");
    for (const FileInput& f : files) {
        Timeline speech;
        if (cfg.vad == VadKind::oracle) {
            if (!f.ref_language)
                throw DataError("oracle VAD needs --ref-language covering " + f.file_id);
            speech = flatten(*f.ref_language).support();
        } else if (cfg.vad == VadKind::stitched) {
            const ReferenceLocalDiarizer local(cfg.slots,
                                               VadConfig{kFrameRate, cfg.energy_threshold_db,
                                                         cfg.speech_activity_threshold,
                                                         cfg.hangover});
            const StitchedVadDetector vad(local, cfg.speech_activity_threshold, cfg.chunk_len);
            speech = vad.detect(f.audio);
        } else {
            speech = energy_vad(f.audio, VadConfig{kFrameRate, cfg.energy_threshold_db,
                                                   cfg.speech_activity_threshold, cfg.hangover});
        }
        write_rttm_speech(os, speech, f.file_id);
    }
    return 0;
}

int cmd_diarize(const PipelineConfig& cfg, const std::vector<std::string>& audio_paths,
                const std::string& ref_speaker_path, const std::string& out_dir) {
    const auto files = load_inputs(audio_paths, "", ref_speaker_path);
    std::ofstream out_file;
    std::ostream& os = open_output(out_file, out_dir, "speakers.rttm");
    for (const FileInput& f : files) {
        std::unique_ptr<LocalDiarizer> local;
        std::unique_ptr<Embedder> embedder;
        if (cfg.local_diarizer == ComponentKind::oracle) {
            if (!f.ref_speaker)
                throw DataError("oracle local diarizer needs --ref-speaker covering " + f.file_id);
            local = std::make_unique<OracleLocalDiarizer>(*f.ref_speaker, cfg.slots);
        } else {
            local = std::make_unique<ReferenceLocalDiarizer>(
                cfg.slots, VadConfig{kFrameRate, cfg.energy_threshold_db,
                                     cfg.speech_activity_threshold, cfg.hangover});
        }
        if (cfg.embedder == ComponentKind::oracle) {
            if (!f.ref_speaker)
                throw DataError("oracle embedder needs --ref-speaker covering " + f.file_id);
            embedder = std::make_unique<OracleEmbedder>(*f.ref_speaker);
        } else {
            embedder = std::make_unique<LogMelStatsEmbedder>();
        }
        DiarizeConfig dcfg;
        dcfg.chunk_len = cfg.chunk_len;
        dcfg.speech_activity_threshold = cfg.speech_activity_threshold;
        dcfg.linkage_threshold = cfg.linkage_threshold;
        DiarizeOutput out = diarize(f.audio, *local, *embedder, dcfg);
        out.speakers.file_id = f.file_id;
        write_rttm(os, out.speakers);
        for (const std::string& w : out.warnings) std::cerr << f.file_id << ": " << w << '\n';
    }
    return 0;
}

// --- identify ---------------------------------------------------------------

int cmd_identify(const PipelineConfig& cfg, const std::vector<std::string>& audio_paths,
                 const std::string& ref_language_path, const std::string& ref_speaker_path,
                 const std::string& out_dir, int jobs) {
    const auto files = load_inputs(audio_paths, ref_language_path, ref_speaker_path);
    const PipelineRunner runner(cfg);
    const std::vector<RunOutput> outs =
        parallel_map<RunOutput>(files, jobs, [&](const FileInput& f) { return runner.run_file(f); });

    std::vector<EvalFile> runs;
    std::map<std::string, LabeledAnnotation> refs;
    std::vector<std::string> log_lines;
    for (size_t i = 0; i < files.size(); ++i) {
        runs.push_back({files[i].file_id, outs[i].hypothesis, files[i].audio.duration(),
                        std::nullopt});
        if (files[i].ref_language) refs[files[i].file_id] = *files[i].ref_language;
        std::ostringstream line;
        line << files[i].file_id << ": segments=" << outs[i].n_segments << " wall_ms="
             << static_cast<long>(outs[i].wall_ms);
        log_lines.push_back(line.str());
        for (const std::string& w : outs[i].warnings)
            log_lines.push_back(files[i].file_id + ": " + w);
    }

    EvalOptions opts;
    opts.seed = cfg.seed;
    opts.with_bootstrap = !refs.empty();
    EvalResult eval;
    if (!refs.empty()) eval = evaluate(runs, refs, {}, opts);
    const std::string dir = write_run_artifacts(out_dir.empty() ? "." : out_dir, cfg, runs, eval,
                                                log_lines);
    std::cerr << "run artifacts in " << dir << '\n';
    if (!refs.empty()) {
        MethodReport row{topology_name(cfg.topology), eval.aggregate, eval.aggregate_ler,
                         eval.aggregate_wer};
        std::cout << report_csv({row});
    }
    return 0;
}

// --- transcribe ---------------------------------------------------------------

int cmd_transcribe(const std::vector<std::string>& audio_paths, const std::string& hyp_rttm_path,
                   const std::string& missing_policy,
                   const std::vector<std::string>& client_languages, const std::string& out_dir) {
    const auto hyps = load_rttm_file(hyp_rttm_path, LabelKind::language);
    const MissingClientPolicy policy =
        missing_policy == "skip" ? MissingClientPolicy::skip : MissingClientPolicy::fail;

    const MockTranscriptionClient mock;
    json transcripts;
    for (const std::string& path : audio_paths) {
        const std::string fid = file_id_of(path);
        const auto it = hyps.find(fid);
        if (it == hyps.end()) {
            std::cerr << "no language segments for " << fid << ", skipping\n";
            continue;
        }
        const AudioBuffer audio = read_wav(path);
        // a mock client per hypothesized language unless a restricted client
        // list was given
        std::map<std::string, const TranscriptionClient*> clients;
        if (client_languages.empty()) {
            for (const std::string& lang : it->second.space.names) clients[lang] = &mock;
        } else {
            for (const std::string& lang : client_languages) clients[lang] = &mock;
        }
        const TranscriptionResult r = route_and_transcribe(it->second, audio, clients, policy);
        transcripts[fid]["tokens"] = r.tokens;
        transcripts[fid]["warnings"] = r.warnings;
        transcripts[fid]["errors"] = r.errors;
    }
    std::ofstream out_file;
    std::ostream& os = open_output(out_file, out_dir, "transcripts.json");
    os << transcripts.dump(2) << '\n';
    return 0;
}

// --- score / report ---------------------------------------------------------

int cmd_score(const std::string& ref_path, const std::string& hyp_path,
              const std::string& audio_dir, const std::string& method, uint64_t seed,
              const std::string& out_dir) {
    const auto refs = load_rttm_file(ref_path, LabelKind::language);
    const auto hyps = load_rttm_file(hyp_path, LabelKind::language);

    std::vector<EvalFile> runs;
    for (const auto& [fid, hyp] : hyps) {
        EvalFile ef;
        ef.file_id = fid;
        ef.hypothesis = hyp;
        const auto r = refs.find(fid);
        double extent = hyp.max_end();
        if (r != refs.end()) extent = std::max(extent, r->second.max_end());
        if (!audio_dir.empty()) {
            const fs::path wav = fs::path(audio_dir) / (fid + ".wav");
            if (!fs::exists(wav)) throw DataError("no WAV for file id '" + fid + "' in " + audio_dir);
            ef.total_audio = read_wav(wav.string()).duration();
        } else {
            ef.total_audio = extent;  // fall back to the annotated extent
        }
        runs.push_back(std::move(ef));
    }

    EvalOptions opts;
    opts.seed = seed;
    const EvalResult eval = evaluate(runs, refs, {}, opts);

    MethodReport row{method, eval.aggregate, eval.aggregate_ler, eval.aggregate_wer};
    json out;
    out["method"] = method;
    out["aggregate"] = report_json({row})[0];
    out["files"] = json::array();
    for (const FileEval& fe : eval.files) {
        json f;
        f["file_id"] = fe.file_id;
        f["LDER"] = fe.report.lder;
        f["LC"] = fe.report.lc;
        f["MS"] = fe.report.ms;
        f["FA"] = fe.report.fa;
        if (fe.ler_value) f["LER"] = *fe.ler_value;
        out["files"].push_back(std::move(f));
    }
    out["excluded"] = eval.excluded;

    std::ofstream json_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        json_file.open(fs::path(out_dir) / "score.json");
        json_file << out.dump(2) << '\n';
        std::ofstream csv(fs::path(out_dir) / "score.csv");
        csv << report_csv({row});
    }
    std::cout << report_csv({row});
    for (const std::string& ex : eval.excluded)
        std::cerr << "excluded (no reference): " << ex << '\n';
    return 0;
}

int cmd_report(const std::vector<std::string>& score_paths, const std::string& out_dir) {
    std::vector<MethodReport> rows;
    for (const std::string& path : score_paths) {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open score file: " + path);
        json j;
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw DataError("score file is not valid JSON: " + std::string(e.what()));
        }
        MethodReport row;
        row.method = j.value("method", path);
        const json& agg = j.at("aggregate");
        auto pct = [&](const char* key) -> double {
            if (agg.contains(key) && agg[key].is_string())
                return std::stod(agg[key].get<std::string>()) / 100.0;
            return 0.0;
        };
        row.diarization.lder = pct("LDER");
        row.diarization.lc = pct("LC");
        row.diarization.ms = pct("MS");
        row.diarization.fa = pct("FA");
        if (agg.contains("CI_low") && agg["CI_low"].is_string())
            row.diarization.ci_low = pct("CI_low");
        if (agg.contains("CI_high") && agg["CI_high"].is_string())
            row.diarization.ci_high = pct("CI_high");
        if (agg.contains("LER") && agg["LER"].is_string()) row.ler = pct("LER");
        if (agg.contains("WER") && agg["WER"].is_string()) {
            WerResult w;
            w.wer = pct("WER");
            row.wer = w;
        }
        rows.push_back(std::move(row));
    }
    std::ofstream out_file;
    std::ostream& os = open_output(out_file, out_dir, "report.csv");
    os << report_csv(rows);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"language diarization pipeline toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
    app.add_option("--config", config_path, "pipeline config JSON")->expected(1);
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--jobs", jobs, "worker threads for file-level parallelism");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic multilingual test set");
    std::string mode = "short", gap = "1s";
    int n_files = 60;
    double target_len = 60.0;
    bool reuse_voice = false;
    std::vector<std::string> languages = {"lang0", "lang1", "lang2"};
    synth->add_option("--mode", mode, "short | long");
    synth->add_option("--gap", gap, "1s | none");
    synth->add_option("--n-files", n_files, "number of files");
    synth->add_option("--languages", languages, "language names")->delimiter(',');
    synth->add_option("--target-len", target_len, "target speech per file, seconds");
    synth->add_flag("--reuse-voice", reuse_voice, "one voice per file (negative control)");

    // segment
    auto* segment = app.add_subcommand("segment", "speech/non-speech segmentation to RTTM");
    std::vector<std::string> seg_audio;
    std::string seg_ref_lang;
    segment->add_option("audio", seg_audio, "WAV files")->required();
    segment->add_option("--ref-language", seg_ref_lang, "reference language RTTM (oracle VAD)");

    // diarize
    auto* diarize_cmd = app.add_subcommand("diarize", "speaker diarization to RTTM");
    std::vector<std::string> dia_audio;
    std::string dia_ref_spk;
    diarize_cmd->add_option("audio", dia_audio, "WAV files")->required();
    diarize_cmd->add_option("--ref-speaker", dia_ref_spk, "reference speaker RTTM (oracle)");

    // identify
    auto* identify = app.add_subcommand("identify", "run a cascade topology");
    std::vector<std::string> id_audio;
    std::string id_ref_lang, id_ref_spk;
    identify->add_option("audio", id_audio, "WAV files")->required();
    identify->add_option("--ref-language", id_ref_lang, "reference language RTTM");
    identify->add_option("--ref-speaker", id_ref_spk, "reference speaker RTTM");

    // transcribe
    auto* transcribe = app.add_subcommand("transcribe", "route segments to transcription clients");
    std::vector<std::string> tr_audio, tr_clients;
    std::string tr_rttm, tr_policy = "fail";
    transcribe->add_option("audio", tr_audio, "WAV files")->required();
    transcribe->add_option("--hyp", tr_rttm, "language RTTM to route")->required();
    transcribe->add_option("--missing-policy", tr_policy, "skip | fail");
    transcribe->add_option("--client-languages", tr_clients,
                           "languages with a registered client (default: all)")
        ->delimiter(',');

    // score
    auto* score = app.add_subcommand("score", "score hypothesis RTTM against reference RTTM");
    std::string sc_ref, sc_hyp, sc_audio_dir, sc_method = "scored";
    score->add_option("--ref", sc_ref, "reference language RTTM")->required();
    score->add_option("--hyp", sc_hyp, "hypothesis language RTTM")->required();
    score->add_option("--audio-dir", sc_audio_dir, "directory of <file-id>.wav for durations");
    score->add_option("--method", sc_method, "method name for the report row");

    // report
    auto* report = app.add_subcommand("report", "merge score JSONs into one CSV");
    std::vector<std::string> rp_inputs;
    report->add_option("inputs", rp_inputs, "score.json files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth)
            return cmd_synth(mode, gap, n_files, languages, target_len, reuse_voice,
                             seed_set ? seed : 0,
                             out_dir.empty() ? "synth_out" : out_dir);
        const PipelineConfig cfg = load_config(config_path, seed_set, seed);
        if (*segment) return cmd_segment(cfg, seg_audio, seg_ref_lang, out_dir);
        if (*diarize_cmd) return cmd_diarize(cfg, dia_audio, dia_ref_spk, out_dir);
        if (*identify) return cmd_identify(cfg, id_audio, id_ref_lang, id_ref_spk, out_dir, jobs);
        if (*transcribe) return cmd_transcribe(tr_audio, tr_rttm, tr_policy, tr_clients, out_dir);
        if (*score) return cmd_score(sc_ref, sc_hyp, sc_audio_dir, sc_method, seed, out_dir);
        if (*report) return cmd_report(rp_inputs, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const ClientError& e) {
        std::cerr << "client error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
