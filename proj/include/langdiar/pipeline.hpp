#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "langdiar/audio.hpp"
#include "langdiar/diarizer.hpp"
#include "langdiar/metrics.hpp"
#include "langdiar/rttm.hpp"
#include "langdiar/segmenters.hpp"
#include "langdiar/sli.hpp"
#include "langdiar/synthgen.hpp"
#include "langdiar/timeline.hpp"
#include "langdiar/transcribe.hpp"

// Composition of the three cascaded language-identification systems:
//   vad_seg_sli   — speech detection, then segment classification
//   sd_seg_sli    — speaker diarization for boundaries, then segment
//                   classification on speaker turns
//   vad_frame_sli — frame posteriors, masked, smoothed, decoded inside the
//                   speech timeline
// plus batch evaluation and run-artifact emission.

namespace langdiar {

enum class Topology { vad_seg_sli, sd_seg_sli, vad_frame_sli };
enum class VadKind { oracle, energy, stitched };
enum class ComponentKind { oracle, reference };

inline const char* topology_name(Topology t) {
    switch (t) {
        case Topology::vad_seg_sli: return "vad_seg_sli";
        case Topology::sd_seg_sli: return "sd_seg_sli";
        case Topology::vad_frame_sli: return "vad_frame_sli";
    }
    return "?";
}

struct PipelineConfig {
    Topology topology = Topology::vad_seg_sli;
    VadKind vad = VadKind::energy;
    ComponentKind local_diarizer = ComponentKind::reference;
    ComponentKind embedder = ComponentKind::reference;
    ComponentKind classifier = ComponentKind::reference;

    std::vector<std::string> languages;
    std::vector<std::string> class_mask;  // empty -> all languages allowed

    int slots = 3;
    double chunk_len = 30.0;
    double speech_activity_threshold = 0.5;
    double linkage_threshold = 0.15;
    double energy_threshold_db = -30.0;
    int hangover = 0;
    long smoothing_window = 200;
    double min_segment_len = 1.0;
    double max_segment_len = 20.0;
    bool merge_same_label = false;

    double train_seconds_per_language = 24.0;
    int train_voices = 4;
    uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Config <-> JSON
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T parse_enum(const std::string& v, const std::vector<std::pair<std::string, T>>& table,
             const char* what) {
    for (const auto& [name, value] : table)
        if (name == v) return value;
    throw ConfigError(std::string("unknown ") + what + " '" + v + "'");
}

inline const std::vector<std::pair<std::string, Topology>>& topology_table() {
    static const std::vector<std::pair<std::string, Topology>> t = {
        {"vad_seg_sli", Topology::vad_seg_sli},
        {"sd_seg_sli", Topology::sd_seg_sli},
        {"vad_frame_sli", Topology::vad_frame_sli}};
    return t;
}
inline const std::vector<std::pair<std::string, VadKind>>& vad_table() {
    static const std::vector<std::pair<std::string, VadKind>> t = {
        {"oracle", VadKind::oracle}, {"energy", VadKind::energy}, {"stitched", VadKind::stitched}};
    return t;
}
inline const std::vector<std::pair<std::string, ComponentKind>>& component_table() {
    static const std::vector<std::pair<std::string, ComponentKind>> t = {
        {"oracle", ComponentKind::oracle}, {"reference", ComponentKind::reference}};
    return t;
}

template <typename T>
std::string enum_name(T v, const std::vector<std::pair<std::string, T>>& table) {
    for (const auto& [name, value] : table)
        if (value == v) return name;
    return "?";
}

} // namespace detail

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["topology"] = detail::enum_name(c.topology, detail::topology_table());
    j["vad"] = detail::enum_name(c.vad, detail::vad_table());
    j["local_diarizer"] = detail::enum_name(c.local_diarizer, detail::component_table());
    j["embedder"] = detail::enum_name(c.embedder, detail::component_table());
    j["classifier"] = detail::enum_name(c.classifier, detail::component_table());
    j["languages"] = c.languages;
    j["class_mask"] = c.class_mask;
    j["slots"] = c.slots;
    j["chunk_len"] = c.chunk_len;
    j["speech_activity_threshold"] = c.speech_activity_threshold;
    j["linkage_threshold"] = c.linkage_threshold;
    j["energy_threshold_db"] = c.energy_threshold_db;
    j["hangover"] = c.hangover;
    j["smoothing_window"] = c.smoothing_window;
    j["min_segment_len"] = c.min_segment_len;
    j["max_segment_len"] = c.max_segment_len;
    j["merge_same_label"] = c.merge_same_label;
    j["train_seconds_per_language"] = c.train_seconds_per_language;
    j["train_voices"] = c.train_voices;
    j["seed"] = c.seed;
    return j;
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        static const std::vector<std::string> known = {
            "topology", "vad", "local_diarizer", "embedder", "classifier", "languages",
            "class_mask", "slots", "chunk_len", "speech_activity_threshold", "linkage_threshold",
            "energy_threshold_db", "hangover", "smoothing_window", "min_segment_len",
            "max_segment_len", "merge_same_label", "train_seconds_per_language", "train_voices",
            "seed"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ConfigError("unknown config key '" + it.key() + "'");

        if (j.contains("topology"))
            c.topology = detail::parse_enum(j["topology"].get<std::string>(),
                                            detail::topology_table(), "topology");
        if (j.contains("vad"))
            c.vad = detail::parse_enum(j["vad"].get<std::string>(), detail::vad_table(), "vad");
        if (j.contains("local_diarizer"))
            c.local_diarizer = detail::parse_enum(j["local_diarizer"].get<std::string>(),
                                                  detail::component_table(), "local diarizer");
        if (j.contains("embedder"))
            c.embedder = detail::parse_enum(j["embedder"].get<std::string>(),
                                            detail::component_table(), "embedder");
        if (j.contains("classifier"))
            c.classifier = detail::parse_enum(j["classifier"].get<std::string>(),
                                              detail::component_table(), "classifier");
        if (j.contains("languages")) c.languages = j["languages"].get<std::vector<std::string>>();
        if (j.contains("class_mask")) c.class_mask = j["class_mask"].get<std::vector<std::string>>();
        if (j.contains("slots")) c.slots = j["slots"].get<int>();
        if (j.contains("chunk_len")) c.chunk_len = j["chunk_len"].get<double>();
        if (j.contains("speech_activity_threshold"))
            c.speech_activity_threshold = j["speech_activity_threshold"].get<double>();
        if (j.contains("linkage_threshold")) c.linkage_threshold = j["linkage_threshold"].get<double>();
        if (j.contains("energy_threshold_db"))
            c.energy_threshold_db = j["energy_threshold_db"].get<double>();
        if (j.contains("hangover")) c.hangover = j["hangover"].get<int>();
        if (j.contains("smoothing_window")) c.smoothing_window = j["smoothing_window"].get<long>();
        if (j.contains("min_segment_len")) c.min_segment_len = j["min_segment_len"].get<double>();
        if (j.contains("max_segment_len")) c.max_segment_len = j["max_segment_len"].get<double>();
        if (j.contains("merge_same_label")) c.merge_same_label = j["merge_same_label"].get<bool>();
        if (j.contains("train_seconds_per_language"))
            c.train_seconds_per_language = j["train_seconds_per_language"].get<double>();
        if (j.contains("train_voices")) c.train_voices = j["train_voices"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (c.languages.empty()) throw ConfigError("config needs a non-empty language list");
    if (c.slots < 1) throw ConfigError("slots must be >= 1");
    if (!(c.min_segment_len < c.max_segment_len))
        throw ConfigError("min_segment_len must be below max_segment_len");
    if (c.smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
    for (const std::string& m : c.class_mask)
        if (std::find(c.languages.begin(), c.languages.end(), m) == c.languages.end())
            throw ConfigError("class_mask names unknown language '" + m + "'");
    return c;
}

inline uint64_t config_hash(const PipelineConfig& c) {
    const std::string s = config_to_json(c).dump();
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Per-file input and run output
// ---------------------------------------------------------------------------

struct FileInput {
    std::string file_id;
    AudioBuffer audio;
    std::optional<LabeledAnnotation> ref_language;
    std::optional<LabeledAnnotation> ref_speaker;
};

struct RunOutput {
    LabeledAnnotation hypothesis;
    long n_segments = 0;
    std::vector<std::string> warnings;
    double wall_ms = 0.0;
};

// Re-expresses an annotation in `target` ids, matching labels by name.
inline LabeledAnnotation remap_annotation(const LabeledAnnotation& ann, const LabelSpace& target) {
    LabeledAnnotation out;
    out.space = target;
    out.file_id = ann.file_id;
    for (const AnnEntry& e : ann.entries)
        out.entries.push_back({e.seg, target.require(ann.space.name_of(e.label))});
    return out;
}

// ---------------------------------------------------------------------------
// Speech detectors
// ---------------------------------------------------------------------------

class SpeechDetector {
public:
    virtual ~SpeechDetector() = default;
    virtual Timeline detect(const AudioBuffer& audio) const = 0;
};

class EnergyVadDetector : public SpeechDetector {
public:
    explicit EnergyVadDetector(VadConfig cfg) : cfg_(cfg) {}
    Timeline detect(const AudioBuffer& audio) const override { return energy_vad(audio, cfg_); }

private:
    VadConfig cfg_;
};

class OracleVadDetector : public SpeechDetector {
public:
    explicit OracleVadDetector(Timeline support) : support_(std::move(support)) {}
    Timeline detect(const AudioBuffer&) const override { return support_; }

private:
    Timeline support_;
};

// Speech/non-speech from the local diarizer's activity tracks, stitched
// across chunks without clustering.
class StitchedVadDetector : public SpeechDetector {
public:
    StitchedVadDetector(const LocalDiarizer& local, double threshold, double chunk_len)
        : local_(local), threshold_(threshold), chunk_len_(chunk_len) {}

    Timeline detect(const AudioBuffer& audio) const override {
        std::vector<ChunkResult> results;
        for (const Chunk& ch : chunk_audio(audio, chunk_len_))
            results.push_back(local_.diarize_chunk(audio, ch));
        return stitch_local_vad(results, threshold_);
    }

private:
    const LocalDiarizer& local_;
    double threshold_;
    double chunk_len_;
};

// ---------------------------------------------------------------------------
// Pipeline runner
// ---------------------------------------------------------------------------

// Trains shared reference components once, then builds per-file oracle
// components on demand. Immutable after construction; run_file is safe to
// call concurrently.
class PipelineRunner {
public:
    explicit PipelineRunner(PipelineConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.languages.empty()) throw ConfigError("pipeline needs a language list");
        languages_.kind = LabelKind::language;
        languages_.names = cfg_.languages;
        mask_.allowed = cfg_.class_mask.empty() ? cfg_.languages : cfg_.class_mask;
        if (cfg_.classifier == ComponentKind::reference) model_ = train_model();
    }

    const LabelSpace& languages() const { return languages_; }
    const PipelineConfig& config() const { return cfg_; }
    const LanguageModelRef& model() const {
        if (!model_) throw ConfigError("no reference model trained (oracle classifier configured)");
        return *model_;
    }

    RunOutput run_file(const FileInput& file) const {
        const auto t0 = std::chrono::steady_clock::now();
        RunOutput out;
        switch (cfg_.topology) {
            case Topology::vad_seg_sli: out = run_vad_seg(file); break;
            case Topology::sd_seg_sli: out = run_sd_seg(file); break;
            case Topology::vad_frame_sli: out = run_frame(file); break;
        }
        out.hypothesis.file_id = file.file_id;
        out.hypothesis.sort_entries();
        out.n_segments = static_cast<long>(out.hypothesis.entries.size());
        out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                t0).count();
        return out;
    }

private:
    VadConfig vad_config() const {
        VadConfig v;
        v.energy_threshold_db = cfg_.energy_threshold_db;
        v.speech_activity_threshold = cfg_.speech_activity_threshold;
        v.hangover = cfg_.hangover;
        return v;
    }

    LanguageModelRef train_model() const {
        Voicebank bank;
        std::vector<std::pair<AudioBuffer, LabeledAnnotation>> data;
        const long units_per_voice = std::max<long>(
            100, std::llround(cfg_.train_seconds_per_language /
                              std::max(1, cfg_.train_voices) * kUnitsPerSecond));
        const uint64_t train_seed = splitmix64(cfg_.seed ^ 0x747261696e5f4cULL);
        for (size_t l = 0; l < cfg_.languages.size(); ++l) {
            for (int v = 0; v < std::max(1, cfg_.train_voices); ++v) {
                AudioBuffer audio;
                audio.sample_rate = bank.sample_rate;
                audio.samples = bank.render_segment(
                    static_cast<int>(l), v, units_per_voice,
                    splitmix64(train_seed ^ splitmix64(l * 131 + v + 1)));
                LabeledAnnotation ann;
                ann.space = languages_;
                ann.file_id = "train";
                ann.entries.push_back({{0.0, audio.duration()}, static_cast<int>(l)});
                data.push_back({std::move(audio), std::move(ann)});
            }
        }
        return train_reference_classifier(data, languages_);
    }

    std::unique_ptr<LocalDiarizer> make_local_diarizer(const FileInput& file) const {
        if (cfg_.local_diarizer == ComponentKind::oracle) {
            if (!file.ref_speaker)
                throw DataError("file '" + file.file_id +
                                "': oracle local diarizer needs a reference speaker annotation");
            return std::make_unique<OracleLocalDiarizer>(*file.ref_speaker, cfg_.slots);
        }
        return std::make_unique<ReferenceLocalDiarizer>(cfg_.slots, vad_config());
    }

    std::unique_ptr<Embedder> make_embedder(const FileInput& file) const {
        if (cfg_.embedder == ComponentKind::oracle) {
            if (!file.ref_speaker)
                throw DataError("file '" + file.file_id +
                                "': oracle embedder needs a reference speaker annotation");
            return std::make_unique<OracleEmbedder>(*file.ref_speaker);
        }
        return std::make_unique<LogMelStatsEmbedder>();
    }

    std::unique_ptr<SegmentClassifier> make_segment_classifier(const FileInput& file) const {
        if (cfg_.classifier == ComponentKind::oracle) {
            if (!file.ref_language)
                throw DataError("file '" + file.file_id +
                                "': oracle classifier needs a reference language annotation");
            // classify in the configured language space so masking works even
            // when this file doesn't exercise every language
            return std::make_unique<OracleSegmentClassifier>(
                remap_annotation(*file.ref_language, languages_));
        }
        return std::make_unique<ReferenceSegmentClassifier>(*model_);
    }

    std::unique_ptr<FrameClassifier> make_frame_classifier(const FileInput& file) const {
        if (cfg_.classifier == ComponentKind::oracle) {
            if (!file.ref_language)
                throw DataError("file '" + file.file_id +
                                "': oracle classifier needs a reference language annotation");
            return std::make_unique<OracleFrameClassifier>(
                remap_annotation(*file.ref_language, languages_));
        }
        return std::make_unique<ReferenceFrameClassifier>(*model_);
    }

    std::unique_ptr<SpeechDetector> make_vad(const FileInput& file,
                                             const LocalDiarizer* local) const {
        switch (cfg_.vad) {
            case VadKind::oracle:
                if (!file.ref_language)
                    throw DataError("file '" + file.file_id +
                                    "': oracle VAD needs a reference language annotation");
                return std::make_unique<OracleVadDetector>(flatten(*file.ref_language).support());
            case VadKind::energy:
                return std::make_unique<EnergyVadDetector>(vad_config());
            case VadKind::stitched:
                if (!local) throw ConfigError("stitched VAD needs a local diarizer");
                return std::make_unique<StitchedVadDetector>(*local, cfg_.speech_activity_threshold,
                                                             cfg_.chunk_len);
        }
        throw ConfigError("unreachable vad kind");
    }

    // Classify one segment, apply the class mask, take the argmax (ties to
    // the lowest index) and map the winner into the pipeline language space.
    int label_segment(const SegmentClassifier& cls, const AudioBuffer& audio,
                      const Segment& seg) const {
        std::vector<double> p = cls.classify(audio, seg);
        p = mask_posteriors(p, mask_, cls.languages());
        int best = 0;
        for (int l = 1; l < static_cast<int>(p.size()); ++l)
            if (p[l] > p[best]) best = l;
        return languages_.require(cls.languages().name_of(best));
    }

    LabeledAnnotation classify_segments(const std::vector<Segment>& segments,
                                        const SegmentClassifier& cls,
                                        const AudioBuffer& audio) const {
        LabeledAnnotation hyp;
        hyp.space = languages_;
        for (const Segment& seg : segments)
            hyp.entries.push_back({seg, label_segment(cls, audio, seg)});
        if (cfg_.merge_same_label) {
            LabeledAnnotation merged;
            merged.space = hyp.space;
            for (const AnnEntry& e : hyp.entries) {
                if (!merged.entries.empty() && merged.entries.back().label == e.label &&
                    e.seg.start < merged.entries.back().seg.end + kMergeTol)
                    merged.entries.back().seg.end = std::max(merged.entries.back().seg.end,
                                                             e.seg.end);
                else
                    merged.entries.push_back(e);
            }
            return merged;
        }
        return hyp;
    }

    RunOutput run_vad_seg(const FileInput& file) const {
        RunOutput out;
        std::unique_ptr<LocalDiarizer> local;
        if (cfg_.vad == VadKind::stitched) local = make_local_diarizer(file);
        const std::unique_ptr<SpeechDetector> vad = make_vad(file, local.get());
        const std::unique_ptr<SegmentClassifier> cls = make_segment_classifier(file);
        const Timeline speech =
            postprocess_segments(vad->detect(file.audio), cfg_.min_segment_len,
                                 cfg_.max_segment_len);
        out.hypothesis = classify_segments(speech.segments, *cls, file.audio);
        return out;
    }

    RunOutput run_sd_seg(const FileInput& file) const {
        RunOutput out;
        const std::unique_ptr<LocalDiarizer> local = make_local_diarizer(file);
        const std::unique_ptr<Embedder> emb = make_embedder(file);
        const std::unique_ptr<SegmentClassifier> cls = make_segment_classifier(file);
        DiarizeConfig dcfg;
        dcfg.chunk_len = cfg_.chunk_len;
        dcfg.speech_activity_threshold = cfg_.speech_activity_threshold;
        dcfg.linkage_threshold = cfg_.linkage_threshold;
        DiarizeOutput diar = diarize(file.audio, *local, *emb, dcfg);
        out.warnings = diar.warnings;
        Timeline turns;
        turns.segments = speaker_change_segments(diar.speakers);
        const Timeline segs =
            postprocess_segments(turns, cfg_.min_segment_len, cfg_.max_segment_len);
        out.hypothesis = classify_segments(segs.segments, *cls, file.audio);
        return out;
    }

    RunOutput run_frame(const FileInput& file) const {
        RunOutput out;
        std::unique_ptr<LocalDiarizer> local;
        if (cfg_.vad == VadKind::stitched) local = make_local_diarizer(file);
        const std::unique_ptr<SpeechDetector> vad = make_vad(file, local.get());
        const std::unique_ptr<FrameClassifier> cls = make_frame_classifier(file);
        PosteriorTrack track = cls->posteriors(file.audio);
        track = mask_posteriors(track, mask_);
        track = smooth(track, cfg_.smoothing_window);
        LabeledAnnotation decoded = decode_frames(track, vad->detect(file.audio));
        // Decoded labels live in the classifier's space; remap by name.
        out.hypothesis.space = languages_;
        for (const AnnEntry& e : decoded.entries)
            out.hypothesis.entries.push_back(
                {e.seg, languages_.require(decoded.space.name_of(e.label))});
        return out;
    }

    PipelineConfig cfg_;
    LabelSpace languages_;
    ClassMask mask_;
    std::optional<LanguageModelRef> model_;
};

// ---------------------------------------------------------------------------
// Bounded-worker parallel map with deterministic output order
// ---------------------------------------------------------------------------

template <typename Out, typename In, typename Fn>
std::vector<Out> parallel_map(const std::vector<In>& inputs, int jobs, Fn fn) {
    std::vector<Out> results(inputs.size());
    if (inputs.empty()) return results;
    jobs = std::max(1, std::min<int>(jobs, static_cast<int>(inputs.size())));
    if (jobs == 1) {
        for (size_t i = 0; i < inputs.size(); ++i) results[i] = fn(inputs[i]);
        return results;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= inputs.size()) return;
                try {
                    results[i] = fn(inputs[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

struct EvalFile {
    std::string file_id;
    LabeledAnnotation hypothesis;
    double total_audio = 0.0;
    std::optional<std::vector<std::string>> hyp_tokens;
};

struct FileEval {
    std::string file_id;
    MetricReport report;
    std::optional<double> ler_value;
    std::optional<WerResult> wer_result;
};

struct EvalOptions {
    bool with_bootstrap = true;
    int bootstrap_n = 1000;
    double coverage = 0.95;
    uint64_t seed = 0;
};

struct EvalResult {
    std::vector<FileEval> files;
    MetricReport aggregate;
    std::optional<double> aggregate_ler;
    std::optional<WerResult> aggregate_wer;
    std::vector<std::string> excluded;  // hypothesis files without a reference
};

// Per-file LDER/LER (plus WER when reference transcripts are given) and the
// duration-weighted aggregate: component seconds pooled over files, which
// equals pooling all frames and computing once. Bootstrap CIs are computed
// on the pooled 10 ms frame labels.
inline EvalResult evaluate(
    std::vector<EvalFile> runs, const std::map<std::string, LabeledAnnotation>& refs,
    const std::map<std::string, std::vector<std::string>>& ref_tokens = {},
    const EvalOptions& opts = {}) {
    std::sort(runs.begin(), runs.end(),
              [](const EvalFile& a, const EvalFile& b) { return a.file_id < b.file_id; });

    EvalResult out;
    double lc_s = 0.0, ms_s = 0.0, fa_s = 0.0, total_s = 0.0, scored_s = 0.0;
    double confused_s = 0.0, hyp_speech_s = 0.0;
    WerResult pooled_wer;
    bool any_wer = false;

    // Pooled label space so frame labels from different files can share ids.
    LabelSpace pooled;
    pooled.kind = LabelKind::language;
    for (const auto& run : runs) {
        const auto it = refs.find(run.file_id);
        if (it == refs.end()) continue;
        for (const auto& name : it->second.space.names)
            if (pooled.id_of(name) < 0) pooled.names.push_back(name);
        for (const auto& name : run.hypothesis.space.names)
            if (pooled.id_of(name) < 0) pooled.names.push_back(name);
    }
    std::sort(pooled.names.begin(), pooled.names.end());

    std::vector<int> pooled_ref_frames, pooled_hyp_frames;
    auto append_frames = [&](const LabeledAnnotation& flat, double total, std::vector<int>& dst) {
        LabeledAnnotation mapped;
        mapped.space = pooled;
        mapped.file_id = flat.file_id;
        for (const AnnEntry& e : flat.entries)
            mapped.entries.push_back({e.seg, pooled.require(flat.space.name_of(e.label))});
        const std::vector<int> f = to_frames(mapped, kFrameRate, total);
        dst.insert(dst.end(), f.begin(), f.end());
    };

    for (const EvalFile& run : runs) {
        const auto it = refs.find(run.file_id);
        if (it == refs.end()) {
            out.excluded.push_back(run.file_id);
            continue;
        }
        const LabeledAnnotation ref_flat = flatten(it->second);
        const LabeledAnnotation hyp_flat = flatten(run.hypothesis);

        FileEval fe;
        fe.file_id = run.file_id;
        fe.report = lder(ref_flat, hyp_flat, run.total_audio);
        fe.ler_value = ler(ref_flat, hyp_flat);

        lc_s += fe.report.lc * run.total_audio;
        ms_s += fe.report.ms * run.total_audio;
        fa_s += fe.report.fa * run.total_audio;
        total_s += run.total_audio;
        scored_s += fe.report.scored_speech;
        for (const auto& [name, seconds] : fe.report.per_language_confusion)
            out.aggregate.per_language_confusion[name] += seconds;
        confused_s += confusion_seconds(ref_flat, hyp_flat);
        hyp_speech_s += hyp_flat.support().duration();

        if (run.hyp_tokens) {
            const auto rt = ref_tokens.find(run.file_id);
            if (rt != ref_tokens.end()) {
                fe.wer_result = wer(rt->second, *run.hyp_tokens);
                pooled_wer.substitutions += fe.wer_result->substitutions;
                pooled_wer.insertions += fe.wer_result->insertions;
                pooled_wer.deletions += fe.wer_result->deletions;
                pooled_wer.ref_words += fe.wer_result->ref_words;
                any_wer = true;
            }
        }

        if (opts.with_bootstrap) {
            append_frames(ref_flat, run.total_audio, pooled_ref_frames);
            append_frames(hyp_flat, run.total_audio, pooled_hyp_frames);
        }
        out.files.push_back(std::move(fe));
    }

    if (total_s > 0.0) {
        out.aggregate.lc = lc_s / total_s;
        out.aggregate.ms = ms_s / total_s;
        out.aggregate.fa = fa_s / total_s;
        out.aggregate.lder = out.aggregate.lc + out.aggregate.ms + out.aggregate.fa;
        out.aggregate.total_audio = total_s;
        out.aggregate.scored_speech = scored_s;
    }
    if (hyp_speech_s > 0.0) out.aggregate_ler = confused_s / hyp_speech_s;
    if (any_wer) {
        pooled_wer.wer = static_cast<double>(pooled_wer.substitutions + pooled_wer.insertions +
                                             pooled_wer.deletions) /
                         static_cast<double>(std::max<long>(1, pooled_wer.ref_words));
        out.aggregate_wer = pooled_wer;
    }
    if (opts.with_bootstrap && !pooled_ref_frames.empty()) {
        const auto [lo, hi] = bootstrap_ci(pooled_ref_frames, pooled_hyp_frames,
                                           FrameMetric::lder, opts.bootstrap_n, opts.seed,
                                           opts.coverage);
        out.aggregate.ci_low = lo;
        out.aggregate.ci_high = hi;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run artifacts
// ---------------------------------------------------------------------------

inline std::string run_dir_name(const PipelineConfig& cfg) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "run-%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    return buf;
}

// Writes hypothesis.rttm, report.csv, report.json and run.log under
// <out_dir>/<run-dir>; returns the run directory.
inline std::string write_run_artifacts(const std::string& out_dir, const PipelineConfig& cfg,
                                       const std::vector<EvalFile>& runs, const EvalResult& eval,
                                       const std::vector<std::string>& log_lines = {}) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(out_dir) / run_dir_name(cfg);
    fs::create_directories(dir);

    std::vector<const EvalFile*> ordered;
    for (const auto& r : runs) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const EvalFile* a, const EvalFile* b) { return a->file_id < b->file_id; });

    {
        std::ofstream rttm(dir / "hypothesis.rttm");
        for (const EvalFile* r : ordered) write_rttm(rttm, r->hypothesis);
    }
    {
        MethodReport row;
        row.method = topology_name(cfg.topology);
        row.diarization = eval.aggregate;
        row.ler = eval.aggregate_ler;
        row.wer = eval.aggregate_wer;
        std::ofstream csv(dir / "report.csv");
        csv << report_csv({row});

        nlohmann::json j;
        j["config"] = config_to_json(cfg);
        j["aggregate"] = report_json({row})[0];
        j["files"] = nlohmann::json::array();
        for (const FileEval& fe : eval.files) {
            nlohmann::json f;
            f["file_id"] = fe.file_id;
            f["LDER"] = fe.report.lder;
            f["LC"] = fe.report.lc;
            f["MS"] = fe.report.ms;
            f["FA"] = fe.report.fa;
            if (fe.ler_value) f["LER"] = *fe.ler_value;
            if (fe.wer_result) f["WER"] = fe.wer_result->wer;
            j["files"].push_back(std::move(f));
        }
        j["excluded"] = eval.excluded;
        std::ofstream json_out(dir / "report.json");
        json_out << j.dump(2) << '\n';
    }
    {
        std::ofstream log(dir / "run.log");
        log << "config " << run_dir_name(cfg) << " topology "
            << topology_name(cfg.topology) << " seed " << cfg.seed << '\n';
        for (const std::string& line : log_lines) log << line << '\n';
    }
    return (dir).string();
}

} // namespace langdiar
