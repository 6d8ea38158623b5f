#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "langdiar/audio.hpp"
#include "langdiar/features.hpp"
#include "langdiar/metrics.hpp"  // splitmix64
#include "langdiar/timeline.hpp"

// Synthetic multilingual test material: files of concatenated "monolingual"
// segments with exact ground-truth language and speaker annotations, either
// rendered from parametric signals or cut from a monolingual corpus.
//
// Synthetic languages and voices are spectral signatures, not speech: a
// language owns one low/mid mel band, a voice adds a pattern over the high
// mel bands plus syllabic amplitude modulation. Segment durations and gaps
// are quantized to the 10 ms frame grid, so every ground-truth boundary is
// exactly representable at the analysis frame rate.

namespace langdiar {

enum class MixMode { short_segments, long_segments };
enum class GapMode { none, one_second };

inline constexpr long kUnitsPerSecond = 100;  // 10 ms units

struct MixSpec {
    MixMode mode = MixMode::short_segments;
    GapMode gap = GapMode::one_second;
    int n_files = 60;
    double target_file_len = 60.0;  // cumulative speech, seconds
    std::vector<std::string> languages;
    uint64_t seed = 0;
    bool reuse_voice = false;  // one voice for the whole file (negative control)
};

struct MixEntry {
    int language = 0;  // index into the language space
    int voice = 0;
    long duration_units = 0;
    uint64_t render_seed = 0;
};

struct MixPlaylist {
    std::string file_id;
    LabelSpace languages;
    std::vector<MixEntry> entries;
    long gap_units = 0;

    long total_units() const {
        long u = 0;
        for (const auto& e : entries) u += e.duration_units;
        if (!entries.empty()) u += gap_units * static_cast<long>(entries.size() - 1);
        return u;
    }
    double total_duration() const { return static_cast<double>(total_units()) / kUnitsPerSecond; }

    // Segment k starts at sum of previous durations plus k gaps. Consecutive
    // same-language segments merge when they abut (no-gap mode).
    LabeledAnnotation language_truth() const {
        LabeledAnnotation ann;
        ann.space = languages;
        ann.file_id = file_id;
        long cursor = 0;
        for (size_t k = 0; k < entries.size(); ++k) {
            const long s = cursor, e = cursor + entries[k].duration_units;
            const Segment seg{static_cast<double>(s) / kUnitsPerSecond,
                              static_cast<double>(e) / kUnitsPerSecond};
            if (!ann.entries.empty() && gap_units == 0 &&
                ann.entries.back().label == entries[k].language &&
                ann.entries.back().seg.end == seg.start) {
                ann.entries.back().seg.end = seg.end;
            } else {
                ann.entries.push_back({seg, entries[k].language});
            }
            cursor = e + gap_units;
        }
        return ann;
    }

    LabeledAnnotation speaker_truth() const {
        LabeledAnnotation ann;
        ann.space.kind = LabelKind::speaker;
        ann.file_id = file_id;
        std::vector<int> voice_label;
        for (const auto& e : entries) {
            char name[32];
            std::snprintf(name, sizeof(name), "v%d", e.voice);
            int id = ann.space.id_of(name);
            if (id < 0) {
                id = ann.space.size();
                ann.space.names.push_back(name);
            }
            voice_label.push_back(id);
        }
        long cursor = 0;
        for (size_t k = 0; k < entries.size(); ++k) {
            const long s = cursor, e = cursor + entries[k].duration_units;
            const Segment seg{static_cast<double>(s) / kUnitsPerSecond,
                              static_cast<double>(e) / kUnitsPerSecond};
            if (!ann.entries.empty() && gap_units == 0 &&
                ann.entries.back().label == voice_label[k] &&
                ann.entries.back().seg.end == seg.start) {
                ann.entries.back().seg.end = seg.end;
            } else {
                ann.entries.push_back({seg, voice_label[k]});
            }
            cursor = e + gap_units;
        }
        return ann;
    }
};

// Languages drawn uniformly i.i.d., durations uniform on the mode's range
// (on the 10 ms grid); segments are added until cumulative speech reaches
// the target, the last one kept whole. Deterministic given the seed.
inline std::vector<MixPlaylist> make_mix_playlists(const MixSpec& spec) {
    if (spec.languages.empty()) throw ConfigError("mix spec needs at least one language");
    if (spec.n_files < 1) throw ConfigError("mix spec needs at least one file");
    if (!(spec.target_file_len > 0)) throw ConfigError("target file length must be positive");

    const long lo_units = spec.mode == MixMode::short_segments ? 500 : 1500;
    const long hi_units = spec.mode == MixMode::short_segments ? 1500 : 4500;
    const long target_units = std::llround(spec.target_file_len * kUnitsPerSecond);
    const long gap_units = spec.gap == GapMode::one_second ? kUnitsPerSecond : 0;

    const char* mode_tag = spec.mode == MixMode::short_segments ? "short" : "long";
    const char* gap_tag = spec.gap == GapMode::one_second ? "gap1s" : "nogap";

    std::vector<MixPlaylist> out;
    for (int f = 0; f < spec.n_files; ++f) {
        MixPlaylist pl;
        char id[96];
        std::snprintf(id, sizeof(id), "mix_%s_%s_s%llu_f%03d", mode_tag, gap_tag,
                      static_cast<unsigned long long>(spec.seed), f);
        pl.file_id = id;
        pl.languages.kind = LabelKind::language;
        pl.languages.names = spec.languages;
        pl.gap_units = gap_units;

        std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<uint64_t>(f) + 1)));
        const uint64_t file_render_seed = rng();
        const int file_voice = spec.reuse_voice ? static_cast<int>(rng() % 7) : 0;
        long speech_units = 0;
        while (speech_units < target_units) {
            MixEntry e;
            e.language = static_cast<int>(rng() % spec.languages.size());
            e.duration_units = lo_units + static_cast<long>(rng() % (hi_units - lo_units + 1));
            e.voice = spec.reuse_voice ? file_voice : static_cast<int>(pl.entries.size());
            e.render_seed = splitmix64(file_render_seed ^ splitmix64(pl.entries.size() + 1));
            speech_units += e.duration_units;
            pl.entries.push_back(e);
        }
        out.push_back(std::move(pl));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parametric voice bank
// ---------------------------------------------------------------------------

namespace detail {

// RBJ constant-peak-gain bandpass biquad.
struct Biquad {
    double b0, b1, b2, a1, a2;
    double z1 = 0.0, z2 = 0.0;

    static Biquad bandpass(double f0, double q, double fs) {
        const double w0 = 2.0 * M_PI * f0 / fs;
        const double alpha = std::sin(w0) / (2.0 * q);
        const double a0 = 1.0 + alpha;
        Biquad b{alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
        return b;
    }
    double step(double x) {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return y;
    }
};

inline double unit_noise(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) / 4503599627370496.0) - 1.0;  // [-1, 1)
}

} // namespace detail

// Maps (language index, voice id) to a deterministic band-noise signature.
// Languages occupy one of four low/mid mel bands; voices a binary pattern
// over the three highest mel bands, plus a voice-specific modulation rate.
struct Voicebank {
    int sample_rate = 16000;
    double amplitude = 0.12;
    double voice_band_gain = 0.6;
    double am_depth = 0.8;

    std::vector<float> render_segment(int language, int voice, long duration_units,
                                      uint64_t seed) const {
        if (language < 0) throw DataError("unknown language index in voice bank");
        if (voice < 0) throw DataError("unknown voice id in voice bank");
        const MelFilterbank fb = MelFilterbank::make(sample_rate);
        const long n = duration_units * (sample_rate / static_cast<int>(kUnitsPerSecond));
        std::vector<float> out(n, 0.0f);
        if (n == 0) return out;

        std::mt19937_64 rng(splitmix64(seed));

        struct Component { double center, gain; };
        std::vector<Component> comps;
        comps.push_back({fb.band_center_hz[1 + language % 4], 1.0});
        const int pattern = 1 + (voice % 7);  // non-empty subset of bands {5,6,7}
        const int popcount = __builtin_popcount(static_cast<unsigned>(pattern));
        for (int b = 0; b < 3; ++b)
            if (pattern & (1 << b))
                comps.push_back({fb.band_center_hz[5 + b],
                                 voice_band_gain / std::sqrt(static_cast<double>(popcount))});

        const double am_rate = 3.5 + 1.5 * ((voice * 2654435761ULL) % 997) / 997.0;
        const double am_phase = 2.0 * M_PI * (static_cast<double>(rng() % 10000) / 10000.0);

        std::vector<double> mix(n, 0.0);
        std::vector<double> band(n);
        for (const Component& c : comps) {
            detail::Biquad f1 = detail::Biquad::bandpass(c.center, 4.0, sample_rate);
            detail::Biquad f2 = f1;
            std::mt19937_64 noise_rng(rng());
            for (int w = 0; w < 500; ++w)  // settle the filters
                f2.step(f1.step(detail::unit_noise(noise_rng)));
            double energy = 0.0;
            for (long i = 0; i < n; ++i) {
                band[i] = f2.step(f1.step(detail::unit_noise(noise_rng)));
                energy += band[i] * band[i];
            }
            const double rms = std::sqrt(energy / static_cast<double>(n));
            const double norm = rms > 0.0 ? c.gain / rms : 0.0;
            for (long i = 0; i < n; ++i) mix[i] += band[i] * norm;
        }
        for (long i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            const double am =
                1.0 - am_depth * 0.5 + am_depth * 0.5 * std::sin(2.0 * M_PI * am_rate * t + am_phase);
            out[i] = static_cast<float>(mix[i] * am * amplitude);
        }
        return out;
    }
};

// Renders a playlist into a waveform plus exact language and speaker
// annotations; gaps are digital silence.
struct RenderedMix {
    AudioBuffer audio;
    LabeledAnnotation ref_language;
    LabeledAnnotation ref_speaker;
};

inline RenderedMix render_synthetic_audio(const MixPlaylist& playlist, const Voicebank& bank) {
    RenderedMix out;
    out.audio.sample_rate = bank.sample_rate;
    const int spu = bank.sample_rate / static_cast<int>(kUnitsPerSecond);
    out.audio.samples.assign(static_cast<size_t>(playlist.total_units()) * spu, 0.0f);
    long cursor_units = 0;
    for (const MixEntry& e : playlist.entries) {
        const std::vector<float> seg =
            bank.render_segment(e.language, e.voice, e.duration_units, e.render_seed);
        std::copy(seg.begin(), seg.end(), out.audio.samples.begin() + cursor_units * spu);
        cursor_units += e.duration_units + playlist.gap_units;
    }
    out.ref_language = playlist.language_truth();
    out.ref_speaker = playlist.speaker_truth();
    return out;
}

// Cuts each playlist entry from a random source file of its language at a
// random offset (seeded); excerpts never cross file boundaries.
inline std::pair<AudioBuffer, LabeledAnnotation> concat_from_corpus(
    const std::vector<std::pair<AudioBuffer, std::string>>& corpus, const MixPlaylist& playlist,
    uint64_t seed) {
    if (corpus.empty()) throw DataError("empty monolingual corpus");
    const int rate = corpus.front().first.sample_rate;
    for (const auto& [audio, lang] : corpus)
        if (audio.sample_rate != rate)
            throw DataError("corpus files disagree on sample rate");

    std::vector<std::vector<size_t>> by_language(playlist.languages.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        const int id = playlist.languages.id_of(corpus[i].second);
        if (id >= 0) by_language[id].push_back(i);
    }

    const int spu = rate / static_cast<int>(kUnitsPerSecond);
    AudioBuffer out;
    out.sample_rate = rate;
    out.samples.assign(static_cast<size_t>(playlist.total_units()) * spu, 0.0f);
    std::mt19937_64 rng(splitmix64(seed));
    long cursor_units = 0;
    for (size_t k = 0; k < playlist.entries.size(); ++k) {
        const MixEntry& e = playlist.entries[k];
        const std::string& lang = playlist.languages.name_of(e.language);
        const auto& sources = by_language[e.language];
        if (sources.empty()) throw DataError("corpus has no file for language '" + lang + "'");
        const long need = e.duration_units * spu;
        const AudioBuffer& src = corpus[sources[rng() % sources.size()]].first;
        const long avail = static_cast<long>(src.samples.size());
        if (avail < need)
            throw DataError("corpus file too short for a " +
                            std::to_string(e.duration_units / 100.0) + " s excerpt of language '" +
                            lang + "'");
        const long offset = avail == need ? 0 : static_cast<long>(rng() % (avail - need + 1));
        std::copy(src.samples.begin() + offset, src.samples.begin() + offset + need,
                  out.samples.begin() + cursor_units * spu);
        cursor_units += e.duration_units + playlist.gap_units;
    }
    return {std::move(out), playlist.language_truth()};
}

// ---------------------------------------------------------------------------
// On-the-fly training mixtures
// ---------------------------------------------------------------------------

// Lazily yields concatenations of 2-4 monolingual samples (each shorter than
// max_len, longer ones cropped to a seeded excerpt) with exact frame labels
// at 100 Hz. Replaying with the same seed yields the identical sequence.
class TrainingMixStream {
public:
    TrainingMixStream(std::vector<std::pair<AudioBuffer, std::string>> samples,
                      LabelSpace languages, double max_len = 10.0, uint64_t seed = 0)
        : samples_(std::move(samples)), languages_(std::move(languages)), max_len_(max_len),
          rng_(splitmix64(seed)) {
        if (samples_.empty()) throw DataError("training mix stream needs samples");
        rate_ = samples_.front().first.sample_rate;
        for (const auto& [audio, lang] : samples_) {
            if (audio.sample_rate != rate_) throw DataError("training samples disagree on sample rate");
            languages_.require(lang);
        }
    }

    std::pair<AudioBuffer, std::vector<int>> next() {
        const int k = 2 + static_cast<int>(rng_() % 3);
        AudioBuffer mix;
        mix.sample_rate = rate_;
        std::vector<std::pair<long, int>> boundaries;  // (end sample, language id)
        for (int i = 0; i < k; ++i) {
            const auto& [audio, lang] = samples_[rng_() % samples_.size()];
            long n = static_cast<long>(audio.samples.size());
            long offset = 0;
            const long max_samples = static_cast<long>(max_len_ * rate_);
            if (n >= max_samples) {
                n = max_samples - rate_ / 100;  // strictly below max_len
                offset = static_cast<long>(rng_() % (audio.samples.size() - n + 1));
            }
            mix.samples.insert(mix.samples.end(), audio.samples.begin() + offset,
                               audio.samples.begin() + offset + n);
            boundaries.push_back({static_cast<long>(mix.samples.size()),
                                  languages_.require(lang)});
        }
        std::vector<int> labels(frame_count(mix), kNonSpeechLabel);
        size_t b = 0;
        for (size_t t = 0; t < labels.size(); ++t) {
            const double center = (t + 0.5) / kFrameRate;
            while (b < boundaries.size() &&
                   center >= static_cast<double>(boundaries[b].first) / rate_)
                ++b;
            if (b < boundaries.size()) labels[t] = boundaries[b].second;
        }
        return {std::move(mix), std::move(labels)};
    }

private:
    std::vector<std::pair<AudioBuffer, std::string>> samples_;
    LabelSpace languages_;
    double max_len_;
    int rate_;
    std::mt19937_64 rng_;
};

} // namespace langdiar
