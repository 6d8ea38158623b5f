#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "langdiar/error.hpp"
#include "langdiar/timeline.hpp"

// Language diarization metrics: LDER (= LC + MS + FA over total audio time),
// LER (confusion over hypothesized speech time), Levenshtein WER and
// percentile-bootstrap confidence intervals on frame labels.

namespace langdiar {

struct MetricReport {
    double lc = 0.0;    // language confusion fraction
    double ms = 0.0;    // missed speech fraction
    double fa = 0.0;    // false alarm fraction
    double lder = 0.0;  // always lc + ms + fa
    double total_audio = 0.0;
    double scored_speech = 0.0;  // reference speech duration
    std::map<std::string, double> per_language_confusion;  // ref label -> seconds
    std::optional<double> ci_low, ci_high;
};

// Elementary intervals where both annotations carry a label but the labels
// (compared by name) differ. Returns total confused seconds and fills the
// per-reference-language breakdown.
inline double confusion_seconds(const LabeledAnnotation& ref, const LabeledAnnotation& hyp,
                                std::map<std::string, double>* breakdown = nullptr) {
    double confused = 0.0;
    size_t j = 0;
    for (const auto& r : ref.entries) {
        while (j < hyp.entries.size() && hyp.entries[j].seg.end <= r.seg.start) ++j;
        for (size_t k = j; k < hyp.entries.size(); ++k) {
            const auto& h = hyp.entries[k];
            if (h.seg.start >= r.seg.end) break;
            const double lo = std::max(r.seg.start, h.seg.start);
            const double hi = std::min(r.seg.end, h.seg.end);
            if (hi <= lo) continue;
            if (ref.space.name_of(r.label) != hyp.space.name_of(h.label)) {
                confused += hi - lo;
                if (breakdown) (*breakdown)[ref.space.name_of(r.label)] += hi - lo;
            }
        }
    }
    return confused;
}

// LDER with its LC/MS/FA decomposition, all normalized by total audio
// duration. Inputs must be flattened; no collar or forgiveness window.
inline MetricReport lder(const LabeledAnnotation& ref, const LabeledAnnotation& hyp,
                         double total_audio) {
    if (ref.space.kind != hyp.space.kind)
        throw DataError("label-space mismatch: ref is " +
                        std::string(label_kind_name(ref.space.kind)) + ", hyp is " +
                        std::string(label_kind_name(hyp.space.kind)));
    if (ref.max_end() > total_audio + kTimeEps || hyp.max_end() > total_audio + kTimeEps)
        throw DataError("annotation extends beyond total audio duration");
    if (!(total_audio > 0)) throw DataError("total audio duration must be positive");

    const Timeline r = ref.support();
    const Timeline h = hyp.support();

    MetricReport rep;
    rep.total_audio = total_audio;
    rep.scored_speech = r.duration();
    rep.ms = subtract(r, h).duration() / total_audio;
    rep.fa = subtract(h, r).duration() / total_audio;
    rep.lc = confusion_seconds(ref, hyp, &rep.per_language_confusion) / total_audio;
    rep.lder = rep.lc + rep.ms + rep.fa;
    return rep;
}

// Fraction of hypothesized-speech time with an incorrect language label.
// Hypothesized speech outside the reference support does not count as
// incorrect (no speech/non-speech reference is assumed). Empty hypothesis
// support has no defined value.
inline std::optional<double> ler(const LabeledAnnotation& ref, const LabeledAnnotation& hyp) {
    if (ref.space.kind != hyp.space.kind)
        throw DataError("label-space mismatch between reference and hypothesis");
    const double h_dur = hyp.support().duration();
    if (h_dur <= 0.0) return std::nullopt;
    return confusion_seconds(ref, hyp) / h_dur;
}

// ---------------------------------------------------------------------------
// WER
// ---------------------------------------------------------------------------

struct WerResult {
    long substitutions = 0;
    long insertions = 0;
    long deletions = 0;
    long ref_words = 0;
    double wer = 0.0;
    bool empty_reference = false;
};

// Minimum-edit-distance WER with unit costs. Backtrace tie-break prefers
// substitution over insertion over deletion.
inline WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    const size_t n = ref.size(), m = hyp.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i)
        for (size_t j = 1; j <= m; ++j) {
            const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            const int ins = d[i][j - 1] + 1;
            const int del = d[i - 1][j] + 1;
            d[i][j] = std::min({sub, ins, del});
        }

    WerResult r;
    r.ref_words = static_cast<long>(n);
    size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
            --i; --j;
        } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
            ++r.insertions;
            --j;
        } else {
            ++r.deletions;
            --i;
        }
    }
    if (n == 0 && m > 0) r.empty_reference = true;
    r.wer = static_cast<double>(r.substitutions + r.insertions + r.deletions) /
            static_cast<double>(std::max<long>(1, r.ref_words));
    return r;
}

// ---------------------------------------------------------------------------
// Bootstrap confidence intervals on frame labels
// ---------------------------------------------------------------------------

enum class FrameMetric { lder, ler };

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// RNG stream for resample `r` of run `seed`. Part of the reproducibility
// contract: resample r draws its frame indices from
// std::mt19937_64(splitmix64(seed ^ splitmix64(r + 1))) via `engine() % T`.
inline std::mt19937_64 resample_rng(uint64_t seed, uint64_t r) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(r + 1)));
}

inline double frame_metric_value(FrameMetric metric, long confused, long miss, long falarm,
                                 long hyp_speech, long total) {
    if (metric == FrameMetric::lder)
        return static_cast<double>(confused + miss + falarm) / static_cast<double>(total);
    if (hyp_speech == 0) return 0.0;  // degenerate resample, see header note
    return static_cast<double>(confused) / static_cast<double>(hyp_speech);
}

// Linear-interpolation percentile of sorted values at position q*(n-1).
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DataError("percentile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Percentile bootstrap over i.i.d. frame resampling. Frames use
// kNonSpeechLabel for non-speech; a frame pair counts as confusion when both
// labels are speech and differ, miss when only the reference is speech, and
// false alarm when only the hypothesis is speech. Deterministic given seed.
inline std::pair<double, double> bootstrap_ci(const std::vector<int>& ref_frames,
                                              const std::vector<int>& hyp_frames,
                                              FrameMetric metric, int n_resamples, uint64_t seed,
                                              double coverage = 0.95) {
    if (ref_frames.size() != hyp_frames.size())
        throw DataError("bootstrap: frame sequences differ in length");
    if (ref_frames.empty()) throw DataError("bootstrap: empty frame sequences");
    if (n_resamples < 100) throw ConfigError("bootstrap: need at least 100 resamples");
    if (!(coverage > 0.0 && coverage < 1.0)) throw ConfigError("bootstrap: coverage in (0,1)");

    const size_t total = ref_frames.size();
    std::vector<double> values(n_resamples);
    for (int r = 0; r < n_resamples; ++r) {
        std::mt19937_64 rng = resample_rng(seed, static_cast<uint64_t>(r));
        long confused = 0, miss = 0, falarm = 0, hyp_speech = 0;
        for (size_t t = 0; t < total; ++t) {
            const size_t idx = static_cast<size_t>(rng() % total);
            const int rl = ref_frames[idx];
            const int hl = hyp_frames[idx];
            if (hl != kNonSpeechLabel) ++hyp_speech;
            if (rl != kNonSpeechLabel && hl != kNonSpeechLabel) {
                if (rl != hl) ++confused;
            } else if (rl != kNonSpeechLabel) {
                ++miss;
            } else if (hl != kNonSpeechLabel) {
                ++falarm;
            }
        }
        values[r] = frame_metric_value(metric, confused, miss, falarm, hyp_speech,
                                       static_cast<long>(total));
    }
    std::sort(values.begin(), values.end());
    const double alpha = (1.0 - coverage) / 2.0;
    return {percentile_sorted(values, alpha), percentile_sorted(values, 1.0 - alpha)};
}

// ---------------------------------------------------------------------------
// Report serialization (CSV / JSON, Table-style column order)
// ---------------------------------------------------------------------------

struct MethodReport {
    std::string method;
    MetricReport diarization;          // LDER and components
    std::optional<double> ler;         // absent when undefined
    std::optional<WerResult> wer;
};

inline std::string format_pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

inline std::string report_csv(const std::vector<MethodReport>& rows) {
    std::ostringstream os;
    os << "method,LDER,CI_low,CI_high,LC,MS,FA,LER,WER\n";
    for (const auto& r : rows) {
        os << r.method << ',' << format_pct(r.diarization.lder) << ','
           << (r.diarization.ci_low ? format_pct(*r.diarization.ci_low) : "") << ','
           << (r.diarization.ci_high ? format_pct(*r.diarization.ci_high) : "") << ','
           << format_pct(r.diarization.lc) << ',' << format_pct(r.diarization.ms) << ','
           << format_pct(r.diarization.fa) << ',' << (r.ler ? format_pct(*r.ler) : "") << ','
           << (r.wer ? format_pct(r.wer->wer) : "") << '\n';
    }
    return os.str();
}

inline nlohmann::json report_json(const std::vector<MethodReport>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j;
        j["method"] = r.method;
        j["LDER"] = format_pct(r.diarization.lder);
        j["CI_low"] = r.diarization.ci_low ? nlohmann::json(format_pct(*r.diarization.ci_low))
                                           : nlohmann::json();
        j["CI_high"] = r.diarization.ci_high ? nlohmann::json(format_pct(*r.diarization.ci_high))
                                             : nlohmann::json();
        j["LC"] = format_pct(r.diarization.lc);
        j["MS"] = format_pct(r.diarization.ms);
        j["FA"] = format_pct(r.diarization.fa);
        j["LER"] = r.ler ? nlohmann::json(format_pct(*r.ler)) : nlohmann::json();
        j["WER"] = r.wer ? nlohmann::json(format_pct(r.wer->wer)) : nlohmann::json();
        j["total_audio_s"] = r.diarization.total_audio;
        j["scored_speech_s"] = r.diarization.scored_speech;
        j["per_language_confusion_s"] = r.diarization.per_language_confusion;
        out.push_back(std::move(j));
    }
    return out;
}

} // namespace langdiar
