#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "langdiar/audio.hpp"
#include "langdiar/features.hpp"
#include "langdiar/timeline.hpp"

// Spoken language identification: segment-based and frame-based classifier
// contracts with oracle and diagonal-Gaussian reference implementations,
// class masking, posterior smoothing and frame-to-segment decoding.

namespace langdiar {

// Segment duration contract for segment classifiers; callers post-process
// segments into this range first.
inline constexpr double kMinSegmentLen = 1.0;
inline constexpr double kMaxSegmentLen = 20.0;

// Per-frame class probabilities at a fixed frame rate; rows sum to 1.
struct PosteriorTrack {
    double frame_rate = kFrameRate;
    LabelSpace languages;                 // kind == language
    std::vector<double> probs;            // row-major T x L

    long frames() const {
        return languages.size() == 0 ? 0 : static_cast<long>(probs.size()) / languages.size();
    }
    double at(long t, int l) const { return probs[t * languages.size() + l]; }
    double& at(long t, int l) { return probs[t * languages.size() + l]; }
};

// Diagonal-Gaussian language models over the 8 log-mel band features;
// uniform prior, variances floored at 1e-4.
struct LanguageModelRef {
    LabelSpace languages;
    int n_features = kMelBands;
    std::vector<double> mean;  // L x F
    std::vector<double> var;   // L x F
};

inline constexpr double kVarianceFloor = 1e-4;

// Frames whose total linear mel energy falls below this carry no language
// evidence; reference classifiers treat them as silence (uniform posterior,
// skipped in segment averages). Rendered speech sits many orders above.
inline constexpr double kSilenceEnergyFloor = 1e-9;

struct ClassMask {
    std::vector<std::string> allowed;
};

// ---------------------------------------------------------------------------
// Reference model training
// ---------------------------------------------------------------------------

// Maximum-likelihood diagonal Gaussian per language over per-frame log-mel
// features. Every declared language needs labeled speech (at least ~1 s to
// make the variances meaningful).
inline LanguageModelRef train_reference_classifier(
    const std::vector<std::pair<AudioBuffer, LabeledAnnotation>>& labeled_audio,
    const LabelSpace& languages) {
    if (languages.kind != LabelKind::language)
        throw ConfigError("classifier label space must be a language space");
    if (languages.size() == 0) throw ConfigError("classifier needs at least one language");

    const int L = languages.size();
    const int F = kMelBands;
    std::vector<double> sum(static_cast<size_t>(L) * F, 0.0);
    std::vector<double> sumsq(static_cast<size_t>(L) * F, 0.0);
    std::vector<long> count(L, 0);

    for (const auto& [audio, ann] : labeled_audio) {
        const LabeledAnnotation flat = flatten(ann);
        const std::vector<int> frames = to_frames(flat, kFrameRate, audio.duration());
        const std::vector<double> feats = logmel_frames(audio);
        for (size_t t = 0; t < frames.size(); ++t) {
            if (frames[t] == kNonSpeechLabel) continue;
            const int l = languages.require(flat.space.name_of(frames[t]));
            ++count[l];
            for (int m = 0; m < F; ++m) {
                const double v = feats[t * F + m];
                sum[l * F + m] += v;
                sumsq[l * F + m] += v * v;
            }
        }
    }

    LanguageModelRef model;
    model.languages = languages;
    model.mean.resize(static_cast<size_t>(L) * F);
    model.var.resize(static_cast<size_t>(L) * F);
    for (int l = 0; l < L; ++l) {
        if (count[l] == 0)
            throw DataError("no training data for language '" + languages.names[l] + "'");
        for (int m = 0; m < F; ++m) {
            const double mean = sum[l * F + m] / count[l];
            const double var = sumsq[l * F + m] / count[l] - mean * mean;
            model.mean[l * F + m] = mean;
            model.var[l * F + m] = std::max(var, kVarianceFloor);
        }
    }
    return model;
}

namespace detail {

inline void gaussian_frame_logliks(const LanguageModelRef& model, const double* feat,
                                   std::vector<double>& out) {
    const int L = model.languages.size();
    const int F = model.n_features;
    out.assign(L, 0.0);
    for (int l = 0; l < L; ++l) {
        double ll = 0.0;
        for (int m = 0; m < F; ++m) {
            const double v = model.var[l * F + m];
            const double d = feat[m] - model.mean[l * F + m];
            ll += -0.5 * std::log(2.0 * M_PI * v) - d * d / (2.0 * v);
        }
        out[l] = ll;
    }
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> p(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Classifier contracts
// ---------------------------------------------------------------------------

class SegmentClassifier {
public:
    virtual ~SegmentClassifier() = default;
    virtual const LabelSpace& languages() const = 0;
    // Posterior vector over the language space for one segment. The segment
    // duration must satisfy the post-processing contract.
    virtual std::vector<double> classify(const AudioBuffer& audio, const Segment& seg) const = 0;

protected:
    static void check_duration(const Segment& seg) {
        const double d = seg.duration();
        if (d < kMinSegmentLen - kTimeEps || d > kMaxSegmentLen + kTimeEps)
            throw DataError("segment duration " + std::to_string(d) +
                            " outside the [1, 20] s classifier contract; post-process first");
    }
};

class FrameClassifier {
public:
    virtual ~FrameClassifier() = default;
    virtual const LabelSpace& languages() const = 0;
    virtual PosteriorTrack posteriors(const AudioBuffer& audio) const = 0;
};

// One-hot ground truth of the majority language within the segment.
class OracleSegmentClassifier : public SegmentClassifier {
public:
    explicit OracleSegmentClassifier(LabeledAnnotation ref_lang) : ref_(flatten(ref_lang)) {
        if (ref_.space.kind != LabelKind::language)
            throw ConfigError("oracle segment classifier needs a language annotation");
    }

    const LabelSpace& languages() const override { return ref_.space; }

    std::vector<double> classify(const AudioBuffer& audio, const Segment& seg) const override {
        (void)audio;
        check_duration(seg);
        Timeline seg_tl;
        seg_tl.segments.push_back(seg);
        std::vector<double> overlap(ref_.space.size(), 0.0);
        for (int l = 0; l < ref_.space.size(); ++l)
            overlap[l] = intersect(ref_.support_of(l), seg_tl).duration();
        const int L = ref_.space.size();
        std::vector<double> p(L, 0.0);
        const auto it = std::max_element(overlap.begin(), overlap.end());
        if (*it > 0.0)
            p[static_cast<size_t>(it - overlap.begin())] = 1.0;
        else
            std::fill(p.begin(), p.end(), 1.0 / L);  // segment outside reference speech
        return p;
    }

private:
    LabeledAnnotation ref_;
};

// Mean per-frame Gaussian log-likelihood per language over the segment,
// exponentiated and normalized under the uniform prior.
class ReferenceSegmentClassifier : public SegmentClassifier {
public:
    explicit ReferenceSegmentClassifier(LanguageModelRef model) : model_(std::move(model)) {}

    const LabelSpace& languages() const override { return model_.languages; }

    std::vector<double> classify(const AudioBuffer& audio, const Segment& seg) const override {
        check_duration(seg);
        const int spf = samples_per_frame(audio);
        const long first = std::max<long>(0, std::llround(seg.start * kFrameRate));
        const long last = std::min<long>(frame_count(audio),
                                         std::llround(seg.end * kFrameRate));
        AudioBuffer view;
        view.sample_rate = audio.sample_rate;
        const long s0 = first * spf;
        const long s1 = std::min<long>(last * spf, audio.samples.size());
        view.samples.assign(audio.samples.begin() + s0, audio.samples.begin() + s1);

        const MelFilterbank fb = MelFilterbank::make(view.sample_rate);
        const std::vector<double> energies = mel_band_energies(view, fb);
        const long n = frame_count(view);
        const int L = model_.languages.size();
        std::vector<double> mean_ll(L, 0.0), frame_ll, feat(kMelBands);
        long voiced = 0;
        for (long t = 0; t < n; ++t) {
            double total = 0.0;
            for (int m = 0; m < kMelBands; ++m) total += energies[t * kMelBands + m];
            if (total < kSilenceEnergyFloor) continue;  // silence carries no evidence
            for (int m = 0; m < kMelBands; ++m)
                feat[m] = std::log(energies[t * kMelBands + m] + kLogEnergyFloor);
            detail::gaussian_frame_logliks(model_, feat.data(), frame_ll);
            for (int l = 0; l < L; ++l) mean_ll[l] += frame_ll[l];
            ++voiced;
        }
        if (voiced == 0) return std::vector<double>(L, 1.0 / L);
        for (int l = 0; l < L; ++l) mean_ll[l] /= static_cast<double>(voiced);
        return detail::softmax(mean_ll);
    }

private:
    LanguageModelRef model_;
};

// One-hot rows from the reference annotation; uniform where no language is
// annotated (those frames are gated out by the VAD during decoding).
class OracleFrameClassifier : public FrameClassifier {
public:
    explicit OracleFrameClassifier(LabeledAnnotation ref_lang) : ref_(flatten(ref_lang)) {
        if (ref_.space.kind != LabelKind::language)
            throw ConfigError("oracle frame classifier needs a language annotation");
    }

    const LabelSpace& languages() const override { return ref_.space; }

    PosteriorTrack posteriors(const AudioBuffer& audio) const override {
        PosteriorTrack track;
        track.languages = ref_.space;
        const std::vector<int> frames = to_frames(ref_, kFrameRate, audio.duration());
        const int L = ref_.space.size();
        track.probs.assign(frames.size() * static_cast<size_t>(L), 0.0);
        for (size_t t = 0; t < frames.size(); ++t) {
            if (frames[t] == kNonSpeechLabel)
                for (int l = 0; l < L; ++l) track.probs[t * L + l] = 1.0 / L;
            else
                track.probs[t * L + frames[t]] = 1.0;
        }
        return track;
    }

private:
    LabeledAnnotation ref_;
};

// Per-frame Gaussian log-likelihoods -> softmax rows.
class ReferenceFrameClassifier : public FrameClassifier {
public:
    explicit ReferenceFrameClassifier(LanguageModelRef model) : model_(std::move(model)) {}

    const LabelSpace& languages() const override { return model_.languages; }

    PosteriorTrack posteriors(const AudioBuffer& audio) const override {
        PosteriorTrack track;
        track.languages = model_.languages;
        const MelFilterbank fb = MelFilterbank::make(audio.sample_rate);
        const std::vector<double> energies = mel_band_energies(audio, fb);
        const long n = frame_count(audio);
        const int L = model_.languages.size();
        track.probs.resize(static_cast<size_t>(n) * L);
        std::vector<double> frame_ll, feat(kMelBands);
        for (long t = 0; t < n; ++t) {
            double total = 0.0;
            for (int m = 0; m < kMelBands; ++m) total += energies[t * kMelBands + m];
            if (total < kSilenceEnergyFloor) {
                for (int l = 0; l < L; ++l) track.probs[t * L + l] = 1.0 / L;
                continue;
            }
            for (int m = 0; m < kMelBands; ++m)
                feat[m] = std::log(energies[t * kMelBands + m] + kLogEnergyFloor);
            detail::gaussian_frame_logliks(model_, feat.data(), frame_ll);
            const std::vector<double> p = detail::softmax(frame_ll);
            std::copy(p.begin(), p.end(), track.probs.begin() + t * L);
        }
        return track;
    }

private:
    LanguageModelRef model_;
};

// ---------------------------------------------------------------------------
// Masking, smoothing, decoding
// ---------------------------------------------------------------------------

// Zeroes disallowed classes and renormalizes; if every allowed entry was
// zero the result is uniform over the allowed set.
inline std::vector<double> mask_posteriors(const std::vector<double>& p, const ClassMask& mask,
                                           const LabelSpace& languages) {
    if (mask.allowed.empty()) throw ConfigError("class mask must not be empty");
    std::vector<bool> keep(p.size(), false);
    size_t n_allowed = 0;
    for (const std::string& name : mask.allowed) {
        const int id = languages.id_of(name);
        if (id < 0) throw DataError("class mask names unknown language '" + name + "'");
        if (!keep[id]) ++n_allowed;
        keep[id] = true;
    }
    std::vector<double> out(p.size(), 0.0);
    double z = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
        if (keep[i]) z += p[i];
    if (z > 0.0) {
        for (size_t i = 0; i < p.size(); ++i)
            if (keep[i]) out[i] = p[i] / z;
    } else {
        for (size_t i = 0; i < p.size(); ++i)
            if (keep[i]) out[i] = 1.0 / static_cast<double>(n_allowed);
    }
    return out;
}

inline PosteriorTrack mask_posteriors(const PosteriorTrack& track, const ClassMask& mask) {
    PosteriorTrack out = track;
    const int L = track.languages.size();
    std::vector<double> row(L);
    for (long t = 0; t < track.frames(); ++t) {
        for (int l = 0; l < L; ++l) row[l] = track.at(t, l);
        const std::vector<double> masked = mask_posteriors(row, mask, track.languages);
        for (int l = 0; l < L; ++l) out.at(t, l) = masked[l];
    }
    return out;
}

// Centered moving average per language column. At the sequence edges the
// window truncates to the available frames and renormalizes by the actual
// count, so rows stay normalized.
inline PosteriorTrack smooth(const PosteriorTrack& track, long window = 200) {
    if (window < 1) throw ConfigError("smoothing window must be >= 1");
    PosteriorTrack out = track;
    const long T = track.frames();
    const int L = track.languages.size();
    if (T == 0 || L == 0 || window == 1) return out;

    // Column prefix sums.
    std::vector<double> prefix(static_cast<size_t>(T + 1) * L, 0.0);
    for (long t = 0; t < T; ++t)
        for (int l = 0; l < L; ++l)
            prefix[(t + 1) * L + l] = prefix[t * L + l] + track.at(t, l);

    const long back = (window - 1) / 2;
    const long fwd = window / 2;
    for (long t = 0; t < T; ++t) {
        const long lo = std::max<long>(0, t - back);
        const long hi = std::min<long>(T - 1, t + fwd);
        const double count = static_cast<double>(hi - lo + 1);
        for (int l = 0; l < L; ++l)
            out.at(t, l) = (prefix[(hi + 1) * L + l] - prefix[lo * L + l]) / count;
    }
    return out;
}

// Per-frame argmax (ties to the lowest language index) within speech frames
// only; maximal constant-label runs become segments clipped to the speech
// timeline.
inline LabeledAnnotation decode_frames(const PosteriorTrack& track, const Timeline& speech) {
    LabeledAnnotation out;
    out.space = track.languages;
    const long T = track.frames();
    const int L = track.languages.size();
    if (T == 0 || L == 0) return out;
    if (!speech.empty() && speech.extent_end() > static_cast<double>(T) / track.frame_rate + kTimeEps)
        throw DataError("posterior track does not cover the speech timeline");

    long run_start = -1;
    int run_label = -1;
    auto close_run = [&](long last) {
        const Segment raw{static_cast<double>(run_start) / track.frame_rate,
                          static_cast<double>(last + 1) / track.frame_rate};
        Timeline raw_tl;
        raw_tl.segments.push_back(raw);
        for (const Segment& s : intersect(raw_tl, speech).segments)
            out.entries.push_back({s, run_label});
    };
    for (long t = 0; t <= T; ++t) {
        int label = -1;
        if (t < T && covers(speech, (t + 0.5) / track.frame_rate)) {
            label = 0;
            for (int l = 1; l < L; ++l)
                if (track.at(t, l) > track.at(t, label)) label = l;
        }
        if (label != run_label) {
            if (run_label >= 0) close_run(t - 1);
            run_start = t;
            run_label = label;
        }
    }
    out.sort_entries();
    return out;
}

} // namespace langdiar
