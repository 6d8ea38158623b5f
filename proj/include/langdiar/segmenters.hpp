#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "langdiar/audio.hpp"
#include "langdiar/chunks.hpp"
#include "langdiar/timeline.hpp"

// Speech/non-speech segmentation: energy VAD, VAD stitched from local
// diarization outputs, and segment length post-processing (discard < min,
// split > max into equal pieces).

namespace langdiar {

struct VadConfig {
    double frame_rate = kFrameRate;           // fixed 10 ms frames
    double energy_threshold_db = -30.0;       // relative to the file's peak frame
    double speech_activity_threshold = 0.5;   // for probability tracks
    int hangover = 0;                         // frames added on both sides
};

// Frames whose log energy exceeds (peak + energy_threshold_db) are speech.
// Peak-relative thresholding keeps the result invariant to global gain.
inline Timeline energy_vad(const AudioBuffer& audio, const VadConfig& cfg = {}) {
    if (!std::isfinite(cfg.energy_threshold_db)) throw ConfigError("energy threshold must be finite");
    if (cfg.hangover < 0) throw ConfigError("hangover must be >= 0");
    if (audio.empty()) return {};

    const int spf = samples_per_frame(audio);
    const long n = frame_count(audio);
    std::vector<double> frame_db(n);
    double peak_db = -std::numeric_limits<double>::infinity();
    for (long t = 0; t < n; ++t) {
        double e = 0.0;
        const long off = t * spf;
        const long lim = std::min<long>(off + spf, audio.samples.size());
        for (long s = off; s < lim; ++s) e += static_cast<double>(audio.samples[s]) * audio.samples[s];
        e /= static_cast<double>(spf);
        frame_db[t] = e > 0.0 ? 10.0 * std::log10(e) : -std::numeric_limits<double>::infinity();
        peak_db = std::max(peak_db, frame_db[t]);
    }
    if (!std::isfinite(peak_db)) return {};  // digital silence

    const double gate = peak_db + cfg.energy_threshold_db;
    std::vector<char> speech(n, 0);
    for (long t = 0; t < n; ++t) speech[t] = frame_db[t] >= gate ? 1 : 0;

    if (cfg.hangover > 0) {
        std::vector<char> widened(speech);
        for (long t = 0; t < n; ++t) {
            if (!speech[t]) continue;
            const long lo = std::max<long>(0, t - cfg.hangover);
            const long hi = std::min<long>(n - 1, t + cfg.hangover);
            for (long u = lo; u <= hi; ++u) widened[u] = 1;
        }
        speech.swap(widened);
    }

    std::vector<Segment> segs;
    long run_start = -1;
    for (long t = 0; t <= n; ++t) {
        const bool on = t < n && speech[t];
        if (on && run_start < 0) run_start = t;
        else if (!on && run_start >= 0) {
            segs.push_back({static_cast<double>(run_start) / cfg.frame_rate,
                            std::min(static_cast<double>(t) / cfg.frame_rate, audio.duration())});
            run_start = -1;
        }
    }
    return normalize(std::move(segs));
}

// Speech/non-speech from local diarization chunks: a frame is speech iff the
// max over slots of the activity probability reaches the threshold. Chunks
// must tile the recording in order; speech crossing a chunk boundary merges.
inline Timeline stitch_local_vad(const std::vector<ChunkResult>& chunks, double threshold) {
    std::vector<Segment> segs;
    long expected_frame = chunks.empty() ? 0 : chunks.front().start_frame;
    for (size_t i = 0; i < chunks.size(); ++i) {
        const ChunkResult& c = chunks[i];
        if (c.start_frame != expected_frame)
            throw DataError("chunk tiling broken at chunk " + std::to_string(c.chunk_index) +
                            ": overlapping or gapped spans");
        expected_frame += c.frames();
        long run_start = -1;
        const long frames = c.frames();
        for (long f = 0; f <= frames; ++f) {
            bool on = false;
            if (f < frames)
                for (const auto& slot : c.slot_activity)
                    if (slot[f] >= threshold) { on = true; break; }
            if (on && run_start < 0) run_start = f;
            else if (!on && run_start >= 0) {
                segs.push_back(frames_to_segment(c.start_frame, run_start, f - 1));
                run_start = -1;
            }
        }
    }
    return normalize(std::move(segs));
}

namespace detail {

// Split one segment longer than max_len into ceil(d / max_len) contiguous
// equal pieces; shared cut points keep the union exactly equal to the input.
template <typename Emit>
void split_segment(const Segment& s, double max_len, Emit&& emit) {
    const double d = s.duration();
    if (d <= max_len) { emit(s); return; }
    const long k = static_cast<long>(std::ceil(d / max_len));
    double prev = s.start;
    for (long i = 1; i <= k; ++i) {
        const double cut = (i == k) ? s.end : s.start + d * static_cast<double>(i) / static_cast<double>(k);
        emit({prev, cut});
        prev = cut;
    }
}

} // namespace detail

// Segments shorter than min_len are discarded, segments longer than max_len
// split into equal pieces.
inline Timeline postprocess_segments(const Timeline& in, double min_len = 1.0,
                                     double max_len = 20.0) {
    if (!(min_len < max_len)) throw ConfigError("min segment length must be below max");
    Timeline out;
    for (const Segment& s : in.segments) {
        if (s.duration() < min_len) continue;
        detail::split_segment(s, max_len, [&](const Segment& p) { out.segments.push_back(p); });
    }
    return out;
}

// Labeled variant; pieces inherit the entry label.
inline LabeledAnnotation postprocess_segments(const LabeledAnnotation& in, double min_len = 1.0,
                                              double max_len = 20.0) {
    if (!(min_len < max_len)) throw ConfigError("min segment length must be below max");
    LabeledAnnotation out;
    out.space = in.space;
    out.file_id = in.file_id;
    for (const AnnEntry& e : in.entries) {
        if (e.seg.duration() < min_len) continue;
        detail::split_segment(e.seg, max_len,
                              [&](const Segment& p) { out.entries.push_back({p, e.label}); });
    }
    return out;
}

} // namespace langdiar
