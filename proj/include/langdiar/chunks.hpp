#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "langdiar/audio.hpp"
#include "langdiar/features.hpp"
#include "langdiar/timeline.hpp"

// Fixed-length chunking of a recording and the per-chunk local diarization
// result exchanged between the diarizer and the stitched VAD.

namespace langdiar {

struct Embedding {
    std::vector<double> v;
    int dim() const { return static_cast<int>(v.size()); }
};

struct Chunk {
    int index = 0;
    long start_frame = 0;  // 10 ms frames, recording-global
    long end_frame = 0;
    long start_sample = 0;
    long end_sample = 0;
    Segment span;
};

// Contiguous, non-overlapping chunks covering the full recording; the last
// chunk holds the remainder. chunk_len is quantized to the 10 ms frame grid.
inline std::vector<Chunk> chunk_audio(const AudioBuffer& audio, double chunk_len = 30.0) {
    if (!(chunk_len > 0)) throw ConfigError("chunk_len must be positive");
    const long frames_per_chunk = std::max<long>(1, std::llround(chunk_len * kFrameRate));
    const int spf = samples_per_frame(audio);
    const long total_frames = frame_count(audio);
    const long total_samples = static_cast<long>(audio.samples.size());

    std::vector<Chunk> chunks;
    for (long f = 0; f < total_frames; f += frames_per_chunk) {
        Chunk c;
        c.index = static_cast<int>(chunks.size());
        c.start_frame = f;
        c.end_frame = std::min(f + frames_per_chunk, total_frames);
        c.start_sample = f * spf;
        c.end_sample = std::min(c.end_frame * spf, total_samples);
        c.span.start = static_cast<double>(c.start_frame) / kFrameRate;
        c.span.end = (c.end_frame == total_frames) ? audio.duration()
                                                   : static_cast<double>(c.end_frame) / kFrameRate;
        chunks.push_back(c);
    }
    return chunks;
}

// Per-chunk local diarization output: per-slot speech activity at 100 Hz
// plus, once the embedding stage ran, one embedding per active slot.
struct ChunkResult {
    int chunk_index = 0;
    long start_frame = 0;
    Segment span;
    std::vector<std::vector<float>> slot_activity;      // slots x frames, in [0,1]
    std::vector<bool> active_mask;                      // filled by the thresholding stage
    std::vector<std::optional<Embedding>> slot_embedding;
    std::vector<std::string> warnings;

    int slots() const { return static_cast<int>(slot_activity.size()); }
    long frames() const { return slot_activity.empty() ? 0 : static_cast<long>(slot_activity[0].size()); }
};

// Frame run [first, last] of chunk-local frames -> recording-global segment.
inline Segment frames_to_segment(long start_frame, long first, long last) {
    return {static_cast<double>(start_frame + first) / kFrameRate,
            static_cast<double>(start_frame + last + 1) / kFrameRate};
}

// Thresholded activity of one slot as a recording-global timeline.
inline Timeline slot_support(const ChunkResult& r, int slot, double threshold) {
    std::vector<Segment> segs;
    const auto& act = r.slot_activity[slot];
    long run_start = -1;
    for (long f = 0; f <= static_cast<long>(act.size()); ++f) {
        const bool on = f < static_cast<long>(act.size()) && act[f] >= threshold;
        if (on && run_start < 0) run_start = f;
        else if (!on && run_start >= 0) {
            segs.push_back(frames_to_segment(r.start_frame, run_start, f - 1));
            run_start = -1;
        }
    }
    return normalize(std::move(segs));
}

} // namespace langdiar
