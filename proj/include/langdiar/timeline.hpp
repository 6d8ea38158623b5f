#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "langdiar/error.hpp"

// Core interval algebra: segments, unlabeled timelines, labeled annotations,
// overlap flattening and frame quantization. All times are real-valued
// seconds; quantization to frames happens only at metric boundaries.
//
// Convention used across the library: a time derived from a frame or sample
// index is always computed as `index / rate` (a division, never a multiply
// by a reciprocal), so that independently derived boundary values compare
// bit-equal.

namespace langdiar {

// Adjacent segments with a gap below this merge during normalization;
// absorbs floating-point seams left by chunk stitching.
inline constexpr double kMergeTol = 1e-6;
// Slack for coverage/containment checks.
inline constexpr double kTimeEps = 1e-9;

struct Segment {
    double start = 0.0;
    double end = 0.0;
    double duration() const { return end - start; }
};

inline bool segment_valid(const Segment& s) {
    return std::isfinite(s.start) && std::isfinite(s.end) && s.start >= 0.0 && s.end > s.start;
}

inline std::string segment_str(const Segment& s) {
    return "(" + std::to_string(s.start) + ", " + std::to_string(s.end) + ")";
}

// Sorted, pairwise disjoint segments (guaranteed after normalize()).
struct Timeline {
    std::vector<Segment> segments;

    bool empty() const { return segments.empty(); }
    size_t size() const { return segments.size(); }
    double duration() const {
        double d = 0.0;
        for (const auto& s : segments) d += s.duration();
        return d;
    }
    double extent_end() const { return segments.empty() ? 0.0 : segments.back().end; }
};

// Sorted union with overlapping or near-adjacent (gap < kMergeTol) segments
// merged. Rejects segments with end <= start.
inline Timeline normalize(std::vector<Segment> segs) {
    for (const auto& s : segs) {
        if (!segment_valid(s))
            throw DataError("invalid segment " + segment_str(s) + ": need 0 <= start < end");
    }
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
        return std::tie(a.start, a.end) < std::tie(b.start, b.end);
    });
    Timeline out;
    for (const auto& s : segs) {
        if (!out.segments.empty() && s.start < out.segments.back().end + kMergeTol) {
            out.segments.back().end = std::max(out.segments.back().end, s.end);
        } else {
            out.segments.push_back(s);
        }
    }
    return out;
}

inline Timeline normalize(const Timeline& t) { return normalize(t.segments); }

// Time covered by both inputs. Inputs must be normalized; output is sorted
// and disjoint (no adjacency merging, so durations stay exact).
inline Timeline intersect(const Timeline& a, const Timeline& b) {
    Timeline out;
    size_t i = 0, j = 0;
    while (i < a.segments.size() && j < b.segments.size()) {
        const Segment& x = a.segments[i];
        const Segment& y = b.segments[j];
        const double lo = std::max(x.start, y.start);
        const double hi = std::min(x.end, y.end);
        if (hi > lo) out.segments.push_back({lo, hi});
        if (x.end < y.end) ++i; else ++j;
    }
    return out;
}

// Time in `a` and not in `b`. Inputs normalized; output sorted and disjoint.
inline Timeline subtract(const Timeline& a, const Timeline& b) {
    Timeline out;
    size_t j = 0;
    for (const Segment& x : a.segments) {
        while (j < b.segments.size() && b.segments[j].end <= x.start) ++j;
        double cur = x.start;
        size_t k = j;  // a b-segment can span several a-segments, so scan from j
        while (k < b.segments.size() && b.segments[k].start < x.end) {
            const Segment& y = b.segments[k];
            if (y.start > cur) out.segments.push_back({cur, std::min(y.start, x.end)});
            cur = std::max(cur, y.end);
            if (cur >= x.end) break;
            ++k;
        }
        if (cur < x.end) out.segments.push_back({cur, x.end});
    }
    return out;
}

inline Timeline timeline_union(const Timeline& a, const Timeline& b) {
    std::vector<Segment> all = a.segments;
    all.insert(all.end(), b.segments.begin(), b.segments.end());
    return normalize(std::move(all));
}

// True when `t` (normalized) covers time point `x` under half-open [start, end).
inline bool covers(const Timeline& t, double x) {
    auto it = std::upper_bound(t.segments.begin(), t.segments.end(), x,
                               [](double v, const Segment& s) { return v < s.start; });
    if (it == t.segments.begin()) return false;
    --it;
    return x >= it->start && x < it->end;
}

// ---------------------------------------------------------------------------
// Labeled annotations
// ---------------------------------------------------------------------------

enum class LabelKind { speaker, language };

inline const char* label_kind_name(LabelKind k) {
    return k == LabelKind::speaker ? "speaker" : "language";
}

// A declared, ordered label domain; a label id is an index into `names`.
struct LabelSpace {
    LabelKind kind = LabelKind::language;
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }
    int id_of(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (names[i] == name) return i;
        return -1;
    }
    int require(const std::string& name) const {
        int id = id_of(name);
        if (id < 0) throw DataError("label '" + name + "' not in declared " +
                                    std::string(label_kind_name(kind)) + " space");
        return id;
    }
    const std::string& name_of(int id) const {
        if (id < 0 || id >= size()) throw DataError("label id out of range");
        return names[id];
    }
};

// Distinguished non-speech label used by frame quantization.
inline constexpr int kNonSpeechLabel = -1;

struct AnnEntry {
    Segment seg;
    int label = -1;
};

// Time intervals carrying speaker or language labels; the universal currency
// between pipeline stages.
struct LabeledAnnotation {
    LabelSpace space;
    std::string file_id;
    std::vector<AnnEntry> entries;  // kept sorted by (start, end)

    bool empty() const { return entries.empty(); }

    void sort_entries() {
        std::stable_sort(entries.begin(), entries.end(), [](const AnnEntry& a, const AnnEntry& b) {
            return std::tie(a.seg.start, a.seg.end) < std::tie(b.seg.start, b.seg.end);
        });
    }

    void validate() const {
        for (const auto& e : entries) {
            if (!segment_valid(e.seg))
                throw DataError("invalid segment " + segment_str(e.seg) + " in annotation '" +
                                file_id + "'");
            if (e.label < 0 || e.label >= space.size())
                throw DataError("label id out of declared space in annotation '" + file_id + "'");
        }
    }

    double max_end() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.seg.end);
        return m;
    }

    // Normalized union of all entry segments.
    Timeline support() const {
        std::vector<Segment> segs;
        segs.reserve(entries.size());
        for (const auto& e : entries) segs.push_back(e.seg);
        return normalize(std::move(segs));
    }

    Timeline support_of(int label) const {
        std::vector<Segment> segs;
        for (const auto& e : entries)
            if (e.label == label) segs.push_back(e.seg);
        return normalize(std::move(segs));
    }
};

// Resolves overlaps so that no two entries overlap. Where entries overlapped
// with different labels, the earlier-starting entry wins; ties go to the
// lower label id. Covered time is unchanged, and already non-overlapping
// input comes back entry-for-entry identical (flatten is idempotent).
inline LabeledAnnotation flatten(const LabeledAnnotation& ann) {
    ann.validate();
    LabeledAnnotation out;
    out.space = ann.space;
    out.file_id = ann.file_id;
    if (ann.entries.empty()) return out;

    const size_t n = ann.entries.size();
    // Priority of an entry while active: earlier start, then lower label id.
    // The input index makes the key unique and keeps fragment bookkeeping
    // tied to the originating entry.
    using Key = std::tuple<double, int, size_t>;
    std::vector<Key> keys(n);
    std::vector<double> bounds;
    bounds.reserve(2 * n);
    for (size_t i = 0; i < n; ++i) {
        const auto& e = ann.entries[i];
        keys[i] = Key{e.seg.start, e.label, i};
        bounds.push_back(e.seg.start);
        bounds.push_back(e.seg.end);
    }
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

    // Event sweep over elementary intervals between consecutive bounds.
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return ann.entries[a].seg.start < ann.entries[b].seg.start;
    });

    std::set<Key> active;
    size_t next_in = 0;
    size_t last_winner = n;  // n = none
    for (size_t bi = 0; bi + 1 < bounds.size(); ++bi) {
        const double lo = bounds[bi];
        const double hi = bounds[bi + 1];
        while (next_in < n && ann.entries[order[next_in]].seg.start <= lo) {
            active.insert(keys[order[next_in]]);
            ++next_in;
        }
        for (auto it = active.begin(); it != active.end();) {
            if (ann.entries[std::get<2>(*it)].seg.end <= lo) it = active.erase(it);
            else ++it;
        }
        if (active.empty()) { last_winner = n; continue; }
        const size_t w = std::get<2>(*active.begin());
        if (w == last_winner && !out.entries.empty() && out.entries.back().seg.end == lo) {
            out.entries.back().seg.end = hi;  // extend fragment of the same entry
        } else {
            out.entries.push_back({{lo, hi}, ann.entries[w].label});
            last_winner = w;
        }
    }
    return out;
}

// Quantizes a flattened annotation to a frame-label sequence of length
// ceil(total_duration * frame_rate). Frame i carries the label covering the
// frame center (i + 0.5) / frame_rate, or kNonSpeechLabel.
inline std::vector<int> to_frames(const LabeledAnnotation& ann, double frame_rate,
                                  double total_duration) {
    if (!(frame_rate > 0)) throw ConfigError("frame_rate must be positive");
    if (ann.max_end() > total_duration + kTimeEps)
        throw DataError("annotation '" + ann.file_id + "' extends past total duration");
    const long n_frames = static_cast<long>(std::ceil(total_duration * frame_rate - kTimeEps));
    std::vector<int> frames(std::max<long>(n_frames, 0), kNonSpeechLabel);
    size_t e = 0;
    for (long i = 0; i < n_frames; ++i) {
        const double center = (i + 0.5) / frame_rate;
        while (e < ann.entries.size() && ann.entries[e].seg.end <= center) ++e;
        if (e < ann.entries.size() && ann.entries[e].seg.start <= center)
            frames[i] = ann.entries[e].label;
    }
    return frames;
}

} // namespace langdiar
