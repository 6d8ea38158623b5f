#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "langdiar/audio.hpp"
#include "langdiar/chunks.hpp"
#include "langdiar/features.hpp"
#include "langdiar/segmenters.hpp"
#include "langdiar/timeline.hpp"

// Chunk-wise speaker diarization: a pluggable local diarizer produces
// per-slot activity tracks per chunk, a pluggable embedder turns slot
// supports into vectors, and constrained agglomerative clustering maps
// (chunk, slot) items to global speakers. Cannot-link constraints forbid
// merging distinct slots of the same chunk.

namespace langdiar {

using ItemId = std::pair<int, int>;  // (chunk index, slot)

struct CannotLinkSet {
    std::set<std::pair<ItemId, ItemId>> pairs;  // stored with first < second

    void add(ItemId a, ItemId b) {
        if (a.first != b.first)
            throw DataError("cannot-link pairs must belong to the same chunk");
        if (b < a) std::swap(a, b);
        if (a != b) pairs.insert({a, b});
    }
    bool forbids(const ItemId& a, const ItemId& b) const {
        auto p = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
        return pairs.count(p) > 0;
    }
};

inline double cosine_distance(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) throw DataError("embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < a.dim(); ++i) {
        dot += a.v[i] * b.v[i];
        na += a.v[i] * a.v[i];
        nb += b.v[i] * b.v[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

// Average-linkage agglomerative clustering on cosine distance. A merge is
// forbidden when the merged cluster would contain a cannot-link pair.
// Merging stops once the smallest permitted linkage distance exceeds
// linkage_threshold (or when max_clusters > 0 caps the count: merging then
// continues past the threshold until the cap is met or constraints block).
// Tie-break: merge the pair whose (min item id, max item id) key is
// lexicographically smallest, cluster ids being their minimal member.
inline std::map<ItemId, int> constrained_ahc(const std::vector<std::pair<ItemId, Embedding>>& items,
                                             const CannotLinkSet& cannot, double linkage_threshold,
                                             int max_clusters = -1) {
    const size_t n = items.size();
    std::map<ItemId, int> assignment;
    if (n == 0) return assignment;
    for (size_t i = 1; i < n; ++i)
        if (items[i].second.dim() != items[0].second.dim())
            throw DataError("embedding dimension mismatch across items");

    // Pairwise item distances once; cluster linkage via Lance-Williams
    // average update.
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            dist[i][j] = dist[j][i] = cosine_distance(items[i].second, items[j].second);

    struct Cluster {
        std::vector<size_t> members;
        ItemId min_id;
        bool alive = true;
    };
    std::vector<Cluster> clusters(n);
    std::vector<std::vector<double>> link = dist;
    for (size_t i = 0; i < n; ++i) clusters[i] = {{i}, items[i].first, true};

    auto merge_allowed = [&](size_t a, size_t b) {
        for (size_t i : clusters[a].members)
            for (size_t j : clusters[b].members)
                if (cannot.forbids(items[i].first, items[j].first)) return false;
        return true;
    };

    size_t alive = n;
    while (alive > 1) {
        double best = std::numeric_limits<double>::infinity();
        size_t bi = n, bj = n;
        std::pair<ItemId, ItemId> best_key;
        for (size_t a = 0; a < n; ++a) {
            if (!clusters[a].alive) continue;
            for (size_t b = a + 1; b < n; ++b) {
                if (!clusters[b].alive) continue;
                const double d = link[a][b];
                if (d > best) continue;
                if (!merge_allowed(a, b)) continue;
                const std::pair<ItemId, ItemId> key =
                    std::make_pair(std::min(clusters[a].min_id, clusters[b].min_id),
                                   std::max(clusters[a].min_id, clusters[b].min_id));
                if (d < best || (d == best && key < best_key)) {
                    best = d;
                    bi = a; bj = b;
                    best_key = key;
                }
            }
        }
        if (bi == n) break;  // every remaining pair violates a constraint
        const bool over_cap = max_clusters > 0 && alive > static_cast<size_t>(max_clusters);
        if (best > linkage_threshold && !over_cap) break;

        const double na = static_cast<double>(clusters[bi].members.size());
        const double nb = static_cast<double>(clusters[bj].members.size());
        for (size_t c = 0; c < n; ++c) {
            if (!clusters[c].alive || c == bi || c == bj) continue;
            link[bi][c] = link[c][bi] = (na * link[bi][c] + nb * link[bj][c]) / (na + nb);
        }
        clusters[bi].members.insert(clusters[bi].members.end(), clusters[bj].members.begin(),
                                    clusters[bj].members.end());
        clusters[bi].min_id = std::min(clusters[bi].min_id, clusters[bj].min_id);
        clusters[bj].alive = false;
        --alive;
    }

    // Deterministic output ids: clusters ordered by minimal member id.
    std::vector<size_t> order;
    for (size_t c = 0; c < n; ++c)
        if (clusters[c].alive) order.push_back(c);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return clusters[a].min_id < clusters[b].min_id; });
    for (size_t k = 0; k < order.size(); ++k)
        for (size_t i : clusters[order[k]].members)
            assignment[items[i].first] = static_cast<int>(k);
    return assignment;
}

// ---------------------------------------------------------------------------
// Component contracts
// ---------------------------------------------------------------------------

class LocalDiarizer {
public:
    virtual ~LocalDiarizer() = default;
    virtual int slots() const = 0;
    // Fills chunk_index, span, start_frame and slot_activity (slots x frames
    // at 100 Hz over the chunk span). Embeddings are attached later by the
    // thresholding stage.
    virtual ChunkResult diarize_chunk(const AudioBuffer& audio, const Chunk& chunk) const = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual int dim() const = 0;
    // Deterministic vector for fixed (audio, support); support must be
    // non-empty.
    virtual Embedding extract(const AudioBuffer& audio, const Timeline& support) const = 0;
};

// ---------------------------------------------------------------------------
// Oracle implementations (read ground truth)
// ---------------------------------------------------------------------------

// Reads the ground-truth speaker annotation restricted to the chunk. When
// more speakers talk in the chunk than there are slots, the longest-speaking
// ones are kept and a truncation warning is recorded on the result.
class OracleLocalDiarizer : public LocalDiarizer {
public:
    OracleLocalDiarizer(LabeledAnnotation ref_speakers, int slots = 3)
        : ref_(flatten(ref_speakers)), slots_(slots) {
        if (slots < 1) throw ConfigError("local diarizer needs at least one slot");
    }

    int slots() const override { return slots_; }

    ChunkResult diarize_chunk(const AudioBuffer& audio, const Chunk& chunk) const override {
        (void)audio;
        ChunkResult out;
        out.chunk_index = chunk.index;
        out.span = chunk.span;
        out.start_frame = chunk.start_frame;
        const long frames = chunk.end_frame - chunk.start_frame;
        out.slot_activity.assign(slots_, std::vector<float>(frames, 0.0f));
        out.slot_embedding.assign(slots_, std::nullopt);
        out.active_mask.assign(slots_, false);

        // Speakers ranked by time spoken inside the chunk.
        Timeline chunk_tl;
        chunk_tl.segments.push_back(chunk.span);
        std::vector<std::pair<double, int>> talkers;
        for (int label = 0; label < ref_.space.size(); ++label) {
            const double d = intersect(ref_.support_of(label), chunk_tl).duration();
            if (d > 0.0) talkers.push_back({-d, label});
        }
        std::sort(talkers.begin(), talkers.end());
        if (static_cast<int>(talkers.size()) > slots_) {
            out.warnings.push_back("chunk " + std::to_string(chunk.index) + ": " +
                                   std::to_string(talkers.size()) + " speakers truncated to " +
                                   std::to_string(slots_) + " slots");
            talkers.resize(slots_);
        }
        for (size_t s = 0; s < talkers.size(); ++s) {
            const Timeline sup = ref_.support_of(talkers[s].second);
            for (long f = 0; f < frames; ++f) {
                const double center = (chunk.start_frame + f + 0.5) / kFrameRate;
                if (covers(sup, center)) out.slot_activity[s][f] = 1.0f;
            }
        }
        return out;
    }

    const LabeledAnnotation& reference() const { return ref_; }

private:
    LabeledAnnotation ref_;
    int slots_;
};

// Emits the indicator vector of the majority ground-truth speaker over the
// support; trivially separable embeddings for oracle pipelines.
class OracleEmbedder : public Embedder {
public:
    explicit OracleEmbedder(LabeledAnnotation ref_speakers) : ref_(flatten(ref_speakers)) {}

    int dim() const override { return std::max(1, ref_.space.size()); }

    Embedding extract(const AudioBuffer& audio, const Timeline& support) const override {
        (void)audio;
        if (support.empty()) throw DataError("embedding requested for empty support");
        Embedding e;
        e.v.assign(dim(), 0.0);
        std::vector<double> overlap(ref_.space.size(), 0.0);
        for (int label = 0; label < ref_.space.size(); ++label)
            overlap[label] = intersect(ref_.support_of(label), support).duration();
        const auto it = std::max_element(overlap.begin(), overlap.end());
        if (it != overlap.end() && *it > 0.0)
            e.v[static_cast<size_t>(it - overlap.begin())] = 1.0;
        else
            e.v[0] = 1.0;  // support outside any ground-truth speech
        return e;
    }

private:
    LabeledAnnotation ref_;
};

// ---------------------------------------------------------------------------
// Reference implementations (non-neural, deterministic)
// ---------------------------------------------------------------------------

// Mean and standard deviation of the 8 log-mel band energies over the
// supported frames (d = 16).
class LogMelStatsEmbedder : public Embedder {
public:
    int dim() const override { return 2 * kMelBands; }

    Embedding extract(const AudioBuffer& audio, const Timeline& support) const override {
        if (support.empty()) throw DataError("embedding requested for empty support");
        const std::vector<double> feats = logmel_frames(audio);
        const long n_frames = frame_count(audio);
        std::vector<double> sum(kMelBands, 0.0), sumsq(kMelBands, 0.0);
        long count = 0;
        for (long t = 0; t < n_frames; ++t) {
            const double center = (t + 0.5) / kFrameRate;
            if (!covers(support, center)) continue;
            ++count;
            for (int m = 0; m < kMelBands; ++m) {
                const double v = feats[t * kMelBands + m];
                sum[m] += v;
                sumsq[m] += v * v;
            }
        }
        if (count == 0) throw DataError("support covers no frame centers");
        Embedding e;
        e.v.resize(2 * kMelBands);
        for (int m = 0; m < kMelBands; ++m) {
            const double mean = sum[m] / count;
            const double var = std::max(0.0, sumsq[m] / count - mean * mean);
            e.v[m] = mean;
            e.v[kMelBands + m] = std::sqrt(var);
        }
        return e;
    }
};

// Energy VAD plus clustering of frame features into at most `slots` local
// speakers. Frames are grouped into ~0.5 s blocks whose mel band-energy
// profiles are clustered; every frame inherits its block's slot.
class ReferenceLocalDiarizer : public LocalDiarizer {
public:
    explicit ReferenceLocalDiarizer(int slots = 3, VadConfig vad = {},
                                    double block_linkage_threshold = 0.2,
                                    long block_frames = 50)
        : slots_(slots), vad_(vad), block_linkage_(block_linkage_threshold),
          block_frames_(block_frames) {
        if (slots < 1) throw ConfigError("local diarizer needs at least one slot");
        if (block_frames < 1) throw ConfigError("block length must be at least one frame");
    }

    int slots() const override { return slots_; }

    ChunkResult diarize_chunk(const AudioBuffer& audio, const Chunk& chunk) const override {
        ChunkResult out;
        out.chunk_index = chunk.index;
        out.span = chunk.span;
        out.start_frame = chunk.start_frame;
        const long frames = chunk.end_frame - chunk.start_frame;
        out.slot_activity.assign(slots_, std::vector<float>(frames, 0.0f));
        out.slot_embedding.assign(slots_, std::nullopt);
        out.active_mask.assign(slots_, false);
        if (frames <= 0) return out;

        AudioBuffer view;
        view.sample_rate = audio.sample_rate;
        view.samples.assign(audio.samples.begin() + chunk.start_sample,
                            audio.samples.begin() + chunk.end_sample);
        const Timeline speech = energy_vad(view, vad_);
        if (speech.empty()) return out;

        const MelFilterbank fb = MelFilterbank::make(view.sample_rate);
        const std::vector<double> energies = mel_band_energies(view, fb);

        // Contiguous speech-frame blocks with band-energy-share profiles.
        struct Block {
            long first, last;  // chunk-local frames, inclusive
            Embedding profile;
        };
        std::vector<Block> blocks;
        long run_start = -1;
        auto close_run = [&](long run_end) {
            for (long b = run_start; b <= run_end; b += block_frames_) {
                Block blk;
                blk.first = b;
                blk.last = std::min(run_end, b + block_frames_ - 1);
                std::vector<double> acc(kMelBands, 0.0);
                for (long f = blk.first; f <= blk.last; ++f)
                    for (int m = 0; m < kMelBands; ++m) acc[m] += energies[f * kMelBands + m];
                const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
                blk.profile.v.resize(kMelBands);
                for (int m = 0; m < kMelBands; ++m)
                    blk.profile.v[m] = total > 0.0 ? acc[m] / total : 1.0 / kMelBands;
                blocks.push_back(std::move(blk));
            }
        };
        for (long f = 0; f <= frames; ++f) {
            const bool on = f < frames && covers(speech, (f + 0.5) / kFrameRate);
            if (on && run_start < 0) run_start = f;
            else if (!on && run_start >= 0) { close_run(f - 1); run_start = -1; }
        }
        if (blocks.empty()) return out;

        std::vector<std::pair<ItemId, Embedding>> items;
        items.reserve(blocks.size());
        for (size_t i = 0; i < blocks.size(); ++i)
            items.push_back({{chunk.index, static_cast<int>(i)}, blocks[i].profile});
        const std::map<ItemId, int> assign =
            constrained_ahc(items, CannotLinkSet{}, block_linkage_, slots_);

        // Local clusters ordered by first appearance become slots.
        std::map<int, int> cluster_to_slot;
        for (size_t i = 0; i < blocks.size(); ++i) {
            const int c = assign.at({chunk.index, static_cast<int>(i)});
            if (!cluster_to_slot.count(c)) {
                const int s = static_cast<int>(cluster_to_slot.size());
                if (s >= slots_) continue;  // cap exceeded under constraints
                cluster_to_slot[c] = s;
            }
        }
        for (size_t i = 0; i < blocks.size(); ++i) {
            const int c = assign.at({chunk.index, static_cast<int>(i)});
            auto it = cluster_to_slot.find(c);
            if (it == cluster_to_slot.end()) continue;
            for (long f = blocks[i].first; f <= blocks[i].last; ++f)
                out.slot_activity[it->second][f] = 1.0f;
        }
        return out;
    }

private:
    int slots_;
    VadConfig vad_;
    double block_linkage_;
    long block_frames_;
};

// ---------------------------------------------------------------------------
// Full diarization and speaker-change segmentation
// ---------------------------------------------------------------------------

struct DiarizeConfig {
    double chunk_len = 30.0;
    double speech_activity_threshold = 0.5;
    double linkage_threshold = 0.15;
};

struct DiarizeOutput {
    LabeledAnnotation speakers;
    std::vector<ChunkResult> chunks;
    std::vector<std::string> warnings;
};

// Chunk, locally diarize, threshold slot activities, embed active slots and
// cluster them across chunks under same-chunk cannot-links; same-speaker
// segments across chunk boundaries merge during normalization.
inline DiarizeOutput diarize(const AudioBuffer& audio, const LocalDiarizer& local,
                             const Embedder& embedder, const DiarizeConfig& cfg = {}) {
    DiarizeOutput out;
    out.speakers.space.kind = LabelKind::speaker;

    const std::vector<Chunk> chunks = chunk_audio(audio, cfg.chunk_len);
    std::vector<std::pair<ItemId, Embedding>> items;
    std::vector<std::pair<ItemId, Timeline>> supports;
    CannotLinkSet cannot;

    for (const Chunk& ch : chunks) {
        ChunkResult res = local.diarize_chunk(audio, ch);
        std::vector<ItemId> active_here;
        for (int s = 0; s < res.slots(); ++s) {
            Timeline sup = slot_support(res, s, cfg.speech_activity_threshold);
            if (sup.empty()) continue;
            res.active_mask[s] = true;
            Embedding emb = embedder.extract(audio, sup);
            res.slot_embedding[s] = emb;
            const ItemId id{ch.index, s};
            items.push_back({id, std::move(emb)});
            supports.push_back({id, std::move(sup)});
            active_here.push_back(id);
        }
        for (size_t a = 0; a < active_here.size(); ++a)
            for (size_t b = a + 1; b < active_here.size(); ++b)
                cannot.add(active_here[a], active_here[b]);
        for (const auto& w : res.warnings) out.warnings.push_back(w);
        out.chunks.push_back(std::move(res));
    }
    if (items.empty()) return out;

    const std::map<ItemId, int> assign = constrained_ahc(items, cannot, cfg.linkage_threshold);

    int n_clusters = 0;
    for (const auto& [id, c] : assign) n_clusters = std::max(n_clusters, c + 1);
    std::vector<Timeline> cluster_support(n_clusters);
    for (const auto& [id, sup] : supports) {
        const int c = assign.at(id);
        cluster_support[c] = timeline_union(cluster_support[c], sup);
    }

    // Speakers named in order of first appearance.
    std::vector<int> order(n_clusters);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = cluster_support[a].segments.front().start;
        const double sb = cluster_support[b].segments.front().start;
        return std::tie(sa, a) < std::tie(sb, b);
    });
    for (size_t k = 0; k < order.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "spk%02zu", k);
        out.speakers.space.names.push_back(name);
        for (const Segment& s : cluster_support[order[k]].segments)
            out.speakers.entries.push_back({s, static_cast<int>(k)});
    }
    out.speakers.sort_entries();
    return out;
}

// Maximal runs of a constant speaker, identities dropped: boundaries appear
// exactly at speaker changes and at gaps wider than the merge tolerance.
inline std::vector<Segment> speaker_change_segments(const LabeledAnnotation& speakers) {
    const LabeledAnnotation flat = flatten(speakers);
    std::vector<Segment> out;
    int prev_label = -2;
    for (const AnnEntry& e : flat.entries) {
        if (!out.empty() && e.label == prev_label && e.seg.start < out.back().end + kMergeTol) {
            out.back().end = std::max(out.back().end, e.seg.end);
        } else {
            out.push_back(e.seg);
        }
        prev_label = e.label;
    }
    return out;
}

} // namespace langdiar
