#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "langdiar/timeline.hpp"
#include "oracle_helpers.hpp"

using namespace langdiar;

namespace {

Timeline tl(std::initializer_list<Segment> segs) {
    Timeline t;
    t.segments = segs;
    return t;
}

LabeledAnnotation lang_ann(std::initializer_list<std::pair<Segment, int>> entries,
                           int n_labels = 4) {
    LabeledAnnotation ann;
    ann.space.kind = LabelKind::language;
    for (int i = 0; i < n_labels; ++i) ann.space.names.push_back("lang" + std::to_string(i));
    for (const auto& [seg, label] : entries) ann.entries.push_back({seg, label});
    ann.sort_entries();
    return ann;
}

} // namespace

TEST_CASE("normalize merges overlap and adjacency", "[timeline]") {
    CHECK(normalize(std::vector<Segment>{}).empty());

    const Timeline merged = normalize({{0, 2}, {1, 3}});
    REQUIRE(merged.size() == 1);
    CHECK(merged.segments[0].start == 0.0);
    CHECK(merged.segments[0].end == 3.0);

    const Timeline t = normalize({{0, 1}, {1, 2}, {5, 6}});
    REQUIRE(t.size() == 2);
    CHECK(t.segments[0].start == 0.0);
    CHECK(t.segments[0].end == 2.0);
    CHECK(t.segments[1].start == 5.0);

    CHECK_THROWS_AS(normalize({{2, 2}}), DataError);
    CHECK_THROWS_AS(normalize({{3, 1}}), DataError);
    CHECK_THROWS_AS(normalize({{-1, 1}}), DataError);
}

TEST_CASE("intersect and subtract basics", "[timeline]") {
    CHECK(intersect(tl({{0, 10}}), Timeline{}).empty());

    const Timeline i = intersect(tl({{0, 5}}), tl({{3, 8}}));
    REQUIRE(i.size() == 1);
    CHECK(i.segments[0].start == 3.0);
    CHECK(i.segments[0].end == 5.0);

    CHECK(subtract(tl({{0, 5}}), tl({{0, 5}})).empty());

    const Timeline s = subtract(tl({{0, 5}}), tl({{2, 3}}));
    REQUIRE(s.size() == 2);
    CHECK(s.segments[0].end == 2.0);
    CHECK(s.segments[1].start == 3.0);
    CHECK(s.segments[1].end == 5.0);
}

TEST_CASE("interval ops agree with 1 ms rasterization on random input", "[timeline]") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Segment> sa, sb;
        for (int i = 0; i < 20; ++i) {
            const double a0 = u(rng), a1 = a0 + 0.05 + u(rng) * 0.05;
            const double b0 = u(rng), b1 = b0 + 0.05 + u(rng) * 0.05;
            sa.push_back({a0, a1});
            sb.push_back({b0, b1});
        }
        const Timeline a = normalize(sa), b = normalize(sb);
        const double total = 120.0;

        // quarter-millisecond raster keeps the per-boundary quantization
        // noise of ~40 random boundaries inside the 2 ms budget
        const double dt = 0.00025;
        const auto ra = testoracle::rasterize(a, total, dt);
        const auto rb = testoracle::rasterize(b, total, dt);
        std::vector<char> r_and(ra.size()), r_diff(ra.size());
        for (size_t i = 0; i < ra.size(); ++i) {
            r_and[i] = ra[i] && rb[i];
            r_diff[i] = ra[i] && !rb[i];
        }
        CHECK(std::abs(intersect(a, b).duration() - testoracle::raster_duration(r_and, dt)) < 2e-3);
        CHECK(std::abs(subtract(a, b).duration() - testoracle::raster_duration(r_diff, dt)) < 2e-3);

        // additivity is exact to 1e-9
        const double resid = a.duration() - subtract(a, b).duration() - intersect(a, b).duration();
        CHECK(std::abs(resid) <= 1e-9);
    }
}

TEST_CASE("flatten resolves overlap by earlier start then lower label", "[timeline]") {
    // non-overlapping input is untouched, including abutting same-label entries
    const auto plain = lang_ann({{{0, 2}, 1}, {{2, 4}, 1}, {{5, 6}, 0}});
    const auto flat_plain = flatten(plain);
    REQUIRE(flat_plain.entries.size() == 3);
    CHECK(flat_plain.entries[0].seg.end == 2.0);
    CHECK(flat_plain.entries[1].seg.start == 2.0);

    const auto overlap = flatten(lang_ann({{{0, 4}, 0}, {{2, 6}, 1}}));
    REQUIRE(overlap.entries.size() == 2);
    CHECK(overlap.entries[0].seg.start == 0.0);
    CHECK(overlap.entries[0].seg.end == 4.0);
    CHECK(overlap.entries[0].label == 0);
    CHECK(overlap.entries[1].seg.start == 4.0);
    CHECK(overlap.entries[1].seg.end == 6.0);
    CHECK(overlap.entries[1].label == 1);

    // same start: lower label id wins the whole span
    const auto tie = flatten(lang_ann({{{0, 4}, 1}, {{0, 4}, 0}}));
    REQUIRE(tie.entries.size() == 1);
    CHECK(tie.entries[0].label == 0);
    CHECK(tie.entries[0].seg.start == 0.0);
    CHECK(tie.entries[0].seg.end == 4.0);

    // earlier start beats lower label id
    const auto shadow = flatten(lang_ann({{{0, 4}, 2}, {{2, 6}, 0}}));
    REQUIRE(shadow.entries.size() == 2);
    CHECK(shadow.entries[0].label == 2);
    CHECK(shadow.entries[0].seg.end == 4.0);
    CHECK(shadow.entries[1].label == 0);
}

TEST_CASE("flatten is idempotent and preserves covered time", "[timeline]") {
    std::mt19937_64 rng(99);
    testoracle::RandomAnnotationOptions opt;
    opt.max_segments = 30;
    for (int trial = 0; trial < 30; ++trial) {
        const auto ann = testoracle::random_annotation(rng, opt, LabelKind::language, true);
        const auto flat = flatten(ann);
        const auto flat2 = flatten(flat);
        REQUIRE(flat2.entries.size() == flat.entries.size());
        for (size_t i = 0; i < flat.entries.size(); ++i) {
            CHECK(flat2.entries[i].seg.start == flat.entries[i].seg.start);
            CHECK(flat2.entries[i].seg.end == flat.entries[i].seg.end);
            CHECK(flat2.entries[i].label == flat.entries[i].label);
        }
        // no overlaps
        for (size_t i = 1; i < flat.entries.size(); ++i)
            CHECK(flat.entries[i].seg.start >= flat.entries[i - 1].seg.end);
        // covered time unchanged
        CHECK(std::abs(flat.support().duration() - ann.support().duration()) <= 1e-9);
        // winners follow the rasterized earlier-start-wins oracle
        const auto cells_in = testoracle::rasterize_labels(ann, 125.0);
        const auto cells_out = testoracle::rasterize_labels(flat, 125.0);
        long diff = 0;
        for (size_t i = 0; i < cells_in.size(); ++i) diff += cells_in[i] != cells_out[i];
        CHECK(diff * testoracle::kRasterDt < 2e-3 * (1 + ann.entries.size()));
    }
}

TEST_CASE("to_frames quantizes by frame centers", "[timeline]") {
    const auto empty = lang_ann({});
    const auto frames_empty = to_frames(empty, 100.0, 1.0);
    REQUIRE(frames_empty.size() == 100);
    for (int f : frames_empty) CHECK(f == kNonSpeechLabel);

    const auto half = flatten(lang_ann({{{0, 0.5}, 1}}));
    const auto frames_half = to_frames(half, 100.0, 1.0);
    REQUIRE(frames_half.size() == 100);
    for (int i = 0; i < 50; ++i) CHECK(frames_half[i] == 1);
    for (int i = 50; i < 100; ++i) CHECK(frames_half[i] == kNonSpeechLabel);

    // center rule: frame 0 center 0.005 lies inside (0.004, 0.016), frame 1
    // center 0.015 does too, frame 2 center 0.025 does not
    const auto tiny = flatten(lang_ann({{{0.004, 0.016}, 0}}));
    const auto frames_tiny = to_frames(tiny, 100.0, 0.05);
    REQUIRE(frames_tiny.size() == 5);
    CHECK(frames_tiny[0] == 0);
    CHECK(frames_tiny[1] == 0);
    CHECK(frames_tiny[2] == kNonSpeechLabel);

    CHECK_THROWS_AS(to_frames(half, 100.0, 0.2), DataError);
}

TEST_CASE("to_frames of flatten tracks interval durations", "[timeline]") {
    std::mt19937_64 rng(7);
    testoracle::RandomAnnotationOptions opt;
    for (int trial = 0; trial < 20; ++trial) {
        const auto ann = flatten(testoracle::random_annotation(rng, opt, LabelKind::language, true));
        const double rate = 100.0;
        const auto frames = to_frames(ann, rate, 125.0);
        std::vector<double> per_label_frames(ann.space.size(), 0.0);
        for (int f : frames)
            if (f >= 0) per_label_frames[f] += 1.0 / rate;
        for (int l = 0; l < ann.space.size(); ++l) {
            const double dur = ann.support_of(l).duration();
            CHECK(std::abs(per_label_frames[l] - dur) <=
                  (1.0 / rate) * static_cast<double>(ann.entries.size() + 1));
        }
    }
}

TEST_CASE("covers uses half-open intervals", "[timeline]") {
    const Timeline t = normalize({{1, 2}, {3, 4}});
    CHECK(covers(t, 1.0));
    CHECK(covers(t, 1.5));
    CHECK_FALSE(covers(t, 2.0));
    CHECK_FALSE(covers(t, 2.5));
    CHECK(covers(t, 3.0));
    CHECK_FALSE(covers(t, 4.0));
    CHECK_FALSE(covers(t, 0.0));
}
