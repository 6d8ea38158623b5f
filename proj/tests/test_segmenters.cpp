#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "langdiar/segmenters.hpp"

using namespace langdiar;

namespace {

AudioBuffer tone_with_silence(double lead_s, double tone_s, double tail_s, double freq = 440.0,
                              float gain = 0.5f, int rate = 16000) {
    AudioBuffer a;
    a.sample_rate = rate;
    const long lead = static_cast<long>(lead_s * rate);
    const long tone = static_cast<long>(tone_s * rate);
    const long tail = static_cast<long>(tail_s * rate);
    a.samples.assign(lead + tone + tail, 0.0f);
    for (long i = 0; i < tone; ++i)
        a.samples[lead + i] =
            gain * static_cast<float>(std::sin(2.0 * M_PI * freq * i / rate));
    return a;
}

ChunkResult make_chunk(int index, long start_frame, long frames,
                       std::vector<std::vector<float>> slots) {
    ChunkResult r;
    r.chunk_index = index;
    r.start_frame = start_frame;
    r.span = {static_cast<double>(start_frame) / kFrameRate,
              static_cast<double>(start_frame + frames) / kFrameRate};
    r.slot_activity = std::move(slots);
    r.active_mask.assign(r.slot_activity.size(), false);
    r.slot_embedding.assign(r.slot_activity.size(), std::nullopt);
    return r;
}

} // namespace

TEST_CASE("energy vad on silence and constructed signals", "[segmenters]") {
    VadConfig cfg;
    cfg.energy_threshold_db = -30.0;

    CHECK(energy_vad(AudioBuffer{}, cfg).empty());

    AudioBuffer zeros;
    zeros.samples.assign(16000, 0.0f);
    CHECK(energy_vad(zeros, cfg).empty());

    const AudioBuffer tone = tone_with_silence(1.0, 1.0, 1.0);
    const Timeline t = energy_vad(tone, cfg);
    REQUIRE(t.size() == 1);
    CHECK(t.segments[0].start == Catch::Approx(1.0).margin(0.011));
    CHECK(t.segments[0].end == Catch::Approx(2.0).margin(0.011));
}

TEST_CASE("energy vad marks uniform noise as one segment", "[segmenters]") {
    AudioBuffer noise;
    noise.sample_rate = 16000;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 32000; ++i)
        noise.samples.push_back(0.2f * ((rng() % 2000) / 1000.0f - 1.0f));
    const Timeline t = energy_vad(noise, {});
    REQUIRE(t.size() == 1);
    CHECK(t.segments[0].start == 0.0);
    CHECK(t.segments[0].end == Catch::Approx(2.0));
}

TEST_CASE("energy vad is invariant to global gain", "[segmenters]") {
    AudioBuffer a = tone_with_silence(0.5, 0.8, 0.7);
    AudioBuffer louder = a;
    for (float& s : louder.samples) s *= 0.25f;  // scale down instead, avoids clipping
    const Timeline ta = energy_vad(a, {});
    const Timeline tb = energy_vad(louder, {});
    REQUIRE(ta.size() == tb.size());
    for (size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta.segments[i].start == tb.segments[i].start);
        CHECK(ta.segments[i].end == tb.segments[i].end);
    }
}

TEST_CASE("energy vad hangover widens segments", "[segmenters]") {
    VadConfig plain;
    VadConfig wide;
    wide.hangover = 5;
    const AudioBuffer tone = tone_with_silence(1.0, 0.5, 1.0);
    const Timeline t0 = energy_vad(tone, plain);
    const Timeline t1 = energy_vad(tone, wide);
    REQUIRE(t0.size() == 1);
    REQUIRE(t1.size() == 1);
    CHECK(t1.segments[0].start == Catch::Approx(t0.segments[0].start - 0.05).margin(1e-9));
    CHECK(t1.segments[0].end == Catch::Approx(t0.segments[0].end + 0.05).margin(1e-9));
}

TEST_CASE("stitch_local_vad thresholds and merges across chunks", "[segmenters]") {
    SECTION("all zero activity") {
        auto c0 = make_chunk(0, 0, 3000, {std::vector<float>(3000, 0.0f)});
        auto c1 = make_chunk(1, 3000, 3000, {std::vector<float>(3000, 0.0f)});
        CHECK(stitch_local_vad({c0, c1}, 0.5).empty());
    }
    SECTION("active second chunk only") {
        auto c0 = make_chunk(0, 0, 3000, {std::vector<float>(3000, 0.0f)});
        auto c1 = make_chunk(1, 3000, 3000, {std::vector<float>(3000, 1.0f)});
        const Timeline t = stitch_local_vad({c0, c1}, 0.5);
        REQUIRE(t.size() == 1);
        CHECK(t.segments[0].start == 30.0);
        CHECK(t.segments[0].end == 60.0);
    }
    SECTION("speech spanning the boundary merges") {
        std::vector<float> a0(3000, 0.0f), a1(3000, 0.0f);
        for (long f = 2500; f < 3000; ++f) a0[f] = 1.0f;  // last 5 s of chunk 1
        for (long f = 0; f < 500; ++f) a1[f] = 1.0f;      // first 5 s of chunk 2
        auto c0 = make_chunk(0, 0, 3000, {a0});
        auto c1 = make_chunk(1, 3000, 3000, {a1});
        const Timeline t = stitch_local_vad({c0, c1}, 0.5);
        REQUIRE(t.size() == 1);
        CHECK(t.segments[0].start == 25.0);
        CHECK(t.segments[0].end == 35.0);
    }
    SECTION("max over slots and slot permutation invariance") {
        std::vector<float> low(1000, 0.3f), high(1000, 0.9f);
        auto ab = make_chunk(0, 0, 1000, {low, high});
        auto ba = make_chunk(0, 0, 1000, {high, low});
        const Timeline t_ab = stitch_local_vad({ab}, 0.5);
        const Timeline t_ba = stitch_local_vad({ba}, 0.5);
        REQUIRE(t_ab.size() == 1);
        CHECK(t_ab.segments[0].end == 10.0);
        REQUIRE(t_ba.size() == t_ab.size());
        CHECK(t_ba.segments[0].start == t_ab.segments[0].start);
        CHECK(t_ba.segments[0].end == t_ab.segments[0].end);
    }
    SECTION("broken tiling is rejected") {
        auto c0 = make_chunk(0, 0, 3000, {std::vector<float>(3000, 0.0f)});
        auto c1 = make_chunk(1, 3100, 3000, {std::vector<float>(3000, 0.0f)});  // gap
        CHECK_THROWS_AS(stitch_local_vad({c0, c1}, 0.5), DataError);
        auto c2 = make_chunk(1, 2900, 3000, {std::vector<float>(3000, 0.0f)});  // overlap
        CHECK_THROWS_AS(stitch_local_vad({c0, c2}, 0.5), DataError);
    }
}

TEST_CASE("postprocess discards short and splits long segments", "[segmenters]") {
    Timeline in;
    in.segments = {{0.0, 0.5}};
    CHECK(postprocess_segments(in).empty());

    in.segments = {{0.0, 50.0}};
    const Timeline split = postprocess_segments(in);
    REQUIRE(split.size() == 3);
    CHECK(split.segments[0].start == 0.0);
    CHECK(split.segments[0].end == Catch::Approx(50.0 / 3.0));
    CHECK(split.segments[1].end == Catch::Approx(100.0 / 3.0));
    CHECK(split.segments[2].end == 50.0);
    CHECK(split.segments[0].end == split.segments[1].start);  // shared cut points
    CHECK(split.segments[1].end == split.segments[2].start);

    in.segments = {{0.0, 15.0}};
    const Timeline same = postprocess_segments(in);
    REQUIRE(same.size() == 1);
    CHECK(same.segments[0].end == 15.0);

    CHECK_THROWS_AS(postprocess_segments(in, 20.0, 20.0), ConfigError);
}

TEST_CASE("postprocess piece lengths stay within bounds", "[segmenters]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> len(0.0, 120.0);
    const double min_len = 1.0, max_len = 20.0;
    Timeline in;
    double cursor = 0.0;
    double kept_expected = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double d = len(rng);
        if (d < 1e-3) continue;
        in.segments.push_back({cursor, cursor + d});
        if (d >= min_len) kept_expected += d;
        cursor += d + 1.0;
    }
    const Timeline out = postprocess_segments(in, min_len, max_len);
    double covered = 0.0;
    for (const Segment& s : out.segments) {
        CHECK(s.duration() <= max_len + 1e-9);
        covered += s.duration();
    }
    // coverage shrinks only by the discarded short segments
    CHECK(covered == Catch::Approx(kept_expected).margin(1e-6));

    // pieces produced by splitting are never shorter than max_len / 2
    Timeline long_only;
    cursor = 0.0;
    for (int i = 0; i < 30; ++i) {
        const double d = max_len + len(rng);
        long_only.segments.push_back({cursor, cursor + d});
        cursor += d + 1.0;
    }
    for (const Segment& s : postprocess_segments(long_only, min_len, max_len).segments) {
        CHECK(s.duration() <= max_len + 1e-9);
        CHECK(s.duration() >= max_len / 2.0 - 1e-9);
    }
}

TEST_CASE("postprocess labeled variant inherits labels", "[segmenters]") {
    LabeledAnnotation ann;
    ann.space.kind = LabelKind::language;
    ann.space.names = {"x", "y"};
    ann.entries = {{{0.0, 0.2}, 0}, {{1.0, 45.0}, 1}};
    const LabeledAnnotation out = postprocess_segments(ann);
    REQUIRE(out.entries.size() == 3);
    for (const auto& e : out.entries) {
        CHECK(e.label == 1);
        CHECK(e.seg.duration() <= 20.0 + 1e-9);
    }
    CHECK(out.entries.front().seg.start == 1.0);
    CHECK(out.entries.back().seg.end == 45.0);
}
