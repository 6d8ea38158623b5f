#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "langdiar/synthgen.hpp"

using namespace langdiar;

namespace {

MixSpec three_lang_spec(MixMode mode, GapMode gap, int n_files, uint64_t seed) {
    MixSpec s;
    s.mode = mode;
    s.gap = gap;
    s.n_files = n_files;
    s.languages = {"lang0", "lang1", "lang2"};
    s.seed = seed;
    return s;
}

} // namespace

TEST_CASE("playlists are deterministic and respect duration bounds", "[synthgen]") {
    const MixSpec spec = three_lang_spec(MixMode::short_segments, GapMode::one_second, 60, 7);
    const auto a = make_mix_playlists(spec);
    const auto b = make_mix_playlists(spec);
    REQUIRE(a.size() == 60);
    REQUIRE(b.size() == 60);
    for (size_t f = 0; f < a.size(); ++f) {
        CHECK(a[f].file_id == b[f].file_id);
        REQUIRE(a[f].entries.size() == b[f].entries.size());
        for (size_t k = 0; k < a[f].entries.size(); ++k) {
            CHECK(a[f].entries[k].language == b[f].entries[k].language);
            CHECK(a[f].entries[k].duration_units == b[f].entries[k].duration_units);
            CHECK(a[f].entries[k].render_seed == b[f].entries[k].render_seed);
        }
        for (const MixEntry& e : a[f].entries) {
            CHECK(e.duration_units >= 500);
            CHECK(e.duration_units <= 1500);
        }
        // speech accumulates to at least the target, last segment kept whole
        long speech = 0;
        for (const MixEntry& e : a[f].entries) speech += e.duration_units;
        CHECK(speech >= 6000);
        CHECK(speech - a[f].entries.back().duration_units < 6000);
    }

    const auto longer =
        make_mix_playlists(three_lang_spec(MixMode::long_segments, GapMode::none, 10, 3));
    for (const auto& pl : longer)
        for (const MixEntry& e : pl.entries) {
            CHECK(e.duration_units >= 1500);
            CHECK(e.duration_units <= 4500);
        }
}

TEST_CASE("language sampling is roughly uniform across files", "[synthgen]") {
    long counts[3] = {0, 0, 0};
    long total = 0;
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
        const auto pls =
            make_mix_playlists(three_lang_spec(MixMode::short_segments, GapMode::none, 60, seed));
        for (const auto& pl : pls)
            for (const MixEntry& e : pl.entries) {
                ++counts[e.language];
                ++total;
            }
    }
    for (long c : counts) {
        const double share = static_cast<double>(c) / total;
        CHECK(share > 0.23);
        CHECK(share < 0.43);
    }
}

TEST_CASE("ground-truth starts follow duration-plus-gap arithmetic", "[synthgen]") {
    const auto pls =
        make_mix_playlists(three_lang_spec(MixMode::short_segments, GapMode::one_second, 3, 21));
    for (const auto& pl : pls) {
        const LabeledAnnotation truth = pl.language_truth();
        REQUIRE(truth.entries.size() == pl.entries.size());  // 1 s gaps keep entries apart
        long cursor = 0;
        for (size_t k = 0; k < pl.entries.size(); ++k) {
            CHECK(truth.entries[k].seg.start == static_cast<double>(cursor) / 100.0);
            cursor += pl.entries[k].duration_units;
            CHECK(truth.entries[k].seg.end == static_cast<double>(cursor) / 100.0);
            cursor += pl.gap_units;
        }
    }
}

TEST_CASE("no-gap truth merges consecutive same-language entries", "[synthgen]") {
    MixPlaylist pl;
    pl.file_id = "f";
    pl.languages.kind = LabelKind::language;
    pl.languages.names = {"a", "b"};
    pl.gap_units = 0;
    pl.entries = {{0, 0, 600, 1}, {0, 1, 700, 2}, {1, 2, 500, 3}};
    const LabeledAnnotation truth = pl.language_truth();
    REQUIRE(truth.entries.size() == 2);
    CHECK(truth.entries[0].seg.end == 13.0);
    CHECK(truth.entries[0].label == 0);
    CHECK(truth.entries[1].label == 1);
    // speakers do not merge: distinct voices
    CHECK(pl.speaker_truth().entries.size() == 3);
}

TEST_CASE("rendered audio matches the playlist sample-exactly", "[synthgen]") {
    Voicebank bank;

    MixPlaylist empty;
    empty.languages.names = {"a"};
    const RenderedMix nothing = render_synthetic_audio(empty, bank);
    CHECK(nothing.audio.empty());
    CHECK(nothing.ref_language.empty());

    MixPlaylist pl;
    pl.file_id = "two";
    pl.languages.kind = LabelKind::language;
    pl.languages.names = {"a", "b"};
    pl.gap_units = 100;
    pl.entries = {{0, 0, 1000, 41}, {1, 1, 1000, 42}};
    const RenderedMix mix = render_synthetic_audio(pl, bank);

    CHECK(mix.audio.samples.size() == 21 * 16000);
    REQUIRE(mix.ref_language.entries.size() == 2);
    CHECK(mix.ref_language.entries[0].seg.start == 0.0);
    CHECK(mix.ref_language.entries[0].seg.end == 10.0);
    CHECK(mix.ref_language.entries[1].seg.start == 11.0);
    CHECK(mix.ref_language.entries[1].seg.end == 21.0);

    // the 1 s gap is digital silence
    for (long s = 10 * 16000; s < 11 * 16000; ++s) CHECK(mix.audio.samples[s] == 0.0f);
    // speech regions are not silent
    double e0 = 0.0, e1 = 0.0;
    for (long s = 0; s < 10 * 16000; ++s) e0 += mix.audio.samples[s] * mix.audio.samples[s];
    for (long s = 11 * 16000; s < 21 * 16000; ++s) e1 += mix.audio.samples[s] * mix.audio.samples[s];
    CHECK(e0 > 1.0);
    CHECK(e1 > 1.0);

    // deterministic re-render
    const RenderedMix again = render_synthetic_audio(pl, bank);
    CHECK(again.audio.samples == mix.audio.samples);
}

TEST_CASE("speaker changes align with language changes under fresh voices", "[synthgen]") {
    const auto pls =
        make_mix_playlists(three_lang_spec(MixMode::short_segments, GapMode::none, 2, 5));
    for (const auto& pl : pls) {
        const LabeledAnnotation spk = pl.speaker_truth();
        REQUIRE(spk.entries.size() == pl.entries.size());  // fresh voice per segment
        std::set<int> labels;
        for (const auto& e : spk.entries) labels.insert(e.label);
        CHECK(labels.size() == pl.entries.size());
    }

    MixSpec reuse = three_lang_spec(MixMode::short_segments, GapMode::none, 2, 5);
    reuse.reuse_voice = true;
    for (const auto& pl : make_mix_playlists(reuse)) {
        const LabeledAnnotation spk = pl.speaker_truth();
        REQUIRE(spk.entries.size() == 1);  // one voice, no gaps: single span
        CHECK(spk.space.size() == 1);
    }
}

TEST_CASE("corpus concatenation cuts seeded excerpts", "[synthgen]") {
    Voicebank bank;
    std::vector<std::pair<AudioBuffer, std::string>> corpus;
    for (int l = 0; l < 2; ++l) {
        AudioBuffer a;
        a.sample_rate = 16000;
        a.samples = bank.render_segment(l, 0, 2000, 55 + l);  // 20 s per language
        corpus.push_back({std::move(a), l == 0 ? "a" : "b"});
    }

    MixPlaylist pl;
    pl.file_id = "c";
    pl.languages.kind = LabelKind::language;
    pl.languages.names = {"a", "b"};
    pl.gap_units = 100;
    pl.entries = {{0, 0, 800, 0}, {1, 1, 600, 0}, {0, 2, 700, 0}};

    const auto [audio, truth] = concat_from_corpus(corpus, pl, 99);
    CHECK(audio.samples.size() == static_cast<size_t>(pl.total_units()) * 160);
    CHECK(truth.entries.size() == 3);

    const auto [audio2, truth2] = concat_from_corpus(corpus, pl, 99);
    CHECK(audio2.samples == audio.samples);

    const auto [audio3, truth3] = concat_from_corpus(corpus, pl, 100);
    CHECK(audio3.samples != audio.samples);

    // an entry longer than any source file fails, naming the language
    MixPlaylist too_long = pl;
    too_long.entries = {{1, 0, 2100, 0}};
    CHECK_THROWS_WITH(concat_from_corpus(corpus, too_long, 1),
                      Catch::Matchers::ContainsSubstring("'b'"));
}

TEST_CASE("training mix stream labels frames at boundaries", "[synthgen]") {
    Voicebank bank;
    LabelSpace langs;
    langs.kind = LabelKind::language;
    langs.names = {"a", "b"};

    SECTION("single-language samples give constant labels") {
        std::vector<std::pair<AudioBuffer, std::string>> samples;
        AudioBuffer s;
        s.sample_rate = 16000;
        s.samples = bank.render_segment(0, 0, 300, 1);
        samples.push_back({s, "a"});
        TrainingMixStream stream(samples, langs, 10.0, 4);
        for (int i = 0; i < 3; ++i) {
            const auto [mix, labels] = stream.next();
            for (int l : labels) CHECK(l == 0);
        }
    }

    SECTION("3 s + 4 s concatenation switches at frame 300") {
        std::vector<std::pair<AudioBuffer, std::string>> samples;
        AudioBuffer s3, s4;
        s3.sample_rate = s4.sample_rate = 16000;
        s3.samples = bank.render_segment(0, 0, 300, 1);
        s4.samples = bank.render_segment(1, 1, 400, 2);
        samples.push_back({s3, "a"});
        samples.push_back({s4, "b"});
        TrainingMixStream stream(samples, langs, 10.0, 8);
        bool found = false;
        for (int i = 0; i < 60 && !found; ++i) {
            const auto [mix, labels] = stream.next();
            if (labels.size() == 700 && labels.front() == 0 && labels.back() == 1) {
                found = true;
                for (int f = 0; f < 300; ++f) CHECK(labels[f] == 0);
                for (int f = 300; f < 700; ++f) CHECK(labels[f] == 1);
            }
        }
        CHECK(found);
    }

    SECTION("replay with the same seed is identical") {
        std::vector<std::pair<AudioBuffer, std::string>> samples;
        AudioBuffer s;
        s.sample_rate = 16000;
        s.samples = bank.render_segment(0, 3, 450, 9);
        samples.push_back({s, "a"});
        AudioBuffer t;
        t.sample_rate = 16000;
        t.samples = bank.render_segment(1, 4, 350, 10);
        samples.push_back({t, "b"});

        TrainingMixStream one(samples, langs, 10.0, 123);
        TrainingMixStream two(samples, langs, 10.0, 123);
        for (int i = 0; i < 5; ++i) {
            const auto [ma, la] = one.next();
            const auto [mb, lb] = two.next();
            CHECK(ma.samples == mb.samples);
            CHECK(la == lb);
        }
    }
}
