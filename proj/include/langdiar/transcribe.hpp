#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "langdiar/audio.hpp"
#include "langdiar/timeline.hpp"

// Per-language transcription routing. Real recognizers sit behind an
// external-service boundary: the client receives one audio span plus its
// hypothesized language and returns a token sequence (or fails).

namespace langdiar {

class TranscriptionClient {
public:
    virtual ~TranscriptionClient() = default;
    // Throws ClientError on a per-segment failure.
    virtual std::vector<std::string> transcribe(const AudioBuffer& audio, const Segment& seg,
                                                const std::string& language) const = 0;
};

// Deterministic stand-in: emits ~2 tokens per second derived from the
// language and the segment start time.
class MockTranscriptionClient : public TranscriptionClient {
public:
    std::vector<std::string> transcribe(const AudioBuffer& audio, const Segment& seg,
                                        const std::string& language) const override {
        (void)audio;
        const long n = std::max<long>(1, std::llround(seg.duration() * 2.0));
        const long start_ms = std::llround(seg.start * 1000.0);
        std::vector<std::string> tokens;
        tokens.reserve(n);
        for (long i = 0; i < n; ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%s_%ld_%ld", language.c_str(), start_ms, i);
            tokens.push_back(buf);
        }
        return tokens;
    }
};

// Always fails; handy for exercising the per-segment error path.
class FailingTranscriptionClient : public TranscriptionClient {
public:
    std::vector<std::string> transcribe(const AudioBuffer&, const Segment&,
                                        const std::string& language) const override {
        throw ClientError("transcription backend unavailable for '" + language + "'");
    }
};

enum class MissingClientPolicy { skip, fail };

struct TranscriptionResult {
    std::vector<std::string> tokens;     // temporal order
    std::vector<std::string> warnings;   // skipped segments
    std::vector<std::string> errors;     // per-segment client failures
};

// Dispatches each language segment to its language's client and concatenates
// the returned token sequences in temporal order. A missing client either
// skips the segment with a warning or fails the file, per policy; a client
// failure is recorded and the file continues.
inline TranscriptionResult route_and_transcribe(
    const LabeledAnnotation& languages, const AudioBuffer& audio,
    const std::map<std::string, const TranscriptionClient*>& clients,
    MissingClientPolicy policy = MissingClientPolicy::fail) {
    TranscriptionResult out;
    LabeledAnnotation ann = languages;
    ann.sort_entries();
    for (const AnnEntry& e : ann.entries) {
        const std::string& lang = ann.space.name_of(e.label);
        const auto it = clients.find(lang);
        if (it == clients.end() || it->second == nullptr) {
            if (policy == MissingClientPolicy::fail)
                throw ClientError("no transcription client registered for language '" + lang +
                                  "'");
            out.warnings.push_back("segment " + segment_str(e.seg) + " skipped: no client for '" +
                                   lang + "'");
            continue;
        }
        try {
            std::vector<std::string> tokens = it->second->transcribe(audio, e.seg, lang);
            out.tokens.insert(out.tokens.end(), tokens.begin(), tokens.end());
        } catch (const ClientError& err) {
            out.errors.push_back("segment " + segment_str(e.seg) + ": " + err.what());
        }
    }
    return out;
}

} // namespace langdiar
