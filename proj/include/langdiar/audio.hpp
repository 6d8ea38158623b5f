#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "langdiar/error.hpp"

namespace langdiar {

// Mono PCM audio, float samples in [-1, 1].
struct AudioBuffer {
    int sample_rate = 16000;
    std::vector<float> samples;

    double duration() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
    bool empty() const { return samples.empty(); }
};

inline bool supported_sample_rate(int rate) { return rate == 8000 || rate == 16000; }

// Samples per 10 ms analysis frame; both supported rates divide evenly.
inline int samples_per_frame(const AudioBuffer& a) { return a.sample_rate / 100; }

inline long frame_count(const AudioBuffer& a) {
    const int spf = samples_per_frame(a);
    return (static_cast<long>(a.samples.size()) + spf - 1) / spf;
}

// ---------------------------------------------------------------------------
// WAV I/O — PCM16 mono, 8 kHz or 16 kHz only.
// ---------------------------------------------------------------------------

inline AudioBuffer read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open WAV file: " + path);

    char riff[4], wave[4];
    uint32_t riff_size = 0;
    f.read(riff, 4);
    f.read(reinterpret_cast<char*>(&riff_size), 4);
    f.read(wave, 4);
    if (!f || std::strncmp(riff, "RIFF", 4) != 0 || std::strncmp(wave, "WAVE", 4) != 0)
        throw DataError("not a RIFF/WAVE file: " + path);

    uint16_t audio_format = 0, num_channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    bool have_fmt = false;

    AudioBuffer out;
    while (f) {
        char chunk_id[4];
        uint32_t chunk_size = 0;
        f.read(chunk_id, 4);
        f.read(reinterpret_cast<char*>(&chunk_size), 4);
        if (!f) break;
        if (std::strncmp(chunk_id, "fmt ", 4) == 0) {
            std::vector<char> fmt(chunk_size);
            f.read(fmt.data(), chunk_size);
            if (chunk_size < 16) throw DataError("malformed fmt chunk: " + path);
            std::memcpy(&audio_format, fmt.data() + 0, 2);
            std::memcpy(&num_channels, fmt.data() + 2, 2);
            std::memcpy(&sample_rate, fmt.data() + 4, 4);
            std::memcpy(&bits, fmt.data() + 14, 2);
            have_fmt = true;
        } else if (std::strncmp(chunk_id, "data", 4) == 0) {
            if (!have_fmt) throw DataError("data chunk before fmt chunk: " + path);
            if (audio_format != 1)
                throw DataError(path + ": only PCM WAV supported (format " +
                                std::to_string(audio_format) + ")");
            if (num_channels != 1)
                throw DataError(path + ": only mono WAV supported (" +
                                std::to_string(num_channels) + " channels)");
            if (bits != 16)
                throw DataError(path + ": only 16-bit PCM supported (" + std::to_string(bits) +
                                " bits)");
            if (!supported_sample_rate(static_cast<int>(sample_rate)))
                throw DataError(path + ": unsupported sample rate " + std::to_string(sample_rate) +
                                " (need 8000 or 16000)");
            const uint32_t n = chunk_size / 2;
            std::vector<int16_t> pcm(n);
            f.read(reinterpret_cast<char*>(pcm.data()), n * 2);
            if (!f) throw DataError("truncated data chunk: " + path);
            out.sample_rate = static_cast<int>(sample_rate);
            out.samples.resize(n);
            for (uint32_t i = 0; i < n; ++i) out.samples[i] = pcm[i] / 32768.0f;
            return out;
        } else {
            f.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
        }
    }
    throw DataError("no data chunk found: " + path);
}

inline void write_wav(const std::string& path, const AudioBuffer& audio) {
    if (!supported_sample_rate(audio.sample_rate))
        throw DataError("unsupported sample rate " + std::to_string(audio.sample_rate));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write WAV file: " + path);

    const uint32_t n = static_cast<uint32_t>(audio.samples.size());
    const uint32_t data_size = n * 2;
    const uint32_t riff_size = 36 + data_size;
    const uint16_t fmt_pcm = 1, channels = 1, bits = 16;
    const uint32_t rate = static_cast<uint32_t>(audio.sample_rate);
    const uint32_t byte_rate = rate * 2;
    const uint16_t block_align = 2;
    const uint32_t fmt_size = 16;

    f.write("RIFF", 4);
    f.write(reinterpret_cast<const char*>(&riff_size), 4);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    f.write(reinterpret_cast<const char*>(&fmt_size), 4);
    f.write(reinterpret_cast<const char*>(&fmt_pcm), 2);
    f.write(reinterpret_cast<const char*>(&channels), 2);
    f.write(reinterpret_cast<const char*>(&rate), 4);
    f.write(reinterpret_cast<const char*>(&byte_rate), 4);
    f.write(reinterpret_cast<const char*>(&block_align), 2);
    f.write(reinterpret_cast<const char*>(&bits), 2);
    f.write("data", 4);
    f.write(reinterpret_cast<const char*>(&data_size), 4);

    std::vector<int16_t> pcm(n);
    for (uint32_t i = 0; i < n; ++i) {
        const float x = std::clamp(audio.samples[i], -1.0f, 1.0f);
        pcm[i] = static_cast<int16_t>(std::lrintf(x * 32767.0f));
    }
    f.write(reinterpret_cast<const char*>(pcm.data()), data_size);
    if (!f) throw DataError("write failed: " + path);
}

} // namespace langdiar
