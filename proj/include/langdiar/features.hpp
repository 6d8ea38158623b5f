#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "langdiar/audio.hpp"

// Per-frame log-mel band energies at 100 Hz (10 ms non-overlapping frames).
// Shared by the reference speaker embedder, the reference local diarizer
// and the reference language classifier.

namespace langdiar {

inline constexpr double kFrameRate = 100.0;
inline constexpr int kMelBands = 8;
inline constexpr double kMelFmin = 100.0;

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// In-place radix-2 Cooley-Tukey FFT.
inline void fft_inplace(std::vector<std::complex<double>>& x) {
    const size_t n = x.size();
    if (n <= 1) return;
    size_t j = 0;
    for (size_t i = 0; i < n; ++i) {
        if (j > i) std::swap(x[i], x[j]);
        size_t m = n >> 1;
        while (m >= 1 && j >= m) { j -= m; m >>= 1; }
        j += m;
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = w * x[i + k + len / 2];
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Triangular mel filters over an FFT power spectrum.
struct MelFilterbank {
    int sample_rate = 16000;
    int fft_size = 256;
    int n_bands = kMelBands;
    std::vector<std::vector<float>> filters;  // band x (fft_size/2 + 1)
    std::vector<double> band_center_hz;
    std::vector<double> band_lo_hz, band_hi_hz;  // triangle support edges

    static MelFilterbank make(int sample_rate, int n_bands = kMelBands) {
        MelFilterbank fb;
        fb.sample_rate = sample_rate;
        fb.fft_size = sample_rate == 8000 ? 128 : 256;
        fb.n_bands = n_bands;
        const int n_bins = fb.fft_size / 2 + 1;
        const double fmax = sample_rate / 2.0;
        const double mel_lo = hz_to_mel(kMelFmin);
        const double mel_hi = hz_to_mel(fmax);
        std::vector<double> edges(n_bands + 2);
        for (int i = 0; i < n_bands + 2; ++i)
            edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_bands + 1));
        fb.filters.assign(n_bands, std::vector<float>(n_bins, 0.0f));
        for (int m = 0; m < n_bands; ++m) {
            const double fl = edges[m], fc = edges[m + 1], fr = edges[m + 2];
            fb.band_lo_hz.push_back(fl);
            fb.band_center_hz.push_back(fc);
            fb.band_hi_hz.push_back(fr);
            for (int k = 0; k < n_bins; ++k) {
                const double freq = static_cast<double>(k) * sample_rate / fb.fft_size;
                if (freq >= fl && freq <= fc && fc > fl)
                    fb.filters[m][k] = static_cast<float>((freq - fl) / (fc - fl));
                else if (freq > fc && freq <= fr && fr > fc)
                    fb.filters[m][k] = static_cast<float>((fr - freq) / (fr - fc));
            }
        }
        return fb;
    }
};

// Linear mel band energies for every 10 ms frame; row-major T x n_bands.
// Frames are zero-padded to the FFT size and Hann-windowed.
inline std::vector<double> mel_band_energies(const AudioBuffer& audio,
                                             const MelFilterbank& fb) {
    const int spf = samples_per_frame(audio);
    const long n_frames = frame_count(audio);
    const int n_bins = fb.fft_size / 2 + 1;
    std::vector<double> window(spf);
    for (int i = 0; i < spf; ++i)
        window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (spf - 1)));

    std::vector<double> out(static_cast<size_t>(n_frames) * fb.n_bands, 0.0);
    std::vector<std::complex<double>> buf(fb.fft_size);
    std::vector<double> power(n_bins);
    for (long t = 0; t < n_frames; ++t) {
        const long off = t * spf;
        for (int i = 0; i < fb.fft_size; ++i) {
            const long s = off + i;
            const double v = (i < spf && s < static_cast<long>(audio.samples.size()))
                                 ? audio.samples[s] * window[i]
                                 : 0.0;
            buf[i] = {v, 0.0};
        }
        fft_inplace(buf);
        for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
        for (int m = 0; m < fb.n_bands; ++m) {
            double e = 0.0;
            const auto& filt = fb.filters[m];
            for (int k = 0; k < n_bins; ++k) e += power[k] * filt[k];
            out[t * fb.n_bands + m] = e;
        }
    }
    return out;
}

inline constexpr double kLogEnergyFloor = 1e-10;

// Log-mel features, row-major T x n_bands.
inline std::vector<double> logmel_frames(const AudioBuffer& audio, int n_bands = kMelBands) {
    const MelFilterbank fb = MelFilterbank::make(audio.sample_rate, n_bands);
    std::vector<double> e = mel_band_energies(audio, fb);
    for (double& v : e) v = std::log(v + kLogEnergyFloor);
    return e;
}

} // namespace langdiar
