#pragma once

#include <cstddef>
#include <vector>

#include "metaccent/features/waveform.hpp"

namespace metaccent::features {

struct FeatureConfig {
  int sample_rate = 16000;
  double frame_length_ms = 25.0;  // 400 samples at 16 kHz
  double frame_shift_ms = 10.0;   // 160 samples
  int n_mels = 80;
  double fmin_hz = 0.0;           // fmax is Nyquist
  double power_floor = 1e-10;     // applied before the log

  int window_samples() const;
  int hop_samples() const;
  int fft_size() const;  // next power of two >= window
};

struct FeatureSequence {
  std::vector<float> frames;  // row-major [n_frames, n_bins]
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;

  const float* frame(std::size_t t) const { return frames.data() + t * n_bins; }
};

// Log-mel power spectrogram: Hann window, zero-padded radix-2 FFT, HTK mel
// triangles over [fmin, Nyquist]. n_frames = 1 + floor((N - window) / hop).
FeatureSequence spectrogram(const Waveform& w, const FeatureConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filter weights, [n_mels][fft_size/2 + 1]. Exposed so tests can
// locate bin boundaries in closed form.
std::vector<std::vector<double>> mel_filterbank(int n_mels, int fft_size,
                                                int sample_rate, double fmin_hz,
                                                double fmax_hz);

}  // namespace metaccent::features
