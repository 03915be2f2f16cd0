#include "metaccent/features/spectrogram.hpp"

#include <cmath>
#include <numbers>

#include "metaccent/error.hpp"

namespace metaccent::features {

namespace {

// In-place iterative radix-2 Cooley-Tukey; size must be a power of two.
void fft(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(frame_length_ms * sample_rate / 1000.0));
}

int FeatureConfig::hop_samples() const {
  return static_cast<int>(std::lround(frame_shift_ms * sample_rate / 1000.0));
}

int FeatureConfig::fft_size() const {
  int n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<std::vector<double>> mel_filterbank(int n_mels, int fft_size,
                                                int sample_rate, double fmin_hz,
                                                double fmax_hz) {
  if (n_mels < 1) throw ConfigError("features.mel_filterbank: n_mels must be >= 1");
  const int n_bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  std::vector<std::vector<double>> bank(n_mels, std::vector<double>(n_bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double left = centers[m], mid = centers[m + 1], right = centers[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f <= left || f >= right) continue;
      bank[m][k] = f <= mid ? (f - left) / (mid - left)
                            : (right - f) / (right - mid);
    }
  }
  return bank;
}

FeatureSequence spectrogram(const Waveform& w, const FeatureConfig& cfg) {
  validate(w, "features.spectrogram");
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("features.spectrogram: waveform rate " +
                      std::to_string(w.sample_rate) +
                      " does not match configured " +
                      std::to_string(cfg.sample_rate));
  const int window = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const int n_fft = cfg.fft_size();
  const std::size_t N = w.samples.size();
  if (N < static_cast<std::size_t>(window))
    throw LengthError("features.spectrogram: " + std::to_string(N) +
                      " samples but the window needs " +
                      std::to_string(window));

  const std::size_t T = 1 + (N - window) / hop;
  const auto bank = mel_filterbank(cfg.n_mels, n_fft, cfg.sample_rate,
                                   cfg.fmin_hz, cfg.sample_rate / 2.0);

  std::vector<double> hann(window);
  for (int i = 0; i < window; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window);

  FeatureSequence out;
  out.n_frames = T;
  out.n_bins = static_cast<std::size_t>(cfg.n_mels);
  out.frame_shift_ms = cfg.frame_shift_ms;
  out.frame_length_ms = cfg.frame_length_ms;
  out.frames.resize(T * out.n_bins);

  std::vector<double> re(n_fft), im(n_fft);
  const int n_bins = n_fft / 2 + 1;
  std::vector<double> power(n_bins);
  for (std::size_t t = 0; t < T; ++t) {
    const float* src = w.samples.data() + t * hop;
    for (int i = 0; i < window; ++i) re[i] = src[i] * hann[i];
    std::fill(re.begin() + window, re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    fft(re, im);
    for (int k = 0; k < n_bins; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0;
      const auto& filt = bank[m];
      for (int k = 0; k < n_bins; ++k) acc += filt[k] * power[k];
      out.frames[t * out.n_bins + m] =
          static_cast<float>(std::log(std::max(acc, cfg.power_floor)));
    }
  }
  return out;
}

}  // namespace metaccent::features
