#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "metaccent/error.hpp"
#include "metaccent/features/spectrogram.hpp"
#include "metaccent/features/waveform.hpp"
#include "metaccent/rng.hpp"

using namespace metaccent;
using namespace metaccent::features;

namespace {

Waveform sine(double freq_hz, int sample_rate, double seconds,
              double amplitude = 0.5) {
  Waveform w;
  w.sample_rate = sample_rate;
  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(
        amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * i / sample_rate));
  return w;
}

std::size_t zero_crossings(const std::vector<float>& s) {
  std::size_t c = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if ((s[i - 1] < 0 && s[i] >= 0) || (s[i - 1] >= 0 && s[i] < 0)) ++c;
  return c;
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

std::filesystem::path write_wav_file(const std::vector<std::int16_t>& pcm,
                                     int rate, std::uint16_t channels,
                                     std::uint16_t format_tag,
                                     const char* name) {
  std::vector<unsigned char> b;
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + static_cast<std::uint32_t>(pcm.size() * 2));
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, format_tag);
  put_u16(b, channels);
  put_u32(b, static_cast<std::uint32_t>(rate));
  put_u32(b, static_cast<std::uint32_t>(rate * channels * 2));
  put_u16(b, static_cast<std::uint16_t>(channels * 2));
  put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, static_cast<std::uint32_t>(pcm.size() * 2));
  for (std::int16_t s : pcm) put_u16(b, static_cast<std::uint16_t>(s));

  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  return path;
}

}  // namespace

TEST_CASE("resample: identity, constants, zero-crossing preservation") {
  Waveform w = sine(440.0, 32000, 1.0);
  // 32 kHz is not in the supported set; build the valid-rate variants
  w.sample_rate = 16000;
  auto same = resample(w, 16000);
  CHECK(same.samples == w.samples);

  Waveform constant;
  constant.sample_rate = 48000;
  constant.samples.assign(4800, 0.25f);
  auto down = resample(constant, 16000);
  CHECK(down.samples.size() == 1600);
  for (float v : down.samples) CHECK(v == doctest::Approx(0.25f));

  // 440 Hz sine carried from 44.1 kHz to 16 kHz: crossings per second match
  Waveform tone = sine(440.0, 44100, 1.0);
  auto at16 = resample(tone, 16000);
  CHECK(at16.sample_rate == 16000);
  const double dur_in = tone.samples.size() / 44100.0;
  const double dur_out = at16.samples.size() / 16000.0;
  CHECK(std::abs(dur_in - dur_out) < 1.0 / 440.0);  // within one period
  const auto zc_in = zero_crossings(tone.samples);
  const auto zc_out = zero_crossings(at16.samples);
  CHECK(std::abs(static_cast<long>(zc_in) - static_cast<long>(zc_out)) <= 1);

  Waveform low = sine(100.0, 8000, 0.1);
  CHECK_THROWS_AS(resample(low, 22050), ConfigError);  // beyond 2x
  CHECK_NOTHROW(resample(low, 16000));                 // exactly 2x is fine
}

TEST_CASE("spectrogram: frame count formula") {
  FeatureConfig cfg;
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(400 + 3 * 160, 0.1f);
  auto f = spectrogram(w, cfg);
  CHECK(f.n_frames == 4);
  CHECK(f.n_bins == 80);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 400 + rng.below(5000);
    w.samples.assign(n, 0.05f);
    CHECK(spectrogram(w, cfg).n_frames == 1 + (n - 400) / 160);
  }

  w.samples.assign(399, 0.1f);
  CHECK_THROWS_AS(spectrogram(w, cfg), LengthError);
}

TEST_CASE("spectrogram: silence hits the log floor everywhere") {
  FeatureConfig cfg;
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(1600, 0.0f);
  auto f = spectrogram(w, cfg);
  const float floor_val = std::log(1e-10f);
  for (float v : f.frames) CHECK(v == doctest::Approx(floor_val).epsilon(1e-6));
}

TEST_CASE("spectrogram: 1 kHz tone peaks in the mel bin containing 1 kHz") {
  FeatureConfig cfg;
  Waveform w = sine(1000.0, 16000, 0.5);
  auto f = spectrogram(w, cfg);

  // closed-form oracle: the filter with max triangle weight at 1000 Hz
  const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(8000.0);
  int expected_bin = -1;
  double best_w = -1;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
    const double mid =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
    const double right =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 2) / (cfg.n_mels + 1));
    double weight = 0;
    if (1000.0 > left && 1000.0 < right)
      weight = 1000.0 <= mid ? (1000.0 - left) / (mid - left)
                             : (right - 1000.0) / (right - mid);
    if (weight > best_w) {
      best_w = weight;
      expected_bin = m;
    }
  }
  REQUIRE(expected_bin >= 0);

  for (std::size_t t = 0; t < f.n_frames; ++t) {
    int argmax = 0;
    for (std::size_t m = 1; m < f.n_bins; ++m)
      if (f.frame(t)[m] > f.frame(t)[argmax]) argmax = static_cast<int>(m);
    CHECK(argmax == expected_bin);
  }
}

TEST_CASE("spectrogram: deterministic, and amplitude scaling shifts log by 2 log c") {
  Rng rng(17);
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(3200);
  for (auto& s : w.samples) s = static_cast<float>(rng.uniform(-0.4, 0.4));

  FeatureConfig cfg;
  auto a = spectrogram(w, cfg);
  auto b = spectrogram(w, cfg);
  CHECK(a.frames == b.frames);  // bitwise

  const double c = 1.7;
  Waveform scaled = w;
  for (auto& s : scaled.samples) s = static_cast<float>(s * c);
  auto fs = spectrogram(scaled, cfg);
  const double expected_shift = 2.0 * std::log(c);
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(std::abs((fs.frames[i] - a.frames[i]) - expected_shift) < 1e-4);
  }
}

TEST_CASE("wav reader: PCM mono round-trip and stereo averaging") {
  std::vector<std::int16_t> pcm{0, 8192, -8192, 16384, -16384, 32767, -32768, 0};
  auto mono = write_wav_file(pcm, 16000, 1, 1, "metaccent_mono.wav");
  auto w = read_wav(mono);
  CHECK(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i)
    CHECK(w.samples[i] == doctest::Approx(pcm[i] / 32768.0).epsilon(1e-6));

  std::vector<std::int16_t> stereo{100, 300, -100, -300, 0, 1000};
  auto spath = write_wav_file(stereo, 16000, 2, 1, "metaccent_stereo.wav");
  auto sw = read_wav(spath);
  REQUIRE(sw.samples.size() == 3);
  CHECK(sw.samples[0] == doctest::Approx(200 / 32768.0));
  CHECK(sw.samples[1] == doctest::Approx(-200 / 32768.0));
  CHECK(sw.samples[2] == doctest::Approx(500 / 32768.0));
}

TEST_CASE("wav reader: rejects non-PCM with the codec named") {
  std::vector<std::int16_t> pcm{1, 2, 3, 4};
  auto f = write_wav_file(pcm, 16000, 1, 3, "metaccent_float.wav");
  CHECK_THROWS_WITH_AS(read_wav(f), doctest::Contains("IEEE float"), DataError);
  auto m = write_wav_file(pcm, 16000, 1, 0x55, "metaccent_mp3.wav");
  CHECK_THROWS_WITH_AS(read_wav(m), doctest::Contains("MP3"), DataError);
}
