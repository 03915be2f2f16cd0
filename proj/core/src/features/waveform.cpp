#include "metaccent/features/waveform.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "metaccent/error.hpp"

namespace metaccent::features {

namespace {

constexpr std::array<int, 5> kValidRates{8000, 16000, 22050, 44100, 48000};

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

const char* format_tag_name(std::uint16_t tag) {
  switch (tag) {
    case 0x0003: return "IEEE float";
    case 0x0006: return "A-law";
    case 0x0007: return "mu-law";
    case 0x0011: return "ADPCM";
    case 0x0055: return "MP3";
    default: return "unknown/compressed";
  }
}

}  // namespace

bool valid_sample_rate(int rate) {
  for (int r : kValidRates)
    if (r == rate) return true;
  return false;
}

void validate(const Waveform& w, const char* context) {
  if (w.samples.empty())
    throw DataError(std::string(context) + ": empty waveform");
  if (!valid_sample_rate(w.sample_rate))
    throw DataError(std::string(context) + ": unsupported sample rate " +
                    std::to_string(w.sample_rate));
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("features.read_wav: cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("features.read_wav: '" + path.string() +
                    "' is not a RIFF/WAVE file");

  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    const std::uint32_t len = read_u32(bytes.data() + off + 4);
    const unsigned char* payload = bytes.data() + off + 8;
    if (off + 8 + len > bytes.size())
      throw DataError("features.read_wav: truncated chunk in '" +
                      path.string() + "'");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw DataError("features.read_wav: malformed fmt chunk");
      format_tag = read_u16(payload);
      channels = read_u16(payload + 2);
      rate = read_u32(payload + 4);
      bits = read_u16(payload + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = payload;
      data_len = len;
    }
    off += 8 + len + (len & 1);  // chunks are word-aligned
  }

  if (format_tag == 0 || data == nullptr)
    throw DataError("features.read_wav: missing fmt or data chunk in '" +
                    path.string() + "'");
  if (format_tag != 1)
    throw DataError(std::string("features.read_wav: ") +
                    format_tag_name(format_tag) + " wav (format tag " +
                    std::to_string(format_tag) +
                    "); expected 16-bit signed integer PCM");
  if (bits != 16)
    throw DataError("features.read_wav: " + std::to_string(bits) +
                    "-bit samples; expected 16-bit signed integer PCM");
  if (channels == 0)
    throw DataError("features.read_wav: zero channels");

  const std::size_t frames = data_len / (2 * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + 2 * (i * channels + c);
      const std::int16_t v = static_cast<std::int16_t>(s[0] | (s[1] << 8));
      acc += static_cast<double>(v) / 32768.0;
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  validate(w, "features.read_wav");
  return w;
}

Waveform resample(const Waveform& w, int target_rate) {
  validate(w, "features.resample");
  if (!valid_sample_rate(target_rate))
    throw ConfigError("features.resample: unsupported target rate " +
                      std::to_string(target_rate));
  if (target_rate == w.sample_rate) return w;
  if (target_rate > 2 * w.sample_rate)
    throw ConfigError("features.resample: upsampling " +
                      std::to_string(w.sample_rate) + " -> " +
                      std::to_string(target_rate) + " exceeds the 2x limit");

  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  const std::size_t out_len = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(w.samples.size()) * target_rate /
                      w.sample_rate)));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const std::size_t last = w.samples.size() - 1;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const std::size_t i0 = std::min(last, static_cast<std::size_t>(pos));
    const std::size_t i1 = std::min(last, i0 + 1);
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = static_cast<float>((1.0 - frac) * w.samples[i0] +
                                        frac * w.samples[i1]);
  }
  return out;
}

}  // namespace metaccent::features
