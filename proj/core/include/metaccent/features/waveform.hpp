#pragma once

#include <filesystem>
#include <vector>

namespace metaccent::features {

struct Waveform {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate = 16000;
};

bool valid_sample_rate(int rate);
void validate(const Waveform& w, const char* context);

// 16-bit signed PCM, mono or stereo (stereo is averaged down). Compressed
// or float wavs are rejected with the codec named in the error.
Waveform read_wav(const std::filesystem::path& path);

// Linear-interpolation resampling. Upsampling beyond 2x the source rate is
// rejected.
Waveform resample(const Waveform& w, int target_rate);

}  // namespace metaccent::features
