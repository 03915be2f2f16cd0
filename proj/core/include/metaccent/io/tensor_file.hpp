#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace metaccent::io {

// Raw little-endian 32-bit floats, row-major, no header. The checkpoint
// format stores one such file per parameter; synthetic corpora reuse it for
// feature matrices.
void write_f32_le(const std::filesystem::path& path, const float* data,
                  std::size_t count);
std::vector<float> read_f32_le(const std::filesystem::path& path);

}  // namespace metaccent::io
