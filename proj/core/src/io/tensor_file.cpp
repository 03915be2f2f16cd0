#include "metaccent/io/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "metaccent/error.hpp"

namespace metaccent::io {

void write_f32_le(const std::filesystem::path& path, const float* data,
                  std::size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("io.write_f32_le: cannot write '" + path.string() + "'");
  std::vector<unsigned char> bytes(count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u;
    std::memcpy(&u, data + i, 4);
    bytes[4 * i + 0] = static_cast<unsigned char>(u);
    bytes[4 * i + 1] = static_cast<unsigned char>(u >> 8);
    bytes[4 * i + 2] = static_cast<unsigned char>(u >> 16);
    bytes[4 * i + 3] = static_cast<unsigned char>(u >> 24);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("io.write_f32_le: short write to '" + path.string() + "'");
}

std::vector<float> read_f32_le(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in)
    throw IoError("io.read_f32_le: cannot open '" + path.string() + "'");
  const std::streamsize size = in.tellg();
  if (size % 4 != 0)
    throw DataError("io.read_f32_le: '" + path.string() + "' has " +
                    std::to_string(size) + " bytes, not a float32 multiple");
  in.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in)
    throw IoError("io.read_f32_le: short read from '" + path.string() + "'");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

}  // namespace metaccent::io
