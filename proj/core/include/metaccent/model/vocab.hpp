#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace metaccent::model {

// Grapheme inventory with fixed reserved slots. Symbols beyond the reserved
// four are single characters from the normalized alphabet {a..z, ', space}.
class GraphemeVocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kSos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::int32_t kNumReserved = 4;

  // Full ordered symbol list including the reserved entries, as serialized
  // in checkpoints.
  static GraphemeVocab from_symbols(std::vector<std::string> symbols);
  // Reserved entries plus the given characters in sorted order.
  static GraphemeVocab from_characters(const std::vector<char>& chars);

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  std::int32_t index_of(char c) const;  // kUnk when absent
  std::vector<std::int32_t> tokenize(const std::string& text) const;
  // Reserved tokens are skipped.
  std::string detokenize(const std::vector<std::int32_t>& tokens) const;

 private:
  std::vector<std::string> symbols_;
  std::int32_t char_index_[256];
};

}  // namespace metaccent::model
