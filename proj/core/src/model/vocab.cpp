#include "metaccent/model/vocab.hpp"

#include <algorithm>

#include "metaccent/error.hpp"

namespace metaccent::model {

namespace {
const char* kReserved[] = {"<pad>", "<sos>", "<eos>", "<unk>"};
}

GraphemeVocab GraphemeVocab::from_symbols(std::vector<std::string> symbols) {
  if (symbols.size() < kNumReserved)
    throw DataError("model.vocab: symbol list shorter than the reserved set");
  for (int i = 0; i < kNumReserved; ++i) {
    if (symbols[static_cast<std::size_t>(i)] != kReserved[i])
      throw DataError("model.vocab: reserved slot " + std::to_string(i) +
                      " must be '" + kReserved[i] + "', got '" +
                      symbols[static_cast<std::size_t>(i)] + "'");
  }
  GraphemeVocab v;
  v.symbols_ = std::move(symbols);
  std::fill(std::begin(v.char_index_), std::end(v.char_index_), kUnk);
  for (std::size_t i = kNumReserved; i < v.symbols_.size(); ++i) {
    const std::string& s = v.symbols_[i];
    if (s.size() != 1)
      throw DataError("model.vocab: non-character symbol '" + s + "'");
    v.char_index_[static_cast<unsigned char>(s[0])] =
        static_cast<std::int32_t>(i);
  }
  return v;
}

GraphemeVocab GraphemeVocab::from_characters(const std::vector<char>& chars) {
  std::vector<char> sorted = chars;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::string> symbols(std::begin(kReserved), std::end(kReserved));
  for (char c : sorted) symbols.emplace_back(1, c);
  return from_symbols(std::move(symbols));
}

std::int32_t GraphemeVocab::index_of(char c) const {
  return char_index_[static_cast<unsigned char>(c)];
}

std::vector<std::int32_t> GraphemeVocab::tokenize(const std::string& text) const {
  std::vector<std::int32_t> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(index_of(c));
  return out;
}

std::string GraphemeVocab::detokenize(
    const std::vector<std::int32_t>& tokens) const {
  std::string out;
  for (std::int32_t t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= symbols_.size())
      throw IndexError("model.vocab: token " + std::to_string(t) +
                       " outside vocabulary of size " +
                       std::to_string(symbols_.size()));
    if (t >= kNumReserved) out += symbols_[static_cast<std::size_t>(t)];
  }
  return out;
}

}  // namespace metaccent::model
