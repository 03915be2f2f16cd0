#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metaccent/data/manifest.hpp"

namespace metaccent::data {

struct AccentSplitPreset {
  std::string name;  // mixed_region | cross_region | custom
  std::vector<std::string> train_accents;
  std::vector<std::string> val_accents;
  std::vector<std::string> test_accents;

  // Meta-train on the table's thirteen minus the validation trio, validate
  // on {ca, sc, sa}, test on {be, ph, wa}.
  static AccentSplitPreset mixed_region();
  // Train on {au, en, ir, nz, us}, validate on {ca, sc, sa}, test on the
  // out-of-region {af, hk, in, ph, sg}.
  static AccentSplitPreset cross_region();
  static AccentSplitPreset custom(std::vector<std::string> train,
                                  std::vector<std::string> val,
                                  std::vector<std::string> test);
  static AccentSplitPreset by_name(const std::string& name);

  void validate() const;  // val/test and train/test must be disjoint
};

struct AdaptSplit {
  std::vector<Utterance> adapt_train;  // 75%
  std::vector<Utterance> adapt_test;   // 25%
};

struct SplitResult {
  std::map<std::string, std::vector<Utterance>> train;
  std::map<std::string, std::vector<Utterance>> val;
  std::map<std::string, std::vector<Utterance>> test;
  std::map<std::string, AdaptSplit> adapt;  // per test accent

  std::vector<std::string> train_accent_ids() const;
};

// Groups utterances by accent per the preset and carves the seeded 75/25
// adaptation split inside every test accent. Every preset accent must be
// present in the data.
SplitResult make_split(const AccentSplitPreset& preset,
                       const std::vector<Utterance>& utterances,
                       std::uint64_t seed);

}  // namespace metaccent::data
