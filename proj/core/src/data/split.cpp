#include "metaccent/data/split.hpp"

#include <algorithm>

#include "metaccent/error.hpp"
#include "metaccent/rng.hpp"

namespace metaccent::data {

AccentSplitPreset AccentSplitPreset::mixed_region() {
  return {"mixed_region",
          {"af", "au", "en", "hk", "in", "ir", "my", "nz", "sg", "us"},
          {"ca", "sc", "sa"},
          {"be", "ph", "wa"}};
}

AccentSplitPreset AccentSplitPreset::cross_region() {
  return {"cross_region",
          {"au", "en", "ir", "nz", "us"},
          {"ca", "sc", "sa"},
          {"af", "hk", "in", "ph", "sg"}};
}

AccentSplitPreset AccentSplitPreset::custom(std::vector<std::string> train,
                                            std::vector<std::string> val,
                                            std::vector<std::string> test) {
  AccentSplitPreset p{"custom", std::move(train), std::move(val),
                      std::move(test)};
  p.validate();
  return p;
}

AccentSplitPreset AccentSplitPreset::by_name(const std::string& name) {
  if (name == "mixed_region") return mixed_region();
  if (name == "cross_region") return cross_region();
  throw ConfigError("data.split: unknown preset '" + name +
                    "' (expected mixed_region or cross_region)");
}

void AccentSplitPreset::validate() const {
  auto overlaps = [](const std::vector<std::string>& a,
                     const std::vector<std::string>& b) -> std::string {
    for (const auto& x : a)
      if (std::find(b.begin(), b.end(), x) != b.end()) return x;
    return "";
  };
  if (auto x = overlaps(val_accents, test_accents); !x.empty())
    throw ConfigError("data.split: accent '" + x + "' is in both val and test");
  if (auto x = overlaps(train_accents, test_accents); !x.empty())
    throw ConfigError("data.split: accent '" + x + "' is in both train and test");
  if (train_accents.empty())
    throw ConfigError("data.split: preset has no training accents");
}

std::vector<std::string> SplitResult::train_accent_ids() const {
  std::vector<std::string> ids;
  for (const auto& [accent, utts] : train) ids.push_back(accent);
  return ids;
}

SplitResult make_split(const AccentSplitPreset& preset,
                       const std::vector<Utterance>& utterances,
                       std::uint64_t seed) {
  preset.validate();
  std::map<std::string, std::vector<Utterance>> by_accent;
  for (const auto& u : utterances) by_accent[u.accent_id].push_back(u);

  auto take = [&](const std::vector<std::string>& accents,
                  std::map<std::string, std::vector<Utterance>>& dst) {
    for (const auto& a : accents) {
      auto it = by_accent.find(a);
      if (it == by_accent.end() || it->second.empty())
        throw ConfigError("data.make_split: preset '" + preset.name +
                          "' needs accent '" + a +
                          "' but the dataset has none");
      dst[a] = it->second;
    }
  };

  SplitResult r;
  take(preset.train_accents, r.train);
  take(preset.val_accents, r.val);
  take(preset.test_accents, r.test);

  Rng root(seed);
  for (const auto& [accent, utts] : r.test) {
    std::vector<std::size_t> order =
        root.split("adapt." + accent).sample_indices(utts.size(), utts.size());
    const std::size_t n_train =
        static_cast<std::size_t>(0.75 * static_cast<double>(utts.size()));
    AdaptSplit& as = r.adapt[accent];
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < n_train)
        as.adapt_train.push_back(utts[order[i]]);
      else
        as.adapt_test.push_back(utts[order[i]]);
    }
  }
  return r;
}

}  // namespace metaccent::data
