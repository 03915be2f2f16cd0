#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metaccent/data/split.hpp"

namespace metaccent::data {

// Channel model of one synthetic accent: per-bin gains, a bin permutation,
// additive noise, and a chance of frame doubling.
struct SyntheticAccentSpec {
  std::string accent_id;
  std::vector<float> bin_gains;      // positive, one per feature bin
  std::vector<int> bin_permutation;  // bijective over the bins
  double noise_std = 0.0;
  double token_duration_jitter = 0.0;  // P(frame is emitted twice)
};

struct SynthConfig {
  int n_accents = 8;
  int n_train_accents = 5;
  int n_val_accents = 1;  // the rest are held-out test accents
  int n_utterances_per_accent = 80;
  int base_vocab_size = 6;  // word templates
  int feature_dim = 12;
  int word_min_frames = 5;
  int word_max_frames = 8;
  int words_per_utterance_min = 2;
  int words_per_utterance_max = 4;
  double gain_log_range = 0.3;  // gains = exp(U(-r, r))
  int bin_swaps = 4;            // random transpositions per accent
  double noise_std = 0.02;
  double duration_jitter = 0.0;
  bool identity_transforms = false;  // forces gains = 1, permutation = id
  std::uint64_t seed = 7;

  void validate() const;
};

struct WordTemplate {
  std::string text;
  int n_frames = 0;
  std::vector<float> frames;  // [n_frames, feature_dim]
};

// Sentences are shared across accents (utterance j has the same transcript
// in every accent); only the channel differs. That keeps cross-accent
// comparisons content-matched and makes identity-transform accents emit
// bitwise identical features.
struct SyntheticCorpus {
  SynthConfig config;
  std::vector<std::string> train_accents, val_accents, test_accents;
  std::vector<SyntheticAccentSpec> specs;     // one per accent, in id order
  std::vector<WordTemplate> words;
  std::vector<std::vector<int>> sentences;    // word ids per utterance slot
  std::vector<Utterance> utterances;          // inline features

  std::vector<std::string> all_accents() const;
  const SyntheticAccentSpec& spec_of(const std::string& accent_id) const;
};

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg);

// Directory layout: manifest.tsv + corpus.json + feats/<id>.f32 (feature
// matrices in the checkpoint tensor format).
void save_synthetic_corpus(const std::filesystem::path& dir,
                           const SyntheticCorpus& corpus);
SyntheticCorpus load_synthetic_corpus(const std::filesystem::path& dir);

// Accent grouping per the corpus' own train/val/test lists, with the 75/25
// adaptation split inside each test accent.
SplitResult split_synthetic(const SyntheticCorpus& corpus);

}  // namespace metaccent::data
