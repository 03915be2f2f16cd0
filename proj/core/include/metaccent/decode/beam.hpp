#pragma once

#include <cstdint>
#include <vector>

#include "metaccent/features/spectrogram.hpp"
#include "metaccent/model/transformer.hpp"

namespace metaccent::decode {

struct DecodeConfig {
  double eta = 1.0;    // decoder-probability weight
  double gamma = 0.1;  // word-count weight
  int beam_size = 5;
  int max_len = 200;   // tokens, <eos> included
};

struct Hypothesis {
  std::vector<std::int32_t> tokens;  // ends with <eos> unless truncated
  double log_prob = 0;               // sum of per-step log P
  double score = 0;                  // eta * log_prob + gamma * sqrt(wc)
  int word_count = 0;
  bool truncated = false;
};

// eta * log_prob + gamma * sqrt(word_count), exactly.
double score_hypothesis(double log_prob, int word_count,
                        const DecodeConfig& cfg);

// Whitespace-delimited words of the detokenized string; reserved tokens are
// stripped first.
int word_count(const std::vector<std::int32_t>& tokens,
               const model::GraphemeVocab& vocab);

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> beam;  // final candidates, best first
};

// Breadth-limited auto-regressive search. Per-step pruning ranks by
// accumulated log-prob (ties: lexicographically smaller continuation); the
// word-count bonus enters once, as a re-ranking over finalized hypotheses.
// <pad>, <sos> and <unk> are never proposed.
template <typename T>
BeamResult beam_search(const model::ModelConfig& cfg,
                       const numerics::ParamStore<T>& params,
                       const features::FeatureSequence& features,
                       const DecodeConfig& dcfg,
                       const model::GraphemeVocab& vocab);

}  // namespace metaccent::decode
