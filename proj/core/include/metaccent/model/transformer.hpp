#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaccent/features/spectrogram.hpp"
#include "metaccent/model/config.hpp"
#include "metaccent/model/vocab.hpp"
#include "metaccent/numerics/ops.hpp"
#include "metaccent/numerics/param_store.hpp"
#include "metaccent/rng.hpp"

namespace metaccent::model {

struct ForwardOptions {
  bool train = false;
  Rng* dropout_rng = nullptr;  // required when train and dropout_rate > 0
};

// Deterministic initialization: every parameter is filled from a stream
// keyed by its own path, so the layout and values depend only on
// (config, seed).
template <typename T>
numerics::ParamStore<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

// Teacher-forced batch: padded features plus shifted-right decoder inputs
// and eos-terminated targets.
template <typename T>
struct PreparedBatch {
  numerics::Tensor<T> features;  // [B, Tmax, F]
  std::vector<int> feature_lengths;
  std::size_t batch = 0;
  std::size_t target_len = 0;               // Lmax
  std::vector<std::int32_t> decoder_in;     // [B, Lmax], starts with <sos>
  std::vector<std::int32_t> targets;        // [B, Lmax], ends with <eos>
  std::vector<std::uint8_t> target_pad;     // [B, Lmax], 1 = pad
};

template <typename T>
PreparedBatch<T> prepare_batch(
    const std::vector<const features::FeatureSequence*>& feats,
    const std::vector<std::string>& transcripts, const GraphemeVocab& vocab,
    const ModelConfig& cfg);

template <typename T>
struct Encoded {
  numerics::Tensor<T> states;  // [B, T', dim_model]
  std::vector<int> lengths;    // valid T' per row, = ceil(T / downsample)
};

template <typename T>
Encoded<T> encode(numerics::Tape<T>* tape, const ModelConfig& cfg,
                  const numerics::ParamStore<T>& params,
                  const numerics::Tensor<T>& features,
                  const std::vector<int>& feature_lengths,
                  const ForwardOptions& opt = {});

// Causal decoder logits over the whole prefix: [B, L, vocab]. prefix is
// row-major [batch, len] and must start with <sos>; prefix_pad (1 = pad) may
// be null when every row has full length.
template <typename T>
numerics::Tensor<T> decode_step(numerics::Tape<T>* tape, const ModelConfig& cfg,
                                const numerics::ParamStore<T>& params,
                                const Encoded<T>& enc,
                                const std::vector<std::int32_t>& prefix,
                                std::size_t batch, std::size_t len,
                                const std::vector<std::uint8_t>* prefix_pad,
                                const ForwardOptions& opt = {});

// Mean over non-pad target positions of -log P(target | features, prefix).
template <typename T>
numerics::Tensor<T> nll_loss(numerics::Tape<T>* tape, const ModelConfig& cfg,
                             const numerics::ParamStore<T>& params,
                             const PreparedBatch<T>& batch,
                             const ForwardOptions& opt = {});

// Fixed sinusoidal table, [len, dim].
template <typename T>
numerics::Tensor<T> positional_encoding(std::size_t len, std::size_t dim);

}  // namespace metaccent::model
