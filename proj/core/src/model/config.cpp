#include "metaccent/model/config.hpp"

#include <string>

#include "metaccent/error.hpp"

namespace metaccent::model {

int ModelConfig::frontend_out_bins() const {
  int f = n_mels;
  for (std::size_t b = 0; b < vgg_channels.size(); ++b) f = (f + 1) / 2;
  return f;
}

void ModelConfig::validate() const {
  if (n_enc_layers < 1 || n_dec_layers < 1)
    throw ConfigError("model.config: layer counts must be >= 1");
  if (dim_model < 1 || dim_inner < 1 || dim_emb < 1 || n_heads < 1)
    throw ConfigError("model.config: dimensions must be positive");
  if (dim_model % n_heads != 0)
    throw ConfigError("model.config: dim_model " + std::to_string(dim_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (vgg_channels.empty())
    throw ConfigError("model.config: need at least one conv block");
  for (int c : vgg_channels)
    if (c < 1) throw ConfigError("model.config: conv channels must be positive");
  if (linear_rank < 0)
    throw ConfigError("model.config: linear_rank must be >= 0");
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw ConfigError("model.config: dropout_rate must be in [0, 1)");
  if (vocab_size < 5)
    throw ConfigError("model.config: vocab_size must cover the reserved "
                      "symbols plus at least one grapheme");
  if (max_target_len < 1)
    throw ConfigError("model.config: max_target_len must be >= 1");
  if (n_mels < 1) throw ConfigError("model.config: n_mels must be >= 1");
}

ModelConfig ModelConfig::paper_profile(int vocab_size) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.linear_rank = 120;
  cfg.max_target_len = 400;
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::toy_profile(int vocab_size) {
  ModelConfig cfg;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 2;
  cfg.dim_model = 64;
  cfg.dim_inner = 256;
  cfg.dim_emb = 64;
  cfg.n_heads = 4;
  cfg.vgg_channels = {8, 16};
  cfg.linear_rank = 0;
  cfg.n_mels = 20;
  cfg.max_target_len = 128;
  cfg.vocab_size = vocab_size;
  cfg.validate();
  return cfg;
}

}  // namespace metaccent::model
