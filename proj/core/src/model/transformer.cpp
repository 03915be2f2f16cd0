#include "metaccent/model/transformer.hpp"

#include <cmath>

#include "metaccent/error.hpp"

namespace metaccent::model {

using numerics::ParamStore;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;

namespace {

template <typename T>
Tensor<T> xavier(Shape shape, std::size_t fan_in, std::size_t fan_out,
                 Rng rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(numerics::numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
void add_matrix(ParamStore<T>& store, const Rng& root, const std::string& name,
                std::size_t rows, std::size_t cols) {
  store.insert(name, xavier<T>({rows, cols}, rows, cols, root.split(name)));
}

// Dense [in, out] weight, or the [in, r] x [r, out] factored pair when the
// config carries a rank; plus the bias.
template <typename T>
void add_linear(ParamStore<T>& store, const Rng& root, const ModelConfig& cfg,
                const std::string& prefix, std::size_t in, std::size_t out) {
  const std::size_t r = static_cast<std::size_t>(cfg.linear_rank);
  if (r > 0 && r < std::min(in, out)) {
    add_matrix(store, root, prefix + ".w1", in, r);
    add_matrix(store, root, prefix + ".w2", r, out);
  } else {
    add_matrix(store, root, prefix + ".weight", in, out);
  }
  store.insert(prefix + ".bias", Tensor<T>({out}, T{0}));
}

template <typename T>
void add_norm(ParamStore<T>& store, const std::string& prefix,
              std::size_t dim) {
  store.insert(prefix + ".gain", Tensor<T>({dim}, T{1}));
  store.insert(prefix + ".bias", Tensor<T>({dim}, T{0}));
}

template <typename T>
void add_attention(ParamStore<T>& store, const Rng& root,
                   const ModelConfig& cfg, const std::string& prefix) {
  const std::size_t d = static_cast<std::size_t>(cfg.dim_model);
  for (const char* leg : {"q", "k", "v", "o"})
    add_linear(store, root, cfg, prefix + "." + leg, d, d);
}

template <typename T>
void add_ffn(ParamStore<T>& store, const Rng& root, const ModelConfig& cfg,
             const std::string& prefix) {
  const std::size_t d = static_cast<std::size_t>(cfg.dim_model);
  const std::size_t inner = static_cast<std::size_t>(cfg.dim_inner);
  add_linear(store, root, cfg, prefix + ".lin1", d, inner);
  add_linear(store, root, cfg, prefix + ".lin2", inner, d);
}

template <typename T>
Tensor<T> apply_linear(Tape<T>* tape, const ParamStore<T>& p,
                       const std::string& prefix, const Tensor<T>& x) {
  Tensor<T> y;
  if (p.contains(prefix + ".weight")) {
    y = numerics::matmul(tape, x, p.at(prefix + ".weight"));
  } else {
    y = numerics::matmul(tape, numerics::matmul(tape, x, p.at(prefix + ".w1")),
                         p.at(prefix + ".w2"));
  }
  return numerics::add(tape, y, p.at(prefix + ".bias"));
}

template <typename T>
Tensor<T> apply_norm(Tape<T>* tape, const ParamStore<T>& p,
                     const std::string& prefix, const Tensor<T>& x) {
  return numerics::layer_norm(tape, x, p.at(prefix + ".gain"),
                              p.at(prefix + ".bias"));
}

template <typename T>
Tensor<T> maybe_dropout(Tape<T>* tape, const Tensor<T>& x,
                        const ModelConfig& cfg, const ForwardOptions& opt) {
  if (!opt.train || cfg.dropout_rate <= 0) return x;
  if (!opt.dropout_rng)
    throw UsageError("model.forward: training forward needs a dropout rng");
  return numerics::dropout(tape, x, cfg.dropout_rate, *opt.dropout_rng);
}

// Additive key mask [B, 1, 1, Tk]: 0 on valid keys, -1e9 on padding.
template <typename T>
Tensor<T> key_mask(const std::vector<int>& lengths, std::size_t max_len) {
  const std::size_t B = lengths.size();
  std::vector<T> m(B * max_len, T{0});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = static_cast<std::size_t>(lengths[b]); t < max_len; ++t)
      m[b * max_len + t] = static_cast<T>(-1e9);
  return Tensor<T>({B, 1, 1, max_len}, std::move(m));
}

// Additive causal + padding mask for decoder self-attention, [B, 1, L, L].
template <typename T>
Tensor<T> causal_mask(const std::vector<std::uint8_t>* pad, std::size_t batch,
                      std::size_t len) {
  std::vector<T> m(batch * len * len, T{0});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        const bool future = j > i;
        const bool padded = pad && (*pad)[b * len + j];
        if (future || padded)
          m[(b * len + i) * len + j] = static_cast<T>(-1e9);
      }
  return Tensor<T>({batch, 1, len, len}, std::move(m));
}

// Multi-head attention over already-normalized inputs.
template <typename T>
Tensor<T> attention(Tape<T>* tape, const ModelConfig& cfg,
                    const ParamStore<T>& p, const std::string& prefix,
                    const Tensor<T>& q_in, const Tensor<T>& kv_in,
                    const Tensor<T>& mask, const ForwardOptions& opt) {
  const std::size_t B = q_in.extent(0);
  const std::size_t Tq = q_in.extent(1);
  const std::size_t Tk = kv_in.extent(1);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t Dh = static_cast<std::size_t>(cfg.head_dim());

  auto split_heads = [&](Tensor<T> x, std::size_t len) {
    x = numerics::reshape(x, {B, len, H, Dh});
    return numerics::transpose(tape, x, {0, 2, 1, 3});  // [B, H, len, Dh]
  };
  Tensor<T> q = split_heads(apply_linear(tape, p, prefix + ".q", q_in), Tq);
  Tensor<T> k = split_heads(apply_linear(tape, p, prefix + ".k", kv_in), Tk);
  Tensor<T> v = split_heads(apply_linear(tape, p, prefix + ".v", kv_in), Tk);

  Tensor<T> scores = numerics::matmul(
      tape, q, numerics::transpose(tape, k, {0, 1, 3, 2}));  // [B,H,Tq,Tk]
  scores = numerics::scale(tape, scores, 1.0 / std::sqrt(double(Dh)));
  scores = numerics::add(tape, scores, mask);
  Tensor<T> weights = numerics::softmax(tape, scores, -1);
  weights = maybe_dropout(tape, weights, cfg, opt);

  Tensor<T> ctx = numerics::matmul(tape, weights, v);        // [B,H,Tq,Dh]
  ctx = numerics::transpose(tape, ctx, {0, 2, 1, 3});        // [B,Tq,H,Dh]
  ctx = numerics::reshape(ctx, {B, Tq, H * Dh});
  return apply_linear(tape, p, prefix + ".o", ctx);
}

template <typename T>
Tensor<T> feed_forward(Tape<T>* tape, const ModelConfig& cfg,
                       const ParamStore<T>& p, const std::string& prefix,
                       const Tensor<T>& x, const ForwardOptions& opt) {
  Tensor<T> h = numerics::relu(tape, apply_linear(tape, p, prefix + ".lin1", x));
  h = maybe_dropout(tape, h, cfg, opt);
  return apply_linear(tape, p, prefix + ".lin2", h);
}

}  // namespace

template <typename T>
Tensor<T> positional_encoding(std::size_t len, std::size_t dim) {
  std::vector<T> pe(len * dim);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double angle =
          static_cast<double>(t) /
          std::pow(10000.0, 2.0 * std::floor(d / 2.0) / static_cast<double>(dim));
      pe[t * dim + d] = static_cast<T>(d % 2 == 0 ? std::sin(angle)
                                                  : std::cos(angle));
    }
  }
  return Tensor<T>({len, dim}, std::move(pe));
}

template <typename T>
ParamStore<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Rng root(seed);
  ParamStore<T> store;

  // conv frontend
  int in_ch = 1;
  for (std::size_t b = 0; b < cfg.vgg_channels.size(); ++b) {
    const int out_ch = cfg.vgg_channels[b];
    const std::string block = "frontend.block" + std::to_string(b);
    for (int c = 0; c < 2; ++c) {
      const std::string name = block + ".conv" + std::to_string(c);
      const int ci = c == 0 ? in_ch : out_ch;
      store.insert(name + ".weight",
                   xavier<T>({static_cast<std::size_t>(out_ch),
                              static_cast<std::size_t>(ci), 3, 3},
                             static_cast<std::size_t>(ci) * 9,
                             static_cast<std::size_t>(out_ch) * 9,
                             root.split(name + ".weight")));
      store.insert(name + ".bias",
                   Tensor<T>({static_cast<std::size_t>(out_ch)}, T{0}));
    }
    in_ch = out_ch;
  }
  const std::size_t flat =
      static_cast<std::size_t>(cfg.vgg_channels.back()) *
      static_cast<std::size_t>(cfg.frontend_out_bins());
  // the input projection stays dense regardless of rank
  add_matrix(store, root, "frontend.proj.weight", flat,
             static_cast<std::size_t>(cfg.dim_model));
  store.insert("frontend.proj.bias",
               Tensor<T>({static_cast<std::size_t>(cfg.dim_model)}, T{0}));

  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    const std::string layer = "encoder.layer" + std::to_string(l);
    add_attention(store, root, cfg, layer + ".attn");
    add_ffn(store, root, cfg, layer + ".ffn");
    add_norm(store, layer + ".norm1", cfg.dim_model);
    add_norm(store, layer + ".norm2", cfg.dim_model);
  }
  add_norm(store, "encoder.final_norm", cfg.dim_model);

  add_matrix(store, root, "decoder.embed.weight",
             static_cast<std::size_t>(cfg.vocab_size),
             static_cast<std::size_t>(cfg.dim_emb));
  if (cfg.dim_emb != cfg.dim_model) {
    add_linear(store, root, cfg, "decoder.embed_proj",
               static_cast<std::size_t>(cfg.dim_emb),
               static_cast<std::size_t>(cfg.dim_model));
  }
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string layer = "decoder.layer" + std::to_string(l);
    add_attention(store, root, cfg, layer + ".self_attn");
    add_attention(store, root, cfg, layer + ".cross_attn");
    add_ffn(store, root, cfg, layer + ".ffn");
    add_norm(store, layer + ".norm1", cfg.dim_model);
    add_norm(store, layer + ".norm2", cfg.dim_model);
    add_norm(store, layer + ".norm3", cfg.dim_model);
  }
  add_norm(store, "decoder.final_norm", cfg.dim_model);

  // The grapheme head starts at half the xavier scale: an untrained model
  // then scores symbols near-uniformly (init loss ~ ln V + 0.2) and a
  // four-utterance overfit clears the mixture plateau within 50 steps.
  const std::size_t d = static_cast<std::size_t>(cfg.dim_model);
  const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t r = static_cast<std::size_t>(cfg.linear_rank);
  if (r > 0 && r < std::min(d, v)) {
    add_linear(store, root, cfg, "output", d, v);
  } else {
    const double limit = 0.5 * std::sqrt(6.0 / static_cast<double>(d + v));
    Rng rng = root.split("output.weight");
    std::vector<T> w(d * v);
    for (auto& x : w) x = static_cast<T>(rng.uniform(-limit, limit));
    store.insert("output.weight", Tensor<T>({d, v}, std::move(w)));
    store.insert("output.bias", Tensor<T>({v}, T{0}));
  }
  return store;
}

template <typename T>
PreparedBatch<T> prepare_batch(
    const std::vector<const features::FeatureSequence*>& feats,
    const std::vector<std::string>& transcripts, const GraphemeVocab& vocab,
    const ModelConfig& cfg) {
  if (feats.empty() || feats.size() != transcripts.size())
    throw DataError("model.prepare_batch: need matching non-empty feature and "
                    "transcript lists");
  const std::size_t B = feats.size();
  const std::size_t F = static_cast<std::size_t>(cfg.n_mels);

  std::size_t Tmax = 0;
  for (const auto* f : feats) {
    if (f->n_bins != F)
      throw ShapeError("model.prepare_batch: feature width " +
                       std::to_string(f->n_bins) + " != configured " +
                       std::to_string(F));
    if (f->n_frames == 0)
      throw DataError("model.prepare_batch: empty feature sequence");
    Tmax = std::max(Tmax, f->n_frames);
  }

  PreparedBatch<T> out;
  out.batch = B;
  out.features = Tensor<T>({B, Tmax, F}, T{0});
  T* fd = out.features.mutable_data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < feats[b]->n_frames; ++t)
      for (std::size_t j = 0; j < F; ++j)
        fd[(b * Tmax + t) * F + j] = static_cast<T>(feats[b]->frame(t)[j]);
    out.feature_lengths.push_back(static_cast<int>(feats[b]->n_frames));
  }

  std::vector<std::vector<std::int32_t>> tokens(B);
  std::size_t Lmax = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (transcripts[b].empty())
      throw DataError("model.prepare_batch: empty target transcript");
    tokens[b] = vocab.tokenize(transcripts[b]);
    Lmax = std::max(Lmax, tokens[b].size() + 1);  // +1 for <eos>
  }
  if (Lmax > static_cast<std::size_t>(cfg.max_target_len))
    throw LengthError("model.prepare_batch: target length " +
                      std::to_string(Lmax) + " exceeds max_target_len " +
                      std::to_string(cfg.max_target_len));

  out.target_len = Lmax;
  out.decoder_in.assign(B * Lmax, GraphemeVocab::kPad);
  out.targets.assign(B * Lmax, GraphemeVocab::kPad);
  out.target_pad.assign(B * Lmax, 1);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& tk = tokens[b];
    out.decoder_in[b * Lmax] = GraphemeVocab::kSos;
    for (std::size_t i = 0; i < tk.size(); ++i) {
      out.decoder_in[b * Lmax + i + 1] = tk[i];
      out.targets[b * Lmax + i] = tk[i];
    }
    out.targets[b * Lmax + tk.size()] = GraphemeVocab::kEos;
    for (std::size_t i = 0; i <= tk.size(); ++i) out.target_pad[b * Lmax + i] = 0;
  }
  return out;
}

template <typename T>
Encoded<T> encode(Tape<T>* tape, const ModelConfig& cfg,
                  const ParamStore<T>& params, const Tensor<T>& features,
                  const std::vector<int>& feature_lengths,
                  const ForwardOptions& opt) {
  if (features.rank() != 3)
    throw ShapeError("model.encode: features must be [B, T, F], got " +
                     numerics::shape_str(features.shape()));
  const std::size_t B = features.extent(0);
  const std::size_t Tm = features.extent(1);
  const std::size_t F = features.extent(2);
  if (F != static_cast<std::size_t>(cfg.n_mels))
    throw ShapeError("model.encode: feature width " + std::to_string(F) +
                     " != configured " + std::to_string(cfg.n_mels));
  if (feature_lengths.size() != B)
    throw ShapeError("model.encode: got " +
                     std::to_string(feature_lengths.size()) +
                     " lengths for batch " + std::to_string(B));

  // frontend: per block conv3x3 -> relu -> time mask, twice, then pool 2x2.
  Tensor<T> h = numerics::reshape(features, {B, 1, Tm, F});
  std::vector<int> lengths = feature_lengths;
  std::size_t cur_t = Tm;
  for (std::size_t blk = 0; blk < cfg.vgg_channels.size(); ++blk) {
    const std::string block = "frontend.block" + std::to_string(blk);
    for (int c = 0; c < 2; ++c) {
      const std::string conv = block + ".conv" + std::to_string(c);
      h = numerics::conv2d_strided(tape, h, params.at(conv + ".weight"), 1, 1,
                                   1, 1);
      const std::size_t ch = h.extent(1);
      h = numerics::add(
          tape, h,
          numerics::reshape(params.at(conv + ".bias"), {1, ch, 1, 1}));
      h = numerics::relu(tape, h);
      // zero everything past each row's valid frame count so padding cannot
      // leak through later convolutions or pooling
      std::vector<T> mask(B * cur_t, T{0});
      for (std::size_t b = 0; b < B; ++b)
        for (int t = 0; t < lengths[b] && t < static_cast<int>(cur_t); ++t)
          mask[b * cur_t + static_cast<std::size_t>(t)] = T{1};
      h = numerics::mul(tape, h, Tensor<T>({B, 1, cur_t, 1}, std::move(mask)));
    }
    h = numerics::max_pool2d(tape, h, 2, 2);
    cur_t = (cur_t + 1) / 2;
    for (auto& l : lengths) l = (l + 1) / 2;
  }

  // [B, C, T', F'] -> [B, T', C * F'] -> project to dim_model
  const std::size_t C = h.extent(1), Tp = h.extent(2), Fp = h.extent(3);
  h = numerics::transpose(tape, h, {0, 2, 1, 3});
  h = numerics::reshape(h, {B, Tp, C * Fp});
  h = numerics::matmul(tape, h, params.at("frontend.proj.weight"));
  h = numerics::add(tape, h, params.at("frontend.proj.bias"));

  h = numerics::add(
      tape, h, positional_encoding<T>(Tp, static_cast<std::size_t>(cfg.dim_model)));
  h = maybe_dropout(tape, h, cfg, opt);

  const Tensor<T> src_mask = key_mask<T>(lengths, Tp);
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    const std::string layer = "encoder.layer" + std::to_string(l);
    Tensor<T> a = apply_norm(tape, params, layer + ".norm1", h);
    a = attention(tape, cfg, params, layer + ".attn", a, a, src_mask, opt);
    h = numerics::add(tape, h, maybe_dropout(tape, a, cfg, opt));
    Tensor<T> f = apply_norm(tape, params, layer + ".norm2", h);
    f = feed_forward(tape, cfg, params, layer + ".ffn", f, opt);
    h = numerics::add(tape, h, maybe_dropout(tape, f, cfg, opt));
  }
  h = apply_norm(tape, params, "encoder.final_norm", h);

  Encoded<T> out;
  out.states = std::move(h);
  out.lengths = std::move(lengths);
  return out;
}

template <typename T>
Tensor<T> decode_step(Tape<T>* tape, const ModelConfig& cfg,
                      const ParamStore<T>& params, const Encoded<T>& enc,
                      const std::vector<std::int32_t>& prefix,
                      std::size_t batch, std::size_t len,
                      const std::vector<std::uint8_t>* prefix_pad,
                      const ForwardOptions& opt) {
  if (prefix.size() != batch * len)
    throw ShapeError("model.decode_step: prefix size " +
                     std::to_string(prefix.size()) + " != batch " +
                     std::to_string(batch) + " x len " + std::to_string(len));
  if (len == 0) throw DataError("model.decode_step: empty prefix");
  if (len > static_cast<std::size_t>(cfg.max_target_len))
    throw LengthError("model.decode_step: prefix length " +
                      std::to_string(len) + " exceeds max_target_len " +
                      std::to_string(cfg.max_target_len));
  for (std::size_t b = 0; b < batch; ++b)
    if (prefix[b * len] != GraphemeVocab::kSos)
      throw DataError("model.decode_step: prefix must start with <sos>");
  if (enc.states.extent(0) != batch)
    throw ShapeError("model.decode_step: encoder batch " +
                     std::to_string(enc.states.extent(0)) +
                     " != prefix batch " + std::to_string(batch));

  Tensor<T> h = numerics::embedding_lookup(tape, params.at("decoder.embed.weight"),
                                           prefix, {batch, len});
  if (cfg.dim_emb != cfg.dim_model)
    h = apply_linear(tape, params, "decoder.embed_proj", h);
  h = numerics::scale(tape, h, std::sqrt(static_cast<double>(cfg.dim_model)));
  h = numerics::add(
      tape, h, positional_encoding<T>(len, static_cast<std::size_t>(cfg.dim_model)));
  h = maybe_dropout(tape, h, cfg, opt);

  const Tensor<T> self_mask = causal_mask<T>(prefix_pad, batch, len);
  const Tensor<T> src_mask =
      key_mask<T>(enc.lengths, enc.states.extent(1));

  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string layer = "decoder.layer" + std::to_string(l);
    Tensor<T> a = apply_norm(tape, params, layer + ".norm1", h);
    a = attention(tape, cfg, params, layer + ".self_attn", a, a, self_mask, opt);
    h = numerics::add(tape, h, maybe_dropout(tape, a, cfg, opt));

    Tensor<T> c = apply_norm(tape, params, layer + ".norm2", h);
    c = attention(tape, cfg, params, layer + ".cross_attn", c, enc.states,
                  src_mask, opt);
    h = numerics::add(tape, h, maybe_dropout(tape, c, cfg, opt));

    Tensor<T> f = apply_norm(tape, params, layer + ".norm3", h);
    f = feed_forward(tape, cfg, params, layer + ".ffn", f, opt);
    h = numerics::add(tape, h, maybe_dropout(tape, f, cfg, opt));
  }
  h = apply_norm(tape, params, "decoder.final_norm", h);
  return apply_linear(tape, params, "output", h);  // [B, L, vocab]
}

template <typename T>
Tensor<T> nll_loss(Tape<T>* tape, const ModelConfig& cfg,
                   const ParamStore<T>& params, const PreparedBatch<T>& batch,
                   const ForwardOptions& opt) {
  Encoded<T> enc = encode(tape, cfg, params, batch.features,
                          batch.feature_lengths, opt);
  Tensor<T> logits =
      decode_step(tape, cfg, params, enc, batch.decoder_in, batch.batch,
                  batch.target_len, &batch.target_pad, opt);
  return numerics::cross_entropy_masked(tape, logits, batch.targets,
                                        batch.target_pad);
}

#define METACCENT_INSTANTIATE_MODEL(T)                                        \
  template numerics::ParamStore<T> build_model(const ModelConfig&,            \
                                               std::uint64_t);                \
  template struct PreparedBatch<T>;                                           \
  template PreparedBatch<T> prepare_batch(                                    \
      const std::vector<const features::FeatureSequence*>&,                   \
      const std::vector<std::string>&, const GraphemeVocab&,                  \
      const ModelConfig&);                                                    \
  template struct Encoded<T>;                                                 \
  template Encoded<T> encode(numerics::Tape<T>*, const ModelConfig&,          \
                             const numerics::ParamStore<T>&,                  \
                             const numerics::Tensor<T>&,                      \
                             const std::vector<int>&, const ForwardOptions&); \
  template numerics::Tensor<T> decode_step(                                   \
      numerics::Tape<T>*, const ModelConfig&, const numerics::ParamStore<T>&, \
      const Encoded<T>&, const std::vector<std::int32_t>&, std::size_t,       \
      std::size_t, const std::vector<std::uint8_t>*, const ForwardOptions&);  \
  template numerics::Tensor<T> nll_loss(numerics::Tape<T>*,                   \
                                        const ModelConfig&,                   \
                                        const numerics::ParamStore<T>&,       \
                                        const PreparedBatch<T>&,              \
                                        const ForwardOptions&);               \
  template numerics::Tensor<T> positional_encoding<T>(std::size_t,            \
                                                      std::size_t);

METACCENT_INSTANTIATE_MODEL(float)
METACCENT_INSTANTIATE_MODEL(double)

#undef METACCENT_INSTANTIATE_MODEL

}  // namespace metaccent::model
