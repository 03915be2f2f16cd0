#include "metaccent/decode/beam.hpp"

#include <algorithm>
#include <cmath>

#include "metaccent/error.hpp"

namespace metaccent::decode {

using model::GraphemeVocab;
using numerics::Tensor;

double score_hypothesis(double log_prob, int word_count,
                        const DecodeConfig& cfg) {
  if (word_count < 0)
    throw DataError("decode.score_hypothesis: negative word count " +
                    std::to_string(word_count));
  return cfg.eta * log_prob + cfg.gamma * std::sqrt(double(word_count));
}

int word_count(const std::vector<std::int32_t>& tokens,
               const GraphemeVocab& vocab) {
  const std::string text = vocab.detokenize(tokens);
  int words = 0;
  bool in_word = false;
  for (char c : text) {
    if (c == ' ') {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

namespace {

struct Live {
  std::vector<std::int32_t> tokens;  // no <sos>, no <eos>
  double log_prob = 0;
};

// (log-prob desc, token sequence lex asc): the deterministic pruning order.
bool candidate_less(const std::pair<double, std::vector<std::int32_t>>& a,
                    const std::pair<double, std::vector<std::int32_t>>& b) {
  if (a.first != b.first) return a.first > b.first;
  return a.second < b.second;
}

}  // namespace

template <typename T>
BeamResult beam_search(const model::ModelConfig& cfg,
                       const numerics::ParamStore<T>& params,
                       const features::FeatureSequence& features,
                       const DecodeConfig& dcfg,
                       const GraphemeVocab& vocab) {
  if (dcfg.beam_size < 1)
    throw ConfigError("decode.beam_search: beam_size must be >= 1, got " +
                      std::to_string(dcfg.beam_size));
  if (dcfg.max_len < 1)
    throw ConfigError("decode.beam_search: max_len must be >= 1");
  const std::size_t V = vocab.size();
  if (static_cast<int>(V) != cfg.vocab_size)
    throw CongruenceError("decode.beam_search: vocabulary size " +
                          std::to_string(V) + " != model vocab_size " +
                          std::to_string(cfg.vocab_size));

  // encode once, batch of one
  const std::size_t Tm = features.n_frames;
  const std::size_t F = features.n_bins;
  Tensor<T> feats({1, Tm, F});
  T* fd = feats.mutable_data();
  for (std::size_t i = 0; i < Tm * F; ++i)
    fd[i] = static_cast<T>(features.frames[i]);
  const model::Encoded<T> enc =
      model::encode<T>(nullptr, cfg, params, feats, {static_cast<int>(Tm)});

  const std::size_t max_len =
      std::min<std::size_t>(static_cast<std::size_t>(dcfg.max_len),
                            static_cast<std::size_t>(cfg.max_target_len) - 1);

  std::vector<Live> live{Live{}};
  std::vector<Hypothesis> done;

  auto finalize = [&](std::vector<std::int32_t> tokens, double log_prob,
                      bool truncated) {
    Hypothesis h;
    h.tokens = std::move(tokens);
    h.log_prob = log_prob;
    h.truncated = truncated;
    h.word_count = word_count(h.tokens, vocab);
    h.score = score_hypothesis(h.log_prob, h.word_count, dcfg);
    done.push_back(std::move(h));
  };

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    const std::size_t K = live.size();
    const std::size_t L = step + 1;  // <sos> + emitted tokens
    std::vector<std::int32_t> prefix(K * L);
    for (std::size_t k = 0; k < K; ++k) {
      prefix[k * L] = GraphemeVocab::kSos;
      for (std::size_t i = 0; i < live[k].tokens.size(); ++i)
        prefix[k * L + 1 + i] = live[k].tokens[i];
    }
    // tile the single encoded utterance across live hypotheses
    model::Encoded<T> tiled;
    const std::size_t row = enc.states.extent(1) * enc.states.extent(2);
    tiled.states = Tensor<T>({K, enc.states.extent(1), enc.states.extent(2)});
    for (std::size_t k = 0; k < K; ++k)
      std::copy(enc.states.data(), enc.states.data() + row,
                tiled.states.mutable_data() + k * row);
    tiled.lengths.assign(K, enc.lengths[0]);
    Tensor<T> logits = model::decode_step<T>(nullptr, cfg, params, tiled,
                                             prefix, K, L, nullptr);
    // per-hypothesis log-softmax of the last position, in double
    std::vector<std::pair<double, std::vector<std::int32_t>>> candidates;
    candidates.reserve(K * V);
    for (std::size_t k = 0; k < K; ++k) {
      const T* row = logits.data() + (k * L + (L - 1)) * V;
      double mx = -1e300;
      for (std::size_t v = 0; v < V; ++v)
        mx = std::max(mx, static_cast<double>(row[v]));
      double denom = 0;
      for (std::size_t v = 0; v < V; ++v)
        denom += std::exp(static_cast<double>(row[v]) - mx);
      const double lse = mx + std::log(denom);
      for (std::size_t v = 0; v < V; ++v) {
        if (v == GraphemeVocab::kPad || v == GraphemeVocab::kSos ||
            v == GraphemeVocab::kUnk)
          continue;
        std::vector<std::int32_t> next = live[k].tokens;
        next.push_back(static_cast<std::int32_t>(v));
        candidates.emplace_back(
            live[k].log_prob + (static_cast<double>(row[v]) - lse),
            std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), candidate_less);
    if (candidates.size() > static_cast<std::size_t>(dcfg.beam_size))
      candidates.resize(static_cast<std::size_t>(dcfg.beam_size));

    std::vector<Live> next_live;
    for (auto& [lp, tokens] : candidates) {
      if (tokens.back() == GraphemeVocab::kEos) {
        finalize(std::move(tokens), lp, false);
      } else if (tokens.size() >= max_len) {
        finalize(std::move(tokens), lp, true);
      } else {
        next_live.push_back(Live{std::move(tokens), lp});
      }
    }
    live = std::move(next_live);
  }

  std::sort(done.begin(), done.end(), [](const Hypothesis& a,
                                         const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  BeamResult result;
  if (done.empty())
    throw UsageError("decode.beam_search: no hypotheses produced");
  result.best = done.front();
  result.beam = std::move(done);
  return result;
}

template BeamResult beam_search(const model::ModelConfig&,
                                const numerics::ParamStore<float>&,
                                const features::FeatureSequence&,
                                const DecodeConfig&,
                                const model::GraphemeVocab&);
template BeamResult beam_search(const model::ModelConfig&,
                                const numerics::ParamStore<double>&,
                                const features::FeatureSequence&,
                                const DecodeConfig&,
                                const model::GraphemeVocab&);

}  // namespace metaccent::decode
