#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metaccent/decode/beam.hpp"
#include "metaccent/error.hpp"
#include "metaccent/numerics/optim.hpp"
#include "metaccent/rng.hpp"

using namespace metaccent;
using namespace metaccent::decode;
using model::GraphemeVocab;
using model::ModelConfig;
using numerics::ParamStore;

namespace {

features::FeatureSequence random_features(std::size_t frames, std::size_t bins,
                                          Rng& rng) {
  features::FeatureSequence f;
  f.n_frames = frames;
  f.n_bins = bins;
  f.frames.resize(frames * bins);
  for (auto& v : f.frames) v = static_cast<float>(rng.uniform(-1, 1));
  return f;
}

ModelConfig micro_config(int vocab) {
  ModelConfig cfg;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.dim_model = 8;
  cfg.dim_inner = 16;
  cfg.dim_emb = 8;
  cfg.n_heads = 2;
  cfg.vgg_channels = {2, 3};
  cfg.n_mels = 8;
  cfg.dropout_rate = 0;
  cfg.vocab_size = vocab;
  cfg.validate();
  return cfg;
}

// Independent greedy decoder: argmax each step, lowest index on ties.
template <typename T>
std::pair<std::vector<std::int32_t>, double> greedy_decode(
    const ModelConfig& cfg, const ParamStore<T>& params,
    const features::FeatureSequence& feat, const GraphemeVocab& vocab,
    std::size_t max_len) {
  numerics::Tensor<T> f({1, feat.n_frames, feat.n_bins});
  for (std::size_t i = 0; i < feat.frames.size(); ++i)
    f.mutable_data()[i] = static_cast<T>(feat.frames[i]);
  auto enc = model::encode<T>(nullptr, cfg, params, f,
                              {static_cast<int>(feat.n_frames)});
  std::vector<std::int32_t> tokens;
  double logp = 0;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<std::int32_t> prefix{GraphemeVocab::kSos};
    for (auto t : tokens) prefix.push_back(t);
    auto logits = model::decode_step<T>(nullptr, cfg, params, enc, prefix, 1,
                                        prefix.size(), nullptr);
    const std::size_t V = vocab.size();
    const T* row = logits.data() + (prefix.size() - 1) * V;
    double mx = -1e300;
    for (std::size_t v = 0; v < V; ++v)
      mx = std::max(mx, static_cast<double>(row[v]));
    double denom = 0;
    for (std::size_t v = 0; v < V; ++v)
      denom += std::exp(static_cast<double>(row[v]) - mx);
    const double lse = mx + std::log(denom);
    int best = -1;
    double best_lp = -1e300;
    for (std::size_t v = 0; v < V; ++v) {
      if (v == GraphemeVocab::kPad || v == GraphemeVocab::kSos ||
          v == GraphemeVocab::kUnk)
        continue;
      const double lp = static_cast<double>(row[v]) - lse;
      if (lp > best_lp) {
        best_lp = lp;
        best = static_cast<int>(v);
      }
    }
    tokens.push_back(best);
    logp += best_lp;
    if (best == GraphemeVocab::kEos) break;
  }
  return {tokens, logp};
}

}  // namespace

TEST_CASE("score_hypothesis unit values") {
  DecodeConfig cfg;  // eta 1, gamma 0.1
  CHECK(std::abs(score_hypothesis(-2.0, 4, cfg) - (-1.8)) < 1e-12);
  DecodeConfig no_bonus;
  no_bonus.gamma = 0;
  no_bonus.eta = 1.7;
  CHECK(score_hypothesis(-3.25, 9, no_bonus) == 1.7 * -3.25);
  CHECK(score_hypothesis(-2.5, 0, cfg) == -2.5);  // sqrt(0) = 0
  CHECK_THROWS_AS(score_hypothesis(-1.0, -1, cfg), DataError);
}

TEST_CASE("word_count over detokenized text") {
  auto vocab = GraphemeVocab::from_characters({' ', 'a', 'c', 'e', 'h', 's',
                                               't'});
  CHECK(word_count({}, vocab) == 0);
  CHECK(word_count(vocab.tokenize("the cat sat"), vocab) == 3);
  CHECK(word_count(vocab.tokenize("  east  seas "), vocab) == 2);
  auto with_eos = vocab.tokenize("tea");
  with_eos.push_back(GraphemeVocab::kEos);
  CHECK(word_count(with_eos, vocab) == 1);
}

TEST_CASE("beam_size=1 equals greedy decoding bitwise over 20 models") {
  auto vocab = GraphemeVocab::from_characters({'a', 'b', 'c', 'd'});
  auto cfg = micro_config(static_cast<int>(vocab.size()));
  Rng rng(404);
  DecodeConfig dcfg;
  dcfg.beam_size = 1;
  dcfg.gamma = 0;  // score == log-prob, so ranking cannot reorder
  dcfg.max_len = 6;
  for (int m = 0; m < 20; ++m) {
    auto params = model::build_model<float>(cfg, 600 + m);
    auto feat = random_features(6 + rng.below(6), 8, rng);
    auto res = beam_search<float>(cfg, params, feat, dcfg, vocab);
    auto [greedy_tokens, greedy_lp] = greedy_decode<float>(
        cfg, params, feat, vocab, dcfg.max_len);
    CHECK(res.best.tokens == greedy_tokens);
    CHECK(res.best.log_prob == greedy_lp);  // bitwise: same double arithmetic
  }
}

TEST_CASE("a dominant path is returned for any beam size") {
  auto vocab = GraphemeVocab::from_characters({' ', 'a', 'b', 'd', 'g', 'o'});
  auto cfg = model::ModelConfig::toy_profile(static_cast<int>(vocab.size()));
  cfg.dropout_rate = 0;
  auto params = model::build_model<float>(cfg, 31);
  Rng rng(11);
  auto feat = random_features(10, 20, rng);
  std::vector<const features::FeatureSequence*> fp{&feat};
  auto batch = model::prepare_batch<float>(fp, {"bag do"}, vocab, cfg);

  numerics::AdamState<float> st;
  numerics::AdamConfig adam;
  adam.lr = 3e-3;
  for (int step = 0; step < 80; ++step) {
    numerics::Tape<float> tape;
    params.set_requires_grad(true);
    auto loss = model::nll_loss<float>(&tape, cfg, params, batch);
    tape.backward(loss);
    params = numerics::adam_step(st, params, numerics::gradients_for(tape, params), adam);
  }

  auto expected = vocab.tokenize("bag do");
  expected.push_back(GraphemeVocab::kEos);
  for (int beam : {1, 2, 5, 9}) {
    DecodeConfig dcfg;
    dcfg.beam_size = beam;
    dcfg.max_len = 20;
    auto res = beam_search<float>(cfg, params, feat, dcfg, vocab);
    CHECK(res.best.tokens == expected);
    CHECK_FALSE(res.best.truncated);
  }
}

TEST_CASE("beam covering all paths equals exhaustive enumeration argmax") {
  // vocab {<eos>, a, b}: reserved + two characters, with pad/sos/unk never
  // proposed
  auto vocab = GraphemeVocab::from_characters({'a', 'b'});
  auto cfg = micro_config(static_cast<int>(vocab.size()));
  Rng rng(777);
  DecodeConfig dcfg;
  dcfg.beam_size = 27;
  dcfg.max_len = 3;
  dcfg.gamma = 0;

  for (int m = 0; m < 10; ++m) {
    auto params = model::build_model<float>(cfg, 900 + m);
    auto feat = random_features(5 + rng.below(5), 8, rng);

    // enumeration oracle: all sequences over {a, b} terminated by <eos> at
    // length <= 3, plus truncated length-3 paths
    numerics::Tensor<float> f({1, feat.n_frames, feat.n_bins});
    for (std::size_t i = 0; i < feat.frames.size(); ++i)
      f.mutable_data()[i] = feat.frames[i];
    auto enc = model::encode<float>(nullptr, cfg, params, f,
                                    {static_cast<int>(feat.n_frames)});
    const std::size_t V = vocab.size();
    auto logp_of = [&](const std::vector<std::int32_t>& seq) {
      std::vector<std::int32_t> prefix{GraphemeVocab::kSos};
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) prefix.push_back(seq[i]);
      auto logits = model::decode_step<float>(nullptr, cfg, params, enc,
                                              prefix, 1, prefix.size(),
                                              nullptr);
      double total = 0;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const float* row = logits.data() + i * V;
        double mx = -1e300;
        for (std::size_t v = 0; v < V; ++v)
          mx = std::max(mx, static_cast<double>(row[v]));
        double denom = 0;
        for (std::size_t v = 0; v < V; ++v)
          denom += std::exp(static_cast<double>(row[v]) - mx);
        total += static_cast<double>(row[static_cast<std::size_t>(seq[i])]) -
                 (mx + std::log(denom));
      }
      return total;
    };

    const std::int32_t A = vocab.index_of('a'), B = vocab.index_of('b');
    std::vector<std::vector<std::int32_t>> pool;
    const std::vector<std::int32_t> letters{A, B};
    pool.push_back({GraphemeVocab::kEos});
    for (auto x : letters) {
      pool.push_back({x, GraphemeVocab::kEos});
      for (auto y : letters) {
        pool.push_back({x, y, GraphemeVocab::kEos});
        for (auto z : letters) pool.push_back({x, y, z});  // truncated
      }
    }
    REQUIRE(pool.size() == 15);

    std::vector<std::int32_t> best_seq;
    double best_score = -1e300;
    for (const auto& seq : pool) {
      const double lp = logp_of(seq);
      const double score =
          score_hypothesis(lp, word_count(seq, vocab), dcfg);
      if (score > best_score ||
          (score == best_score && seq < best_seq)) {
        best_score = score;
        best_seq = seq;
      }
    }

    auto res = beam_search<float>(cfg, params, feat, dcfg, vocab);
    CAPTURE(m);
    CHECK(res.best.tokens == best_seq);
    CHECK(res.best.score == doctest::Approx(best_score).epsilon(1e-12));
    CHECK(res.beam.size() == pool.size());  // all paths retained
  }
}

TEST_CASE("hypothesis scores stay recomputable and decoding is deterministic") {
  auto vocab = GraphemeVocab::from_characters({'a', 'b', 'c'});
  auto cfg = micro_config(static_cast<int>(vocab.size()));
  auto params = model::build_model<float>(cfg, 5);
  Rng rng(55);
  auto feat = random_features(9, 8, rng);
  DecodeConfig dcfg;
  dcfg.beam_size = 4;
  dcfg.max_len = 5;
  auto r1 = beam_search<float>(cfg, params, feat, dcfg, vocab);
  auto r2 = beam_search<float>(cfg, params, feat, dcfg, vocab);
  REQUIRE(r1.beam.size() == r2.beam.size());
  for (std::size_t i = 0; i < r1.beam.size(); ++i) {
    CHECK(r1.beam[i].tokens == r2.beam[i].tokens);
    CHECK(r1.beam[i].log_prob == r2.beam[i].log_prob);
    const auto& h = r1.beam[i];
    CHECK(std::abs(h.score - score_hypothesis(h.log_prob, h.word_count, dcfg)) <
          1e-9);
  }

  DecodeConfig bad;
  bad.beam_size = 0;
  CHECK_THROWS_AS(beam_search<float>(cfg, params, feat, bad, vocab),
                  ConfigError);
}
