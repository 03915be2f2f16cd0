#include "metaccent/meta/maml.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metaccent/error.hpp"
#include "metaccent/parallel.hpp"
#include "metaccent/rng.hpp"

namespace metaccent::meta {

using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;

void MetaConfig::validate() const {
  if (alpha <= 0 || beta <= 0)
    throw ConfigError("meta.config: alpha and beta must be positive");
  if (inner_steps < 1)
    throw ConfigError("meta.config: inner_steps must be >= 1");
  if (meta_batch < 1) throw ConfigError("meta.config: meta_batch must be >= 1");
  if (support_batch < 1 || query_batch < 1)
    throw ConfigError("meta.config: batch sizes must be >= 1");
  if (total_iterations < 1)
    throw ConfigError("meta.config: total_iterations must be >= 1");
}

void FinetuneProtocol::validate() const {
  if (shot_fraction < 0 || shot_fraction > 1)
    throw ConfigError("meta.finetune: shot_fraction must be in [0, 1]");
  if (iterations_per_sample < 1)
    throw ConfigError("meta.finetune: iterations_per_sample must be >= 1");
  if (learning_rate <= 0)
    throw ConfigError("meta.finetune: learning_rate must be positive");
  if (batch_size < 1)
    throw ConfigError("meta.finetune: batch_size must be >= 1");
}

template <typename T>
AdaptResult<T> inner_adapt_on(const ParamStore<T>& theta,
                              const LossClosure<T>& loss, double alpha,
                              int inner_steps) {
  if (inner_steps < 1)
    throw ConfigError("meta.inner_adapt: inner_steps must be >= 1");
  AdaptResult<T> result;
  ParamStore<T> current = theta;  // shares buffers; sgd_step never writes
  for (int step = 0; step < inner_steps; ++step) {
    current.set_requires_grad(true);
    Tape<T> tape;
    Tensor<T> l = loss(&tape, current);
    const double value = static_cast<double>(l.item());
    if (!std::isfinite(value))
      throw DivergenceError(
          "meta.inner_adapt: non-finite support loss at inner step " +
              std::to_string(step),
          step);
    result.step_losses.push_back(value);
    tape.backward(l);
    current = numerics::sgd_step(current, numerics::gradients_for(tape, current),
                                 alpha);
  }
  result.adapted = std::move(current);
  return result;
}

template <typename T>
OuterGrad<T> fomaml_outer_grad(const ParamStore<T>& theta,
                               const std::vector<TaskEpisode<T>>& episodes,
                               double alpha, int inner_steps, int jobs) {
  if (episodes.empty())
    throw DataError("meta.fomaml: need at least one episode");

  // lexicographic task order fixes the reduction
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return episodes[a].task_id < episodes[b].task_id;
                   });

  struct Slot {
    ParamStore<T> grads;
    EpisodeMetrics metrics;
  };
  std::vector<Slot> slots(episodes.size());
  parallel_for(order.size(), jobs, [&](std::size_t i) {
    const TaskEpisode<T>& ep = episodes[order[i]];
    try {
      AdaptResult<T> inner =
          inner_adapt_on(theta, ep.support_loss, alpha, inner_steps);
      ParamStore<T> adapted = std::move(inner.adapted);
      adapted.set_requires_grad(true);
      Tape<T> tape;
      Tensor<T> q = ep.query_loss(&tape, adapted);
      const double qv = static_cast<double>(q.item());
      if (!std::isfinite(qv))
        throw DivergenceError("meta.fomaml: non-finite query loss", -1);
      tape.backward(q);
      slots[i].grads = numerics::gradients_for(tape, adapted);
      slots[i].metrics = {ep.task_id, inner.step_losses.front(), qv};
    } catch (const DivergenceError& e) {
      throw DivergenceError("meta.fomaml: accent '" + ep.task_id +
                                "' diverged: " + e.what(),
                            e.step());
    }
  });

  OuterGrad<T> out;
  out.grads = numerics::zeros_like(theta);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    numerics::accumulate(out.grads, slots[i].grads);
    out.metrics.push_back(slots[i].metrics);
  }
  return out;
}

namespace {

template <typename T>
std::shared_ptr<model::PreparedBatch<T>> batch_of(
    const model::ModelConfig& mcfg, const model::GraphemeVocab& vocab,
    const std::vector<const data::Utterance*>& utts, const char* what) {
  if (utts.empty())
    throw DataError(std::string("meta.episode: empty ") + what + " batch");
  std::vector<const features::FeatureSequence*> feats;
  std::vector<std::string> texts;
  for (const auto* u : utts) {
    if (!u->features)
      throw DataError("meta.episode: utterance '" + u->id +
                      "' has no materialized features");
    feats.push_back(&*u->features);
    texts.push_back(u->transcript);
  }
  return std::make_shared<model::PreparedBatch<T>>(
      model::prepare_batch<T>(feats, texts, vocab, mcfg));
}

}  // namespace

template <typename T>
TaskEpisode<T> make_asr_episode(const model::ModelConfig& mcfg,
                                const model::GraphemeVocab& vocab,
                                const Episode& episode, bool train,
                                std::uint64_t dropout_seed) {
  for (const auto* s : episode.support)
    for (const auto* q : episode.query)
      if (s->id == q->id)
        throw DataError("meta.episode: utterance '" + s->id +
                        "' appears in both support and query of accent '" +
                        episode.accent_id + "'");

  auto support = batch_of<T>(mcfg, vocab, episode.support, "support");
  auto query = batch_of<T>(mcfg, vocab, episode.query, "query");
  auto rng = std::make_shared<Rng>(
      Rng(dropout_seed).split("dropout." + episode.accent_id));

  TaskEpisode<T> task;
  task.task_id = episode.accent_id;
  task.support_loss = [mcfg, &vocab, support, train, rng](
                          Tape<T>* tape, const ParamStore<T>& p) {
    model::ForwardOptions opt{train, rng.get()};
    return model::nll_loss<T>(tape, mcfg, p, *support, opt);
  };
  task.query_loss = [mcfg, &vocab, query, train, rng](
                        Tape<T>* tape, const ParamStore<T>& p) {
    model::ForwardOptions opt{train, rng.get()};
    return model::nll_loss<T>(tape, mcfg, p, *query, opt);
  };
  return task;
}

template <typename T>
ParamStore<T> inner_adapt(const ParamStore<T>& theta,
                          const model::ModelConfig& mcfg,
                          const model::GraphemeVocab& vocab,
                          const std::vector<const data::Utterance*>& support,
                          double alpha, int inner_steps) {
  auto batch = batch_of<T>(mcfg, vocab, support, "support");
  LossClosure<T> loss = [mcfg, batch](Tape<T>* tape, const ParamStore<T>& p) {
    return model::nll_loss<T>(tape, mcfg, p, *batch);
  };
  return inner_adapt_on(theta, loss, alpha, inner_steps).adapted;
}

template <typename T>
MetaStepResult<T> fomaml_meta_step(const ParamStore<T>& theta,
                                   const model::ModelConfig& mcfg,
                                   const model::GraphemeVocab& vocab,
                                   const std::vector<Episode>& episodes,
                                   const MetaConfig& cfg,
                                   numerics::AdamState<T>& outer_state,
                                   int jobs, bool train,
                                   std::uint64_t dropout_seed) {
  cfg.validate();
  std::vector<TaskEpisode<T>> tasks;
  tasks.reserve(episodes.size());
  for (const auto& ep : episodes)
    tasks.push_back(make_asr_episode<T>(mcfg, vocab, ep, train, dropout_seed));

  OuterGrad<T> outer =
      fomaml_outer_grad(theta, tasks, cfg.alpha, cfg.inner_steps, jobs);
  numerics::AdamConfig adam;
  adam.lr = cfg.beta;
  MetaStepResult<T> result;
  result.theta_next = numerics::adam_step(outer_state, theta, outer.grads, adam);
  result.metrics = std::move(outer.metrics);
  return result;
}

template <typename T>
std::pair<ParamStore<T>, double> nll_grad(
    const ParamStore<T>& theta, const model::ModelConfig& mcfg,
    const model::GraphemeVocab& vocab,
    const std::vector<const data::Utterance*>& batch, bool train,
    std::uint64_t dropout_seed) {
  auto prepared = batch_of<T>(mcfg, vocab, batch, "joint");
  ParamStore<T> p = theta;
  p.set_requires_grad(true);
  Rng rng = Rng(dropout_seed).split("dropout.joint");
  model::ForwardOptions opt{train, &rng};
  Tape<T> tape;
  Tensor<T> loss = model::nll_loss<T>(tape ? &tape : nullptr, mcfg, p, *prepared, opt);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value))
    throw DivergenceError("meta.joint: non-finite loss", -1);
  tape.backward(loss);
  return {numerics::gradients_for(tape, p), value};
}

template <typename T>
std::pair<ParamStore<T>, double> joint_train_step(
    const ParamStore<T>& theta, const model::ModelConfig& mcfg,
    const model::GraphemeVocab& vocab,
    const std::vector<const data::Utterance*>& batch,
    numerics::AdamState<T>& outer_state, double beta, bool train,
    std::uint64_t dropout_seed) {
  auto [grads, value] = nll_grad(theta, mcfg, vocab, batch, train, dropout_seed);
  numerics::AdamConfig adam;
  adam.lr = beta;
  return {numerics::adam_step(outer_state, theta, grads, adam), value};
}

template <typename T>
FinetuneResult<T> finetune(const ParamStore<T>& theta,
                           const model::ModelConfig& mcfg,
                           const model::GraphemeVocab& vocab,
                           const std::vector<data::Utterance>& adapt_train,
                           const FinetuneProtocol& protocol) {
  protocol.validate();
  FinetuneResult<T> result;
  result.adapted = theta;
  if (protocol.shot_fraction == 0) return result;  // zero-shot

  const std::size_t n = adapt_train.size();
  const std::size_t k = static_cast<std::size_t>(
      protocol.shot_fraction * static_cast<double>(n));
  if (k == 0)
    throw ProtocolError("meta.finetune: shot fraction " +
                        std::to_string(protocol.shot_fraction) + " of " +
                        std::to_string(n) +
                        " utterances selects nothing; caller may fall back "
                        "to zero-shot");

  Rng root(protocol.seed);
  const auto picked = root.split("finetune.select").sample_indices(n, k);
  std::vector<const data::Utterance*> selected;
  for (std::size_t idx : picked) {
    selected.push_back(&adapt_train[idx]);
    result.selected_ids.push_back(adapt_train[idx].id);
  }

  ParamStore<T> current = theta;
  for (int pass = 0; pass < protocol.iterations_per_sample; ++pass) {
    Rng order = root.split("finetune.order." + std::to_string(pass));
    std::vector<const data::Utterance*> shuffled = selected;
    order.shuffle(shuffled.begin(), shuffled.end());

    double pass_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < shuffled.size();
         start += static_cast<std::size_t>(protocol.batch_size)) {
      const std::size_t end = std::min(
          shuffled.size(), start + static_cast<std::size_t>(protocol.batch_size));
      std::vector<const data::Utterance*> batch(shuffled.begin() + start,
                                                shuffled.begin() + end);
      auto prepared = batch_of<T>(mcfg, vocab, batch, "finetune");
      current.set_requires_grad(true);
      Tape<T> tape;
      Tensor<T> loss = model::nll_loss<T>(&tape, mcfg, current, *prepared);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value))
        throw DivergenceError("meta.finetune: non-finite loss at pass " +
                                  std::to_string(pass),
                              pass);
      tape.backward(loss);
      current = numerics::sgd_step(
          current, numerics::gradients_for(tape, current),
          protocol.learning_rate);
      pass_loss += value;
      ++batches;
    }
    result.pass_losses.push_back(pass_loss / static_cast<double>(batches));
  }
  result.adapted = std::move(current);
  return result;
}

#define METACCENT_INSTANTIATE_META(T)                                         \
  template struct TaskEpisode<T>;                                             \
  template AdaptResult<T> inner_adapt_on(const ParamStore<T>&,                \
                                         const LossClosure<T>&, double, int); \
  template OuterGrad<T> fomaml_outer_grad(                                    \
      const ParamStore<T>&, const std::vector<TaskEpisode<T>>&, double, int,  \
      int);                                                                   \
  template TaskEpisode<T> make_asr_episode(const model::ModelConfig&,         \
                                           const model::GraphemeVocab&,       \
                                           const Episode&, bool,              \
                                           std::uint64_t);                    \
  template ParamStore<T> inner_adapt(                                         \
      const ParamStore<T>&, const model::ModelConfig&,                        \
      const model::GraphemeVocab&,                                            \
      const std::vector<const data::Utterance*>&, double, int);               \
  template MetaStepResult<T> fomaml_meta_step(                                \
      const ParamStore<T>&, const model::ModelConfig&,                        \
      const model::GraphemeVocab&, const std::vector<Episode>&,               \
      const MetaConfig&, numerics::AdamState<T>&, int, bool, std::uint64_t);  \
  template std::pair<ParamStore<T>, double> nll_grad(                         \
      const ParamStore<T>&, const model::ModelConfig&,                        \
      const model::GraphemeVocab&,                                            \
      const std::vector<const data::Utterance*>&, bool, std::uint64_t);       \
  template std::pair<ParamStore<T>, double> joint_train_step(                 \
      const ParamStore<T>&, const model::ModelConfig&,                        \
      const model::GraphemeVocab&,                                            \
      const std::vector<const data::Utterance*>&, numerics::AdamState<T>&,    \
      double, bool, std::uint64_t);                                           \
  template FinetuneResult<T> finetune(const ParamStore<T>&,                   \
                                      const model::ModelConfig&,              \
                                      const model::GraphemeVocab&,            \
                                      const std::vector<data::Utterance>&,    \
                                      const FinetuneProtocol&);

METACCENT_INSTANTIATE_META(float)
METACCENT_INSTANTIATE_META(double)

#undef METACCENT_INSTANTIATE_META

}  // namespace metaccent::meta
