#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "metaccent/data/manifest.hpp"
#include "metaccent/model/transformer.hpp"
#include "metaccent/numerics/optim.hpp"

namespace metaccent::meta {

struct MetaConfig {
  double alpha = 0.02;  // inner (fast adaptation) learning rate
  double beta = 1e-3;   // meta step size, the outer Adam learning rate
  int inner_steps = 1;
  int meta_batch = 3;     // accents sampled per meta-iteration
  int support_batch = 4;  // utterances per inner batch
  int query_batch = 4;    // utterances per outer batch
  std::int64_t total_iterations = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FinetuneProtocol {
  double shot_fraction = 0.25;     // 0 means zero-shot: no update at all
  int iterations_per_sample = 10;  // full passes over the k-shot selection
  double learning_rate = 0.02;     // plain SGD
  int batch_size = 4;
  std::uint64_t seed = 1;

  void validate() const;
};

// The meta-learning core is agnostic to what the loss is: a task episode is
// a pair of loss closures evaluated at arbitrary parameters. The ASR layer
// below builds these from utterance batches; tests build them from toy
// objectives.
template <typename T>
using LossClosure = std::function<numerics::Tensor<T>(
    numerics::Tape<T>*, const numerics::ParamStore<T>&)>;

template <typename T>
struct TaskEpisode {
  std::string task_id;
  LossClosure<T> support_loss;
  LossClosure<T> query_loss;
};

template <typename T>
struct AdaptResult {
  numerics::ParamStore<T> adapted;
  std::vector<double> step_losses;  // support loss before each inner step
};

// inner_steps SGD steps from theta on the support loss. theta itself is
// never written; each step produces a fresh store.
template <typename T>
AdaptResult<T> inner_adapt_on(const numerics::ParamStore<T>& theta,
                              const LossClosure<T>& loss, double alpha,
                              int inner_steps);

struct EpisodeMetrics {
  std::string task_id;
  double support_loss_pre = 0;  // at theta, before adaptation
  double query_loss_post = 0;   // at theta', after adaptation
};

template <typename T>
struct OuterGrad {
  numerics::ParamStore<T> grads;  // sum over episodes, reduced in task order
  std::vector<EpisodeMetrics> metrics;
};

// First-order meta-gradient: adapt per episode, differentiate the query
// loss at the adapted parameters, and sum across episodes in lexicographic
// task order. Episodes may be evaluated concurrently (jobs > 1); the
// reduction order is fixed either way.
template <typename T>
OuterGrad<T> fomaml_outer_grad(const numerics::ParamStore<T>& theta,
                               const std::vector<TaskEpisode<T>>& episodes,
                               double alpha, int inner_steps, int jobs = 1);

// ---- ASR layer -----------------------------------------------------------

struct Episode {
  std::string accent_id;
  std::vector<const data::Utterance*> support;  // A_tra
  std::vector<const data::Utterance*> query;    // A_val
};

// Loss closures over teacher-forced batches of the episode's utterances.
// train=true enables dropout, drawing from a stream keyed by
// (dropout_seed, accent).
template <typename T>
TaskEpisode<T> make_asr_episode(const model::ModelConfig& mcfg,
                                const model::GraphemeVocab& vocab,
                                const Episode& episode, bool train = false,
                                std::uint64_t dropout_seed = 0);

// theta' after inner_steps SGD steps on the support batch; theta untouched.
template <typename T>
numerics::ParamStore<T> inner_adapt(
    const numerics::ParamStore<T>& theta, const model::ModelConfig& mcfg,
    const model::GraphemeVocab& vocab,
    const std::vector<const data::Utterance*>& support, double alpha,
    int inner_steps);

template <typename T>
struct MetaStepResult {
  numerics::ParamStore<T> theta_next;
  std::vector<EpisodeMetrics> metrics;
};

// One full Eq.-style meta-update: outer gradient over the episodes, then an
// Adam step at learning rate cfg.beta.
template <typename T>
MetaStepResult<T> fomaml_meta_step(const numerics::ParamStore<T>& theta,
                                   const model::ModelConfig& mcfg,
                                   const model::GraphemeVocab& vocab,
                                   const std::vector<Episode>& episodes,
                                   const MetaConfig& cfg,
                                   numerics::AdamState<T>& outer_state,
                                   int jobs = 1, bool train = true,
                                   std::uint64_t dropout_seed = 0);

// Gradient of the batch loss at theta (the joint-training step direction);
// exposed separately so it can be compared against the meta gradient.
template <typename T>
std::pair<numerics::ParamStore<T>, double> nll_grad(
    const numerics::ParamStore<T>& theta, const model::ModelConfig& mcfg,
    const model::GraphemeVocab& vocab,
    const std::vector<const data::Utterance*>& batch, bool train = false,
    std::uint64_t dropout_seed = 0);

// One outer-optimizer step on an accent-mixed batch.
template <typename T>
std::pair<numerics::ParamStore<T>, double> joint_train_step(
    const numerics::ParamStore<T>& theta, const model::ModelConfig& mcfg,
    const model::GraphemeVocab& vocab,
    const std::vector<const data::Utterance*>& batch,
    numerics::AdamState<T>& outer_state, double beta, bool train = true,
    std::uint64_t dropout_seed = 0);

template <typename T>
struct FinetuneResult {
  numerics::ParamStore<T> adapted;
  std::vector<std::string> selected_ids;
  std::vector<double> pass_losses;  // mean loss per full pass
};

// k-shot protocol: a seeded selection of floor(shot * n) utterances, then
// iterations_per_sample mini-batched SGD passes over it. shot_fraction 0
// returns theta unchanged.
template <typename T>
FinetuneResult<T> finetune(const numerics::ParamStore<T>& theta,
                           const model::ModelConfig& mcfg,
                           const model::GraphemeVocab& vocab,
                           const std::vector<data::Utterance>& adapt_train,
                           const FinetuneProtocol& protocol);

}  // namespace metaccent::meta
