#pragma once
// PPO over ordered Top-K set actions: returns, GAE, the clipped surrogate
// with value loss and entropy bonus, analytic gradients through the MLP /
// softmax / joint-log-prob chain, and Adam updates.

#include <vector>

#include "memskill/controller.hpp"

namespace memskill {

struct Transition {
  SelectionStep selection_step;
  double reward = 0.0;  // 0 for non-terminal steps under terminal-only rewards
  bool done = false;
  double behavior_log_prob = 0.0;  // log pi_theta_old under the behavior policy
};

struct TrainingConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 3e-4;
  int epochs_per_batch = 4;
  int minibatch_size = 64;
  bool normalize_advantages = true;
  uint64_t seed = 0;
};

// G_t = r_t + gamma * G_{t+1}, terminal bootstrap 0.
std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma);

// delta_t = r_t + gamma V_{t+1} - V_t (V_{T+1} = 0);
// A_t = delta_t + gamma*lambda * A_{t+1}.
std::vector<double> compute_gae(const std::vector<double>& rewards,
                                const std::vector<double>& values, double gamma, double lambda);

// One flattened PPO sample. Skill embeddings travel with the sample since
// the bank (and hence U) can differ across bank versions within a batch.
struct PpoSample {
  Vec state;
  Mat skill_embeddings;  // N x D, rows u_i
  std::vector<int> action;
  double behavior_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct PpoStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double ratio_clip_frac = 0.0;
};

// loss = -mean[min(r A, clip(r) A)] + c_v mean[(V - G)^2] - c_H mean[H(p)]
// Gradient is exact for the fixed two-layer architecture; NaN/Inf in the
// loss or gradient aborts the batch.
PpoStats ppo_objective(const std::vector<PpoSample>& batch, const ControllerParams& params,
                       const TrainingConfig& config, Vec* gradient);

struct AdamState {
  Vec m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  explicit AdamState(int n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

void update_params(ControllerParams& params, const Vec& gradient, AdamState& state,
                   double learning_rate);

// Turns collected episodes into flattened samples (computing returns and
// GAE per episode) and runs epochs of minibatched PPO updates.
class Trainer {
 public:
  Trainer(const ControllerParams& params, TrainingConfig config)
      : config_(config), adam_(params.count()), rng_(config.seed) {}

  // `episodes` are per-trace transition sequences; samples carry the
  // per-step skill-embedding matrix used at rollout time.
  PpoStats update(ControllerParams& params,
                  const std::vector<std::vector<Transition>>& episodes,
                  const std::vector<std::vector<Mat>>& skill_embeddings);

  static std::vector<PpoSample> make_batch(
      const std::vector<std::vector<Transition>>& episodes,
      const std::vector<std::vector<Mat>>& skill_embeddings, const TrainingConfig& config);

 private:
  TrainingConfig config_;
  AdamState adam_;
  Rng rng_;
};

}  // namespace memskill
