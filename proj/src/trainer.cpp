#include "memskill/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace memskill {

std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("compute_returns: empty episode");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

std::vector<double> compute_gae(const std::vector<double>& rewards,
                                const std::vector<double>& values, double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("compute_gae: rewards/values length mismatch");
  int t_max = static_cast<int>(rewards.size());
  std::vector<double> adv(t_max);
  double acc = 0.0;
  for (int t = t_max - 1; t >= 0; --t) {
    double v_next = (t + 1 < t_max) ? values[t + 1] : 0.0;
    double delta = rewards[t] + gamma * v_next - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

PpoStats ppo_objective(const std::vector<PpoSample>& batch, const ControllerParams& params,
                       const TrainingConfig& config, Vec* gradient) {
  if (batch.empty()) throw std::invalid_argument("ppo_objective: empty batch");
  const int n_params = params.count();
  Vec grad = Vec::Zero(n_params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const ParamLayout off = params.layout();

  Eigen::Map<Mat> gw1(grad.data() + off.w1, params.hidden_dim(), params.state_dim());
  Eigen::Map<Vec> gb1(grad.data() + off.b1, params.hidden_dim());
  Eigen::Map<Mat> gw2(grad.data() + off.w2, params.embed_dim(), params.hidden_dim());
  Eigen::Map<Vec> gb2(grad.data() + off.b2, params.embed_dim());
  Eigen::Map<Mat> gv1(grad.data() + off.v1, params.hidden_dim(), params.state_dim());
  Eigen::Map<Vec> gbv1(grad.data() + off.bv1, params.hidden_dim());
  Eigen::Map<Vec> gv2(grad.data() + off.v2, params.hidden_dim());

  PpoStats stats;
  int clipped = 0;

  for (const auto& sample : batch) {
    // forward
    Vec a1 = params.w1() * sample.state + params.b1();
    Vec t1 = a1.array().tanh();
    Vec h = params.w2() * t1 + params.b2();
    Vec z = sample.skill_embeddings * h;
    Vec p = softmax(z);
    double log_pi = joint_log_prob(p, sample.action);

    Vec av = params.v1() * sample.state + params.bv1();
    Vec tv = av.array().tanh();
    double value = params.v2().dot(tv) + params.bv2();

    // losses
    double ratio = std::exp(log_pi - sample.behavior_log_prob);
    double lo = 1.0 - config.clip_epsilon, hi = 1.0 + config.clip_epsilon;
    double surr1 = ratio * sample.advantage;
    double surr2 = std::clamp(ratio, lo, hi) * sample.advantage;
    double policy_term = std::min(surr1, surr2);
    if (surr1 > surr2) ++clipped;

    double v_err = value - sample.ret;
    double entropy = 0.0;
    for (int i = 0; i < static_cast<int>(p.size()); ++i)
      if (p[i] > 0.0) entropy -= p[i] * std::log(p[i]);

    stats.policy_loss += -policy_term * inv_b;
    stats.value_loss += v_err * v_err * inv_b;
    stats.entropy += entropy * inv_b;

    // d loss / d log_pi: the clipped branch is flat in theta.
    double dlogpi = (surr1 <= surr2) ? -sample.advantage * ratio * inv_b : 0.0;

    // d log_pi / d p
    Vec dlp_dp = Vec::Zero(p.size());
    {
      double taken = 0.0;
      std::vector<double> denom(sample.action.size());
      for (size_t j = 0; j < sample.action.size(); ++j) {
        denom[j] = 1.0 - taken;
        taken += p[sample.action[j]];
      }
      for (size_t j = 0; j < sample.action.size(); ++j) {
        dlp_dp[sample.action[j]] += 1.0 / p[sample.action[j]];
        // earlier picks appear in every later renormalization denominator
        for (size_t l = j + 1; l < sample.action.size(); ++l)
          dlp_dp[sample.action[j]] += 1.0 / denom[l];
      }
    }

    // d entropy / d p, with the -c_H sign folded in below
    Vec dh_dp = Vec::Zero(p.size());
    for (int i = 0; i < static_cast<int>(p.size()); ++i)
      dh_dp[i] = (p[i] > 0.0) ? -(std::log(p[i]) + 1.0) : 0.0;

    // combine through the softmax Jacobian: dz_i = p_i (g_i - p.g)
    Vec g_p = dlogpi * dlp_dp + (-config.entropy_coef * inv_b) * dh_dp;
    double dot = p.dot(g_p);
    Vec dz = p.array() * (g_p.array() - dot);

    // policy MLP backprop
    Vec dh = sample.skill_embeddings.transpose() * dz;
    gb2 += dh;
    gw2 += dh * t1.transpose();
    Vec dt1 = params.w2().transpose() * dh;
    Vec da1 = dt1.array() * (1.0 - t1.array().square());
    gb1 += da1;
    gw1 += da1 * sample.state.transpose();

    // value head backprop
    double dv = 2.0 * config.value_coef * v_err * inv_b;
    gv2 += dv * tv;
    grad[off.bv2] += dv;
    Vec dav = (dv * params.v2().array()) * (1.0 - tv.array().square());
    gbv1 += dav;
    gv1 += dav * sample.state.transpose();
  }

  stats.loss = stats.policy_loss + config.value_coef * stats.value_loss -
               config.entropy_coef * stats.entropy;
  stats.ratio_clip_frac = static_cast<double>(clipped) / static_cast<double>(batch.size());

  if (!std::isfinite(stats.loss) || !grad.allFinite())
    throw std::runtime_error("ppo_objective: non-finite loss or gradient");
  if (gradient) *gradient = std::move(grad);
  return stats;
}

void update_params(ControllerParams& params, const Vec& gradient, AdamState& state,
                   double learning_rate) {
  if (gradient.size() != params.flat().size())
    throw std::invalid_argument("update_params: gradient size mismatch");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient;
  state.v = state.beta2 * state.v.array() + (1.0 - state.beta2) * gradient.array().square();
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  Vec m_hat = state.m / bc1;
  Vec v_hat = state.v / bc2;
  params.flat().array() -= learning_rate * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
}

std::vector<PpoSample> Trainer::make_batch(
    const std::vector<std::vector<Transition>>& episodes,
    const std::vector<std::vector<Mat>>& skill_embeddings, const TrainingConfig& config) {
  if (episodes.size() != skill_embeddings.size())
    throw std::invalid_argument("make_batch: episodes/embeddings length mismatch");
  std::vector<PpoSample> batch;
  for (size_t e = 0; e < episodes.size(); ++e) {
    const auto& episode = episodes[e];
    if (episode.empty()) continue;
    std::vector<double> rewards, values;
    for (const auto& tr : episode) {
      rewards.push_back(tr.reward);
      values.push_back(tr.selection_step.value);
    }
    auto returns = compute_returns(rewards, config.gamma);
    auto advantages = compute_gae(rewards, values, config.gamma, config.gae_lambda);
    for (size_t t = 0; t < episode.size(); ++t) {
      PpoSample sample;
      sample.state = episode[t].selection_step.state_features;
      sample.skill_embeddings = skill_embeddings[e][t];
      sample.action = episode[t].selection_step.action;
      sample.behavior_log_prob = episode[t].behavior_log_prob;
      sample.advantage = advantages[t];
      sample.ret = returns[t];
      batch.push_back(std::move(sample));
    }
  }
  if (config.normalize_advantages && batch.size() > 1) {
    double mean = 0.0;
    for (const auto& s : batch) mean += s.advantage;
    mean /= static_cast<double>(batch.size());
    double var = 0.0;
    for (const auto& s : batch) var += (s.advantage - mean) * (s.advantage - mean);
    double sd = std::sqrt(var / static_cast<double>(batch.size()));
    for (auto& s : batch) s.advantage = (s.advantage - mean) / (sd + 1e-8);
  }
  return batch;
}

PpoStats Trainer::update(ControllerParams& params,
                         const std::vector<std::vector<Transition>>& episodes,
                         const std::vector<std::vector<Mat>>& skill_embeddings) {
  auto batch = make_batch(episodes, skill_embeddings, config_);
  if (batch.empty()) return {};

  PpoStats last;
  std::vector<int> order(batch.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < config_.epochs_per_batch; ++epoch) {
    // deterministic Fisher-Yates under the trainer seed
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng_.uniform_int(i + 1)]);
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config_.minibatch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(config_.minibatch_size));
      std::vector<PpoSample> mini;
      mini.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) mini.push_back(batch[order[i]]);
      Vec grad;
      last = ppo_objective(mini, params, config_, &grad);
      update_params(params, grad, adam_, config_.learning_rate);
    }
  }
  return last;
}

}  // namespace memskill
