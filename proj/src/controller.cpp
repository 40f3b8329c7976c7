#include "memskill/controller.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace memskill {

std::string Rng::state_string() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state_string(const std::string& s) {
  std::istringstream in(s);
  in >> engine_;
  if (in.fail()) throw std::invalid_argument("bad RNG state string");
}

ControllerParams::ControllerParams(int state_dim, int hidden_dim, int embed_dim)
    : state_dim_(state_dim), hidden_dim_(hidden_dim), embed_dim_(embed_dim) {
  flat_ = Vec::Zero(ParamLayout(state_dim, hidden_dim, embed_dim).total);
}

ControllerParams ControllerParams::init(int state_dim, int hidden_dim, int embed_dim, Rng& rng) {
  ControllerParams p(state_dim, hidden_dim, embed_dim);
  ParamLayout off(state_dim, hidden_dim, embed_dim);
  auto fill = [&](int begin, int count, int fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < count; ++i) p.flat_[begin + i] = rng.uniform(-bound, bound);
  };
  fill(off.w1, hidden_dim * state_dim, state_dim);
  fill(off.w2, embed_dim * hidden_dim, hidden_dim);
  fill(off.v1, hidden_dim * state_dim, state_dim);
  fill(off.v2, hidden_dim, hidden_dim);
  // biases stay zero
  return p;
}

Eigen::Map<const Mat> ControllerParams::w1() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.w1, hidden_dim_, state_dim_};
}
Eigen::Map<const Vec> ControllerParams::b1() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.b1, hidden_dim_};
}
Eigen::Map<const Mat> ControllerParams::w2() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.w2, embed_dim_, hidden_dim_};
}
Eigen::Map<const Vec> ControllerParams::b2() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.b2, embed_dim_};
}
Eigen::Map<const Mat> ControllerParams::v1() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.v1, hidden_dim_, state_dim_};
}
Eigen::Map<const Vec> ControllerParams::bv1() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.bv1, hidden_dim_};
}
Eigen::Map<const Vec> ControllerParams::v2() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return {flat_.data() + off.v2, hidden_dim_};
}
double ControllerParams::bv2() const {
  ParamLayout off(state_dim_, hidden_dim_, embed_dim_);
  return flat_[off.bv2];
}

Vec ControllerParams::policy_forward(const Vec& state) const {
  Vec t1 = (w1() * state + b1()).array().tanh();
  return w2() * t1 + b2();
}

double ControllerParams::value_forward(const Vec& state) const {
  Vec tv = (v1() * state + bv1()).array().tanh();
  return v2().dot(tv) + bv2();
}

nlohmann::json ControllerParams::to_json() const {
  nlohmann::json j;
  j["state_dim"] = state_dim_;
  j["hidden_dim"] = hidden_dim_;
  j["embed_dim"] = embed_dim_;
  j["flat"] = std::vector<double>(flat_.data(), flat_.data() + flat_.size());
  return j;
}

ControllerParams ControllerParams::from_json(const nlohmann::json& j) {
  ControllerParams p(j.at("state_dim").get<int>(), j.at("hidden_dim").get<int>(),
                     j.at("embed_dim").get<int>());
  const auto& flat = j.at("flat");
  if (static_cast<int>(flat.size()) != p.count())
    throw std::invalid_argument("controller checkpoint: parameter count mismatch");
  for (int i = 0; i < p.count(); ++i) p.flat_[i] = flat[i].get<double>();
  return p;
}

StateEncoding encode_state(const std::string& span_text, const RetrievedSet& retrieved,
                           const Embedder& embedder, const ControllerParams& params) {
  int d = embedder.dim();
  Vec span_emb = embedder.embed(span_text);
  Vec mem_emb = Vec::Zero(d);
  if (!retrieved.empty()) {
    for (const auto& e : retrieved.items) mem_emb += e.embedding;
    mem_emb /= static_cast<double>(retrieved.size());
  }
  StateEncoding enc;
  enc.state_features = Vec(2 * d);
  enc.state_features << span_emb, mem_emb;
  enc.h = params.policy_forward(enc.state_features);
  enc.value = params.value_forward(enc.state_features);
  return enc;
}

Mat skill_embedding_matrix(const SkillBank& bank, const Embedder& embedder) {
  Mat u(bank.size(), embedder.dim());
  for (int i = 0; i < bank.size(); ++i)
    u.row(i) = normalized(embedder.embed(bank.skills[i].description)).transpose();
  return u;
}

Vec score_skills(const Vec& h, const Mat& skill_embeddings) {
  if (skill_embeddings.rows() == 0) throw std::invalid_argument("score_skills: empty bank");
  return skill_embeddings * h;
}

Vec softmax(const Vec& z) {
  double m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  return e / e.sum();
}

std::vector<int> sample_topk(const Vec& z, int k, Rng& rng) {
  int n = static_cast<int>(z.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("sample_topk: K=" + std::to_string(k) + " out of range for N=" +
                                std::to_string(n));
  std::vector<std::pair<double, int>> perturbed(n);
  for (int i = 0; i < n; ++i) perturbed[i] = {z[i] + rng.gumbel(), i};
  std::partial_sort(perturbed.begin(), perturbed.begin() + k, perturbed.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> action(k);
  for (int i = 0; i < k; ++i) action[i] = perturbed[i].second;
  return action;
}

double joint_log_prob(const Vec& probs, const std::vector<int>& action) {
  double lp = 0.0;
  double taken = 0.0;
  for (int a : action) {
    if (a < 0 || a >= static_cast<int>(probs.size()))
      throw std::invalid_argument("joint_log_prob: action index out of range");
    double p = probs[a];
    if (p <= 0.0) throw std::domain_error("joint_log_prob: action has zero probability");
    lp += std::log(p) - std::log1p(-taken);
    taken += p;
  }
  return lp;
}

double exploration_threshold(int steps_since_evolve, double tau0, int t_explore) {
  if (steps_since_evolve < 0) throw std::invalid_argument("exploration_threshold: t < 0");
  if (steps_since_evolve >= t_explore) return 0.0;
  return tau0 * (1.0 - static_cast<double>(steps_since_evolve) / t_explore);
}

Vec apply_new_skill_bias(const Vec& z, const std::vector<int>& new_positions, double tau) {
  if (tau >= 1.0) throw std::invalid_argument("apply_new_skill_bias: tau must be < 1");
  if (tau <= 0.0) return z;
  if (new_positions.empty())
    throw std::invalid_argument("apply_new_skill_bias: no new positions with tau > 0");

  std::vector<bool> is_new(z.size(), false);
  for (int i : new_positions) is_new[i] = true;

  double m = z.maxCoeff();
  double s_new = 0.0, s_old = 0.0;
  for (int i = 0; i < static_cast<int>(z.size()); ++i)
    (is_new[i] ? s_new : s_old) += std::exp(z[i] - m);
  if (s_new / (s_new + s_old) >= tau) return z;

  double delta = std::log(tau * s_old / ((1.0 - tau) * s_new));
  Vec out = z;
  for (int i : new_positions) out[i] += delta;
  return out;
}

}  // namespace memskill
