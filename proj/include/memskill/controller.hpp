#pragma once
// Skill-selection policy: state encoding, embedding-space skill scoring,
// Gumbel-Top-K sampling, joint ordered-subset log-probabilities, and the
// post-evolution new-skill exploration bias.

#include <random>
#include <vector>

#include "memskill/embedding.hpp"
#include "memskill/memory_bank.hpp"
#include "memskill/skill_bank.hpp"

namespace memskill {

using Mat = Eigen::MatrixXd;

// Deterministic RNG with a platform-independent uniform mapping.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  uint64_t next_u64() { return engine_(); }
  // uniform in (0, 1)
  double uniform01() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<uint64_t>(n)); }
  double gumbel() { return -std::log(-std::log(uniform01())); }

  std::string state_string() const;
  void set_state_string(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

// Offsets of each tensor inside the flat parameter vector.
// Layout: w1 (H x S), b1 (H), w2 (D x H), b2 (D), v1 (H x S), bv1 (H),
//         v2 (H), bv2 (1)
struct ParamLayout {
  int w1, b1, w2, b2, v1, bv1, v2, bv2, total;
  ParamLayout(int s, int h, int d) {
    w1 = 0;
    b1 = w1 + h * s;
    w2 = b1 + h;
    b2 = w2 + d * h;
    v1 = b2 + d;
    bv1 = v1 + h * s;
    v2 = bv1 + h;
    bv2 = v2 + h;
    total = bv2 + 1;
  }
};

// Two-layer policy head (2D -> H -> D) and two-layer value head
// (2D -> H -> 1), tanh activations, stored as one flat parameter vector so
// the optimizer and finite-difference checks work elementwise.
class ControllerParams {
 public:
  ControllerParams(int state_dim, int hidden_dim, int embed_dim);

  static ControllerParams init(int state_dim, int hidden_dim, int embed_dim, Rng& rng);

  ParamLayout layout() const { return {state_dim_, hidden_dim_, embed_dim_}; }
  int state_dim() const { return state_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int embed_dim() const { return embed_dim_; }

  Vec& flat() { return flat_; }
  const Vec& flat() const { return flat_; }
  int count() const { return static_cast<int>(flat_.size()); }

  // Policy head output h and value estimate for a state feature vector.
  Vec policy_forward(const Vec& state) const;
  double value_forward(const Vec& state) const;

  // Parameter slices (maps into the flat vector).
  Eigen::Map<const Mat> w1() const;
  Eigen::Map<const Vec> b1() const;
  Eigen::Map<const Mat> w2() const;
  Eigen::Map<const Vec> b2() const;
  Eigen::Map<const Mat> v1() const;
  Eigen::Map<const Vec> bv1() const;
  Eigen::Map<const Vec> v2() const;
  double bv2() const;

  nlohmann::json to_json() const;
  static ControllerParams from_json(const nlohmann::json& j);

 private:
  int state_dim_, hidden_dim_, embed_dim_;
  Vec flat_;
};

struct StateEncoding {
  Vec state_features;  // concat(span embedding, mean retrieved embedding)
  Vec h;
  double value = 0.0;
};

// state_features = [embed(span); mean of retrieved embeddings or zero].
StateEncoding encode_state(const std::string& span_text, const RetrievedSet& retrieved,
                           const Embedder& embedder, const ControllerParams& params);

// Rows of the returned matrix are the normalized skill-description
// embeddings u_i, in bank order.
Mat skill_embedding_matrix(const SkillBank& bank, const Embedder& embedder);

// z_i = dot(h, u_i)
Vec score_skills(const Vec& h, const Mat& skill_embeddings);

Vec softmax(const Vec& z);

// Ordered indices of the K largest z_i + Gumbel noise. Throws if K > len(z).
std::vector<int> sample_topk(const Vec& z, int k, Rng& rng);

// log prod_j p(a_j) / (1 - sum_{l<j} p(a_l)); throws if any p(a_j) == 0.
double joint_log_prob(const Vec& probs, const std::vector<int>& action);

// Linear decay tau0 * (1 - t/T_explore), 0 past the window.
double exploration_threshold(int steps_since_evolve, double tau0, int t_explore);

// Adds the minimal uniform logit gain to new-skill positions so their
// softmax mass reaches tau; returns z unchanged when mass already >= tau.
Vec apply_new_skill_bias(const Vec& z, const std::vector<int>& new_positions, double tau);

// Full controller decision record for one span.
struct SelectionStep {
  Vec state_features;
  Vec h;
  Vec logits;           // unbiased z
  Vec probs;            // softmax of the behavior logits (bias included)
  std::vector<int> action;
  double joint_lp = 0.0;  // under the behavior distribution
  double value = 0.0;
  int skill_bank_version = 0;
};

}  // namespace memskill
