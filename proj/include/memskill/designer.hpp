#pragma once
// Skill evolution: hard-case bookkeeping, representative mining via
// k-means over query embeddings, the two-stage LLM proposal pipeline, and
// stabilized-reward gating with rollback and early stop.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memskill/embedding.hpp"
#include "memskill/executor.hpp"
#include "memskill/skill_bank.hpp"

namespace memskill {

struct HardCase {
  std::string query;
  Vec query_embedding;
  std::string ground_truth;
  std::string prediction;
  std::vector<long> retrieved_ids;
  std::vector<std::string> retrieved_texts;
  double reward = 0.0;       // in [0, 1]
  int failure_count = 1;
  int last_seen_step = 0;
};

inline double difficulty(const HardCase& c) { return (1.0 - c.reward) * c.failure_count; }

struct CaseObservation {
  std::string query;
  Vec query_embedding;
  std::string ground_truth;
  std::string prediction;
  std::vector<long> retrieved_ids;
  std::vector<std::string> retrieved_texts;
  double reward = 0.0;
};

class HardCaseBuffer {
 public:
  HardCaseBuffer(int capacity, int max_age, double fail_threshold = 0.5)
      : capacity_(capacity), max_age_(max_age), fail_threshold_(fail_threshold) {}

  // reward < fail_threshold: upsert keyed by query text, bumping the
  // failure counter on repeats. A success clears any existing entry.
  void record_case(const CaseObservation& obs, int step);

  // Drops cases older than max_age, then evicts lowest-difficulty cases
  // (ties: oldest) until size <= capacity. Returns the evicted queries.
  std::vector<std::string> expire(int current_step);

  int size() const { return static_cast<int>(cases_.size()); }
  bool empty() const { return cases_.empty(); }
  std::vector<HardCase> cases() const;
  void clear() { cases_.clear(); }

  int capacity() const { return capacity_; }
  int max_age() const { return max_age_; }
  double fail_threshold() const { return fail_threshold_; }

 private:
  void evict_to_capacity();
  std::map<std::string, HardCase> cases_;
  int capacity_;
  int max_age_;
  double fail_threshold_;
};

// Lloyd's iterations with k-means++ seeding on query embeddings; empty
// clusters are reseeded from the farthest point. Deterministic under seed.
std::vector<std::vector<HardCase>> cluster_cases(const std::vector<HardCase>& cases, int k,
                                                 uint64_t seed);

// Top per_cluster by difficulty within each cluster (ties: higher failure
// count, then recency), round-robin across clusters, capped at max_total.
std::vector<HardCase> select_representatives(const std::vector<std::vector<HardCase>>& clusters,
                                             int per_cluster, int max_total = 8);

std::string build_analysis_prompt(const SkillBank& bank,
                                  const std::vector<std::string>& evolution_feedback,
                                  const std::vector<HardCase>& cases, int max_changes);
std::string build_refinement_prompt(const std::string& analysis_json, const SkillBank& bank,
                                    const std::vector<std::string>& evolution_feedback,
                                    int max_changes);

struct DesignerConfig {
  int max_changes = 3;
  int cluster_k = 4;       // effective k = min(cluster_k, |cases|)
  int per_cluster = 2;
  int max_representatives = 8;
  uint64_t seed = 0;
  bool strict = false;  // strict: invalid proposals throw instead of degrading
};

struct EvolutionOutcome {
  EvolutionProposal proposal;
  std::string analysis_json;  // raw stage-1 output (empty when skipped)
  std::vector<std::string> warnings;
  int backend_calls = 0;
};

// Parses and validates a refinement-stage JSON document.
EvolutionProposal parse_proposal_json(const std::string& text, const SkillBank& bank,
                                      int max_changes, bool strict,
                                      std::vector<std::string>* warnings);

// Two-stage evolution. Empty buffer short-circuits to no_change without
// backend calls. Malformed JSON is retried once, then degrades to
// no_change. Never mutates the bank.
EvolutionOutcome run_evolution(const SkillBank& bank, const HardCaseBuffer& buffer,
                               LlmBackend& backend, const DesignerConfig& config,
                               const std::vector<std::string>& evolution_feedback, int step);

// Mean of the last ceil(L/4) rewards of an L-step cycle.
double tail_mean_reward(const std::vector<double>& step_rewards, int cycle_len);

struct CycleReport {
  int cycle_index = 0;
  double tail_mean_reward = 0.0;
  int bank_version = 0;
  int snapshot_id = -1;
  bool rolled_back = false;
  bool early_stop = false;
};

// Tracks the best tail reward across cycles and decides rollback / early
// stop with a fixed patience.
class EvolutionGate {
 public:
  explicit EvolutionGate(int patience) : patience_(patience) {}

  struct Decision {
    bool improved = false;
    bool rolled_back = false;
    bool early_stop = false;
    int best_snapshot = -1;
  };

  // Call once per completed cycle with the cycle's tail reward and the id
  // of the snapshot taken for the cycle's bank.
  Decision observe(double tail_reward, int snapshot_id);

  int best_snapshot() const { return best_snapshot_; }
  double best_tail() const { return best_tail_; }

 private:
  int patience_;
  double best_tail_ = -1.0;
  int best_snapshot_ = -1;
  int consecutive_bad_ = 0;
};

}  // namespace memskill
