#pragma once
// The closed training loop: per-episode memory construction with the
// controller and executor, terminal-reward PPO updates, hard-case capture,
// and the per-cycle designer gate with snapshot rollback.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memskill/designer.hpp"
#include "memskill/environment.hpp"
#include "memskill/trainer.hpp"

namespace memskill {

struct RunConfig {
  int k_train = 3;
  int k_eval = 7;  // 5 for trajectory mode, see default_k_eval
  int span_tokens = 512;
  int retrieve_r = 20;
  int evolve_every_steps = 100;
  int max_changes = 3;
  double tau0 = 0.3;
  int t_explore = 50;
  double fail_threshold = 0.5;
  int buffer_capacity = 64;
  int buffer_max_age = 400;
  int patience = 3;
  int batch_episodes = 4;  // PPO batch size in episodes
  int max_cycles = 10;
  int hidden_dim = 64;
  int max_actions_per_span = 32;
  bool designer_enabled = true;
  bool random_selection = false;  // ablation: uniform Top-K instead of the policy
  uint64_t seed = 0;
  TrainingConfig trainer;
  DesignerConfig designer;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline int default_k_eval(const std::string& format) {
  return format == "trajectory" ? 5 : 7;
}

// Aborts unless a default-constructed RunConfig carries the documented
// defaults. Called once at CLI startup; also exercised directly by tests.
void assert_reference_defaults();

struct Backends {
  LlmBackend* executor = nullptr;
  LlmBackend* answerer = nullptr;
  LlmBackend* designer = nullptr;  // may be null when the designer is disabled
};

struct EpisodeLog {
  int episode = 0;
  std::string trace_id;
  double reward = 0.0;
  int bank_version = 0;
  int memory_items = 0;
};

struct EpisodeResult {
  std::vector<Transition> transitions;
  std::vector<Mat> skill_embeddings;  // per step
  double reward = 0.0;
  EvalResult eval;
  MemoryBank memory;
};

class Orchestrator {
 public:
  Orchestrator(RunConfig config, const Embedder& embedder, Backends backends,
               std::vector<Trace> traces);

  // One trace episode: span-by-span memory construction at the given K,
  // then query evaluation. Training side effects (transition logging, hard
  // cases, exploration decay) only when train_mode is set.
  EpisodeResult run_episode(const Trace& trace, int k, bool train_mode);

  // evolve_every_steps episodes, PPO updates per batch, then the gate:
  // snapshot, improve-or-rollback, and (when enabled) one designer pass.
  CycleReport run_cycle();

  // run_cycle until early stop or max_cycles.
  std::vector<CycleReport> train();

  // Read-only: builds memory per trace at K and averages query rewards.
  double evaluate(const std::vector<Trace>& traces, int k);

  const SkillBank& bank() const { return bank_; }
  const ControllerParams& controller() const { return params_; }
  const HardCaseBuffer& buffer() const { return buffer_; }
  const std::vector<EpisodeLog>& episode_logs() const { return episode_logs_; }
  const std::vector<CycleReport>& cycle_reports() const { return cycle_reports_; }
  const std::vector<std::string>& evolution_feedback() const { return evolution_feedback_; }
  int step() const { return step_; }

  void set_bank(SkillBank bank);
  void set_controller(ControllerParams params);

  // Mirrors bank versions, controller checkpoint, and JSONL logs under dir.
  void set_output_dir(const std::filesystem::path& dir);

 private:
  std::vector<int> select_action(const Vec& z, int k);
  void persist_state();

  RunConfig config_;
  const Embedder& embedder_;
  Backends backends_;
  std::vector<Trace> traces_;

  SkillBank bank_;
  Mat skill_u_;  // cached description-embedding matrix for bank_
  ControllerParams params_;
  Trainer trainer_;
  HardCaseBuffer buffer_;
  EvolutionGate gate_;
  SnapshotStore snapshots_;
  Rng rng_;

  std::vector<std::string> new_skill_names_;  // skills added/refined by the last applied proposal
  int steps_since_evolve_ = 0;
  int step_ = 0;
  int cycle_ = 0;
  bool stopped_ = false;

  std::vector<EpisodeLog> episode_logs_;
  std::vector<CycleReport> cycle_reports_;
  std::vector<std::string> evolution_feedback_;
  std::optional<std::filesystem::path> out_dir_;

  void refresh_skill_embeddings();
};

}  // namespace memskill
