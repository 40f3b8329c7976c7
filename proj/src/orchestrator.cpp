#include "memskill/orchestrator.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace memskill {

namespace {

TrainingConfig trainer_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs_per_batch = j.value("epochs_per_batch", c.epochs_per_batch);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json trainer_to_json(const TrainingConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_epsilon", c.clip_epsilon},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"learning_rate", c.learning_rate},
          {"epochs_per_batch", c.epochs_per_batch},
          {"minibatch_size", c.minibatch_size},
          {"normalize_advantages", c.normalize_advantages},
          {"seed", c.seed}};
}

DesignerConfig designer_from_json(const nlohmann::json& j) {
  DesignerConfig c;
  c.max_changes = j.value("max_changes", c.max_changes);
  c.cluster_k = j.value("cluster_k", c.cluster_k);
  c.per_cluster = j.value("per_cluster", c.per_cluster);
  c.max_representatives = j.value("max_representatives", c.max_representatives);
  c.seed = j.value("seed", c.seed);
  c.strict = j.value("strict", c.strict);
  return c;
}

nlohmann::json designer_to_json(const DesignerConfig& c) {
  return {{"max_changes", c.max_changes},
          {"cluster_k", c.cluster_k},
          {"per_cluster", c.per_cluster},
          {"max_representatives", c.max_representatives},
          {"seed", c.seed},
          {"strict", c.strict}};
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.k_train = j.value("k_train", c.k_train);
  c.k_eval = j.value("k_eval", c.k_eval);
  c.span_tokens = j.value("span_tokens", c.span_tokens);
  c.retrieve_r = j.value("retrieve_r", c.retrieve_r);
  c.evolve_every_steps = j.value("evolve_every_steps", c.evolve_every_steps);
  c.max_changes = j.value("max_changes", c.max_changes);
  c.tau0 = j.value("tau0", c.tau0);
  c.t_explore = j.value("t_explore", c.t_explore);
  c.fail_threshold = j.value("fail_threshold", c.fail_threshold);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.buffer_max_age = j.value("buffer_max_age", c.buffer_max_age);
  c.patience = j.value("patience", c.patience);
  c.batch_episodes = j.value("batch_episodes", c.batch_episodes);
  c.max_cycles = j.value("max_cycles", c.max_cycles);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.max_actions_per_span = j.value("max_actions_per_span", c.max_actions_per_span);
  c.designer_enabled = j.value("designer_enabled", c.designer_enabled);
  c.random_selection = j.value("random_selection", c.random_selection);
  c.seed = j.value("seed", c.seed);
  if (j.contains("trainer")) c.trainer = trainer_from_json(j.at("trainer"));
  if (j.contains("designer")) c.designer = designer_from_json(j.at("designer"));
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"k_train", k_train},
          {"k_eval", k_eval},
          {"span_tokens", span_tokens},
          {"retrieve_r", retrieve_r},
          {"evolve_every_steps", evolve_every_steps},
          {"max_changes", max_changes},
          {"tau0", tau0},
          {"t_explore", t_explore},
          {"fail_threshold", fail_threshold},
          {"buffer_capacity", buffer_capacity},
          {"buffer_max_age", buffer_max_age},
          {"patience", patience},
          {"batch_episodes", batch_episodes},
          {"max_cycles", max_cycles},
          {"hidden_dim", hidden_dim},
          {"max_actions_per_span", max_actions_per_span},
          {"designer_enabled", designer_enabled},
          {"random_selection", random_selection},
          {"seed", seed},
          {"trainer", trainer_to_json(trainer)},
          {"designer", designer_to_json(designer)}};
}

void assert_reference_defaults() {
  RunConfig c;
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::logic_error(std::string("default regression: ") + what);
  };
  check(c.k_train == 3, "K_train must default to 3");
  check(c.k_eval == 7, "K_eval must default to 7");
  check(default_k_eval("trajectory") == 5, "trajectory K_eval must be 5");
  check(default_k_eval("conversational") == 7, "conversational K_eval must be 7");
  check(c.span_tokens == 512, "span_tokens must default to 512");
  check(c.retrieve_r == 20, "retrieve_R must default to 20");
  check(c.evolve_every_steps == 100, "evolve_every_steps must default to 100");
  check(c.max_changes == 3, "max_changes must default to 3");
  check(c.tau0 == 0.3, "tau0 must default to 0.3");
  check(c.t_explore == 50, "T_explore must default to 50");
  check(c.fail_threshold == 0.5, "fail_threshold must default to 0.5");
  check(c.patience == 3, "patience must default to 3");
}

Orchestrator::Orchestrator(RunConfig config, const Embedder& embedder, Backends backends,
                           std::vector<Trace> traces)
    : config_(config),
      embedder_(embedder),
      backends_(backends),
      traces_(std::move(traces)),
      bank_(init_primitives()),
      params_(2 * embedder.dim(), config.hidden_dim, embedder.dim()),
      trainer_(params_, config.trainer),
      buffer_(config.buffer_capacity, config.buffer_max_age, config.fail_threshold),
      gate_(config.patience),
      rng_(config.seed) {
  if (!backends_.executor || !backends_.answerer)
    throw std::invalid_argument("orchestrator: executor and answerer backends are required");
  config_.designer.max_changes = config_.max_changes;
  Rng init_rng(config_.seed + 1);
  params_ = ControllerParams::init(2 * embedder.dim(), config_.hidden_dim, embedder.dim(),
                                   init_rng);
  refresh_skill_embeddings();
}

void Orchestrator::refresh_skill_embeddings() {
  skill_u_ = skill_embedding_matrix(bank_, embedder_);
}

void Orchestrator::set_bank(SkillBank bank) {
  bank_ = std::move(bank);
  refresh_skill_embeddings();
  new_skill_names_.clear();
}

void Orchestrator::set_controller(ControllerParams params) {
  if (params.state_dim() != params_.state_dim() || params.embed_dim() != params_.embed_dim())
    throw std::invalid_argument("set_controller: dimension mismatch");
  params_ = std::move(params);
}

void Orchestrator::set_output_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "banks");
  out_dir_ = dir;
}

std::vector<int> Orchestrator::select_action(const Vec& z, int k) {
  // deterministic Top-K for evaluation; ties broken by lower index
  std::vector<int> idx(z.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int a, int b) { return z[a] != z[b] ? z[a] > z[b] : a < b; });
  idx.resize(k);
  return idx;
}

EpisodeResult Orchestrator::run_episode(const Trace& trace, int k, bool train_mode) {
  if (trace.spans.empty()) throw std::invalid_argument("run_episode: trace has no spans");
  if (k > bank_.size())
    throw std::invalid_argument("run_episode: K exceeds skill bank size");

  EpisodeResult res;
  MemoryBank memory;
  CompletionParams llm_params;

  for (const auto& span : trace.spans) {
    RetrievedSet retrieved = memory.retrieve(embedder_.embed(span.text), config_.retrieve_r);
    StateEncoding enc = encode_state(span.text, retrieved, embedder_, params_);
    Vec z = score_skills(enc.h, skill_u_);

    Vec behavior_logits;
    std::vector<int> action;
    if (config_.random_selection) {
      behavior_logits = Vec::Zero(bank_.size());
      action = sample_topk(behavior_logits, k, rng_);
    } else if (train_mode) {
      behavior_logits = z;
      if (!new_skill_names_.empty()) {
        double tau =
            exploration_threshold(steps_since_evolve_, config_.tau0, config_.t_explore);
        if (tau > 0.0) {
          std::vector<int> positions;
          for (const auto& name : new_skill_names_) {
            int i = bank_.index_of(name);
            if (i >= 0) positions.push_back(i);
          }
          if (!positions.empty()) behavior_logits = apply_new_skill_bias(z, positions, tau);
        }
      }
      action = sample_topk(behavior_logits, k, rng_);
    } else {
      behavior_logits = z;
      action = select_action(z, k);
    }
    Vec probs = softmax(behavior_logits);

    std::vector<Skill> selected;
    for (int i : action) selected.push_back(bank_.skills[i]);
    execute_span(span.text, memory, retrieved, selected, *backends_.executor, embedder_,
                 llm_params, span.index, config_.max_actions_per_span);

    SelectionStep st;
    st.state_features = enc.state_features;
    st.h = enc.h;
    st.logits = z;
    st.probs = probs;
    st.action = action;
    st.joint_lp = joint_log_prob(probs, action);
    st.value = enc.value;
    st.skill_bank_version = bank_.version;

    Transition tr;
    tr.selection_step = std::move(st);
    tr.behavior_log_prob = tr.selection_step.joint_lp;
    res.transitions.push_back(std::move(tr));
    res.skill_embeddings.push_back(skill_u_);
  }

  res.eval = evaluate_memory(memory, trace.queries, *backends_.answerer, embedder_,
                             config_.retrieve_r);
  res.reward = res.eval.mean_reward;
  res.transitions.back().reward = res.reward;  // terminal-only reward
  res.transitions.back().done = true;

  if (train_mode) {
    for (const auto& rec : res.eval.records) {
      CaseObservation obs;
      obs.query = rec.query_text;
      obs.query_embedding = embedder_.embed(rec.query_text);
      obs.ground_truth = rec.ground_truth;
      obs.prediction = rec.prediction;
      obs.retrieved_ids = rec.retrieved_ids;
      obs.retrieved_texts = rec.retrieved_texts;
      obs.reward = rec.reward;
      buffer_.record_case(obs, step_);
    }
  }

  res.memory = std::move(memory);
  return res;
}

CycleReport Orchestrator::run_cycle() {
  if (stopped_) throw std::logic_error("run_cycle called after early stop");
  if (traces_.empty()) throw std::logic_error("run_cycle: no training traces");

  std::vector<double> step_rewards;
  std::vector<std::vector<Transition>> episodes;
  std::vector<std::vector<Mat>> episode_embeddings;

  auto flush_batch = [&] {
    if (episodes.empty() || config_.random_selection) {
      episodes.clear();
      episode_embeddings.clear();
      return;
    }
    trainer_.update(params_, episodes, episode_embeddings);
    episodes.clear();
    episode_embeddings.clear();
  };

  for (int i = 0; i < config_.evolve_every_steps; ++i) {
    const Trace& trace = traces_[step_ % static_cast<int>(traces_.size())];
    EpisodeResult res = run_episode(trace, config_.k_train, true);
    step_rewards.push_back(res.reward);
    episode_logs_.push_back({step_, trace.trace_id, res.reward, bank_.version,
                             res.memory.size()});
    episodes.push_back(std::move(res.transitions));
    episode_embeddings.push_back(std::move(res.skill_embeddings));
    ++step_;
    ++steps_since_evolve_;
    if (static_cast<int>(episodes.size()) >= config_.batch_episodes) flush_batch();
  }
  flush_batch();
  buffer_.expire(step_);

  double tail = tail_mean_reward(step_rewards, config_.evolve_every_steps);
  int snap = snapshots_.snapshot(bank_);
  EvolutionGate::Decision decision = gate_.observe(tail, snap);

  CycleReport report;
  report.cycle_index = cycle_;
  report.tail_mean_reward = tail;
  report.bank_version = bank_.version;
  report.snapshot_id = snap;
  report.rolled_back = decision.rolled_back;
  report.early_stop = decision.early_stop;

  if (decision.rolled_back) {
    bank_ = snapshots_.restore(decision.best_snapshot);
    refresh_skill_embeddings();
    new_skill_names_.clear();
  }

  if (decision.early_stop) {
    stopped_ = true;
  } else if (config_.designer_enabled && backends_.designer) {
    EvolutionOutcome outcome = run_evolution(bank_, buffer_, *backends_.designer,
                                             config_.designer, evolution_feedback_, step_);
    if (outcome.proposal.action == EvolutionProposal::Action::ApplyChanges) {
      bank_ = apply_proposal(bank_, outcome.proposal, cycle_, step_);
      refresh_skill_embeddings();
      new_skill_names_.clear();
      std::ostringstream summary;
      summary << "cycle " << cycle_ << ": ";
      for (size_t i = 0; i < outcome.proposal.changes.size(); ++i) {
        if (i > 0) summary << ", ";
        if (const auto* add = std::get_if<AddChange>(&outcome.proposal.changes[i])) {
          summary << "added " << add->name;
          new_skill_names_.push_back(add->name);
        } else {
          const auto& refine = std::get<RefineChange>(outcome.proposal.changes[i]);
          summary << "refined " << refine.name;
          new_skill_names_.push_back(refine.name);
        }
      }
      steps_since_evolve_ = 0;
      evolution_feedback_.push_back(summary.str());
    } else {
      evolution_feedback_.push_back("cycle " + std::to_string(cycle_) + ": no change");
    }
  }

  ++cycle_;
  cycle_reports_.push_back(report);
  persist_state();
  return report;
}

std::vector<CycleReport> Orchestrator::train() {
  while (!stopped_ && cycle_ < config_.max_cycles) run_cycle();
  persist_state();
  return cycle_reports_;
}

double Orchestrator::evaluate(const std::vector<Trace>& traces, int k) {
  if (traces.empty()) throw std::invalid_argument("evaluate: no traces");
  double total = 0.0;
  for (const auto& trace : traces) total += run_episode(trace, k, false).reward;
  return total / static_cast<double>(traces.size());
}

void Orchestrator::persist_state() {
  if (!out_dir_) return;
  const auto& dir = *out_dir_;

  std::ofstream bank_out(dir / "banks" / ("v" + std::to_string(bank_.version) + ".json"));
  bank_out << serialize_bank(bank_) << "\n";

  std::ofstream ctrl(dir / "controller.json");
  ctrl << params_.to_json().dump(2) << "\n";

  std::ofstream train_log(dir / "train_log.jsonl");
  for (const auto& e : episode_logs_) {
    nlohmann::json j{{"episode", e.episode},
                     {"trace_id", e.trace_id},
                     {"reward", e.reward},
                     {"bank_version", e.bank_version},
                     {"memory_items", e.memory_items}};
    train_log << j.dump() << "\n";
  }

  std::ofstream cycles(dir / "cycles.jsonl");
  for (const auto& r : cycle_reports_) {
    nlohmann::json j{{"cycle", r.cycle_index},
                     {"tail_mean_reward", r.tail_mean_reward},
                     {"bank_version", r.bank_version},
                     {"snapshot_id", r.snapshot_id},
                     {"rolled_back", r.rolled_back},
                     {"early_stop", r.early_stop}};
    cycles << j.dump() << "\n";
  }
}

}  // namespace memskill
