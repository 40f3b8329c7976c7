#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "memskill/orchestrator.hpp"

using namespace memskill;

namespace {

const HashEmbedder kEmbedder(32);

struct SyntheticSetup {
  SkillBank bank = init_primitives();
  SyntheticEnv env;
  SyntheticExecutorBackend executor;
  SyntheticAnswerBackend answerer;

  explicit SyntheticSetup(int num_traces = 4)
      : env(make_synthetic(spec(num_traces), bank)), executor(env.keyed_templates) {}

  static SyntheticSpec spec(int num_traces) {
    SyntheticSpec s;
    s.categories = {"c0", "c1"};
    s.skill_keying = {{"c0", "insert"}, {"c1", "update"}};
    s.num_traces = num_traces;
    return s;
  }

  Backends backends() { return {&executor, &answerer, nullptr}; }
};

RunConfig small_config() {
  RunConfig config;
  config.k_train = 2;
  config.evolve_every_steps = 8;
  config.max_cycles = 2;
  config.hidden_dim = 16;
  config.designer_enabled = false;
  config.trainer.seed = 1;
  return config;
}

}  // namespace

TEST_CASE("documented defaults hold") {
  CHECK_NOTHROW(assert_reference_defaults());
  RunConfig c;
  CHECK(c.k_train == 3);
  CHECK(c.k_eval == 7);
  CHECK(default_k_eval("trajectory") == 5);
  CHECK(default_k_eval("conversational") == 7);
  CHECK(c.span_tokens == 512);
  CHECK(c.retrieve_r == 20);
  CHECK(c.evolve_every_steps == 100);
  CHECK(c.max_changes == 3);
  CHECK(c.tau0 == 0.3);
  CHECK(c.t_explore == 50);
  CHECK(c.fail_threshold == 0.5);
  CHECK(c.patience == 3);
}

TEST_CASE("run config JSON round-trip") {
  RunConfig c;
  c.k_train = 2;
  c.seed = 99;
  c.random_selection = true;
  c.trainer.learning_rate = 1e-3;
  c.designer.cluster_k = 2;
  RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.k_train == 2);
  CHECK(back.seed == 99);
  CHECK(back.random_selection);
  CHECK(back.trainer.learning_rate == doctest::Approx(1e-3));
  CHECK(back.designer.cluster_k == 2);
  // untouched fields keep defaults
  CHECK(back.evolve_every_steps == 100);

  SUBCASE("empty object yields pure defaults") {
    RunConfig d = RunConfig::from_json(nlohmann::json::object());
    CHECK(d.to_json() == RunConfig().to_json());
  }
}

TEST_CASE("an episode visits every span and scores every query") {
  SyntheticSetup setup;
  Orchestrator orch(small_config(), kEmbedder, setup.backends(), setup.env.traces);
  EpisodeResult res = orch.run_episode(setup.env.traces[0], 2, true);
  CHECK(res.transitions.size() == setup.env.traces[0].spans.size());
  CHECK(res.skill_embeddings.size() == res.transitions.size());
  CHECK(res.eval.records.size() == setup.env.traces[0].queries.size());
  // terminal-only rewards
  for (size_t t = 0; t + 1 < res.transitions.size(); ++t) {
    CHECK(res.transitions[t].reward == 0.0);
    CHECK_FALSE(res.transitions[t].done);
  }
  CHECK(res.transitions.back().done);
  CHECK(res.transitions.back().reward == doctest::Approx(res.reward));
  for (const auto& tr : res.transitions) CHECK(tr.selection_step.action.size() == 2);
}

TEST_CASE("training runs a full cycle and logs every episode") {
  SyntheticSetup setup;
  RunConfig config = small_config();
  config.max_cycles = 1;
  Orchestrator orch(config, kEmbedder, setup.backends(), setup.env.traces);
  auto reports = orch.train();
  REQUIRE(reports.size() == 1);
  CHECK(orch.step() == config.evolve_every_steps);
  CHECK(orch.episode_logs().size() == static_cast<size_t>(config.evolve_every_steps));
  CHECK(reports[0].cycle_index == 0);
  CHECK(reports[0].tail_mean_reward >= 0.0);
  CHECK(reports[0].tail_mean_reward <= 1.0);
  // traces are visited round-robin
  CHECK(orch.episode_logs()[0].trace_id == "synth_0");
  CHECK(orch.episode_logs()[1].trace_id == "synth_1");
  CHECK(orch.episode_logs()[5].trace_id == "synth_1");
}

TEST_CASE("designer-disabled training never changes the bank version") {
  SyntheticSetup setup;
  Orchestrator orch(small_config(), kEmbedder, setup.backends(), setup.env.traces);
  int v0 = orch.bank().version;
  orch.train();
  CHECK(orch.bank().version == v0);
  CHECK(orch.bank().size() == 4);
}

TEST_CASE("identical seeds reproduce identical runs") {
  auto run = [] {
    SyntheticSetup setup;
    Orchestrator orch(small_config(), kEmbedder, setup.backends(), setup.env.traces);
    orch.train();
    return std::make_pair(orch.controller().flat(), orch.episode_logs());
  };
  auto [params_a, logs_a] = run();
  auto [params_b, logs_b] = run();
  CHECK((params_a - params_b).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(logs_a.size() == logs_b.size());
  for (size_t i = 0; i < logs_a.size(); ++i)
    CHECK(logs_a[i].reward == doctest::Approx(logs_b[i].reward).epsilon(1e-15));
}

TEST_CASE("evaluate is read-only") {
  SyntheticSetup setup;
  Orchestrator orch(small_config(), kEmbedder, setup.backends(), setup.env.traces);
  Vec before = orch.controller().flat();
  int step_before = orch.step();
  double r1 = orch.evaluate(setup.env.traces, 2);
  double r2 = orch.evaluate(setup.env.traces, 2);
  CHECK(r1 == doctest::Approx(r2).epsilon(1e-15));  // deterministic top-K at eval
  CHECK((orch.controller().flat() - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(orch.step() == step_before);
  CHECK(orch.buffer().empty());
  CHECK(r1 >= 0.0);
  CHECK(r1 <= 1.0);
}

TEST_CASE("random-selection ablation skips PPO updates") {
  SyntheticSetup setup;
  RunConfig config = small_config();
  config.random_selection = true;
  config.max_cycles = 1;
  Orchestrator orch(config, kEmbedder, setup.backends(), setup.env.traces);
  Vec before = orch.controller().flat();
  orch.train();
  CHECK((orch.controller().flat() - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("output directory receives bank, controller, and logs") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "memskill_orch_test";
  fs::remove_all(dir);

  SyntheticSetup setup;
  RunConfig config = small_config();
  config.max_cycles = 1;
  Orchestrator orch(config, kEmbedder, setup.backends(), setup.env.traces);
  orch.set_output_dir(dir);
  orch.train();

  CHECK(fs::exists(dir / "controller.json"));
  CHECK(fs::exists(dir / "train_log.jsonl"));
  CHECK(fs::exists(dir / "cycles.jsonl"));
  CHECK(fs::exists(dir / "banks" / ("v" + std::to_string(orch.bank().version) + ".json")));

  // the persisted controller parses back into the live parameters
  std::ifstream in(dir / "controller.json");
  nlohmann::json j;
  in >> j;
  ControllerParams loaded = ControllerParams::from_json(j);
  CHECK((loaded.flat() - orch.controller().flat()).cwiseAbs().maxCoeff() == 0.0);

  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line))
    if (!line.empty()) ++lines;
  CHECK(lines == config.evolve_every_steps);

  fs::remove_all(dir);
}
