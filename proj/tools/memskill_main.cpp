#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "memskill/orchestrator.hpp"

namespace {

using namespace memskill;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("config", "cannot open file: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

struct Session {
  RunConfig config;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<LlmBackend> executor;
  std::unique_ptr<LlmBackend> answerer;
  std::unique_ptr<LlmBackend> designer;
  std::vector<Trace> traces;
  std::vector<Trace> eval_traces;
};

std::unique_ptr<LlmBackend> make_http_backend(const nlohmann::json& j) {
  ChatEndpointConfig c;
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.path = j.value("path", c.path);
  c.model = j.value("model", c.model);
  if (const char* key = std::getenv("MEMSKILL_API_KEY")) c.api_key = key;
  return std::make_unique<HttpChatBackend>(c);
}

std::unique_ptr<LlmBackend> make_backend(const nlohmann::json& j) {
  std::string kind = j.value("kind", "http");
  if (kind == "http") return make_http_backend(j);
  if (kind == "scripted")
    return std::make_unique<ScriptedBackend>(
        ScriptedBackend::from_json_file(j.at("rules").get<std::string>()));
  throw CLI::ValidationError("backends", "unknown backend kind: " + kind);
}

// Config layout: run settings at top level, plus
//   "embedder": {"kind": "hash", "dim": 64} (or "remote" with endpoint fields),
//   "backends": {"executor": {...}, "answerer": {...}, "designer": {...}},
//   "synthetic": {...}  — builds the offline environment, scripted backends
//   "traces" / "eval_traces": [{"path": ..., "format": ...}]
Session load_session(const std::string& config_path) {
  nlohmann::json j = load_json_file(config_path);
  Session s;
  s.config = RunConfig::from_json(j);

  nlohmann::json je = j.value("embedder", nlohmann::json{{"kind", "hash"}});
  if (je.value("kind", "hash") == "hash") {
    s.embedder = std::make_unique<HashEmbedder>(je.value("dim", 64));
  } else {
    EmbedEndpointConfig ec;
    ec.host = je.value("host", ec.host);
    ec.port = je.value("port", ec.port);
    ec.path = je.value("path", ec.path);
    ec.model = je.value("model", ec.model);
    if (const char* key = std::getenv("MEMSKILL_API_KEY")) ec.api_key = key;
    s.embedder = std::make_unique<RemoteEmbedder>(ec);
  }

  if (j.contains("synthetic")) {
    const auto& js = j.at("synthetic");
    SyntheticSpec spec;
    for (const auto& c : js.at("categories")) spec.categories.push_back(c.get<std::string>());
    spec.spans_per_trace = js.value("spans_per_trace", spec.spans_per_trace);
    spec.facts_per_span = js.value("facts_per_span", spec.facts_per_span);
    spec.num_traces = js.value("num_traces", spec.num_traces);
    spec.seed = js.value("seed", s.config.seed);
    if (js.contains("skill_keying"))
      for (const auto& [cat, skill] : js.at("skill_keying").items())
        spec.skill_keying[cat] = skill.get<std::string>();
    SyntheticEnv env = make_synthetic(spec, init_primitives());
    s.traces = env.traces;
    s.eval_traces = env.traces;
    s.executor = std::make_unique<SyntheticExecutorBackend>(env.keyed_templates);
    s.answerer = std::make_unique<SyntheticAnswerBackend>();
  }

  if (j.contains("backends")) {
    const auto& jb = j.at("backends");
    if (jb.contains("executor")) s.executor = make_backend(jb.at("executor"));
    if (jb.contains("answerer")) s.answerer = make_backend(jb.at("answerer"));
    if (jb.contains("designer")) s.designer = make_backend(jb.at("designer"));
  }
  if (!s.executor || !s.answerer)
    throw CLI::ValidationError("config", "executor and answerer backends are required");

  auto load_traces = [&](const char* key, std::vector<Trace>& out) {
    if (!j.contains(key)) return;
    for (const auto& jt : j.at(key))
      out.push_back(load_trace_json(jt.at("path").get<std::string>(),
                                    jt.value("format", "conversational"),
                                    s.config.span_tokens));
  };
  load_traces("traces", s.traces);
  load_traces("eval_traces", s.eval_traces);
  return s;
}

SkillBank load_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("bank", "cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_bank(text);
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<uint64_t> seed, std::optional<int> max_cycles, bool no_designer,
              bool random_selection) {
  Session s = load_session(config_path);
  if (seed) s.config.seed = *seed;
  if (max_cycles) s.config.max_cycles = *max_cycles;
  if (no_designer) s.config.designer_enabled = false;
  if (random_selection) s.config.random_selection = true;

  Orchestrator orch(s.config, *s.embedder,
                    {s.executor.get(), s.answerer.get(), s.designer.get()},
                    std::move(s.traces));
  if (!out_dir.empty()) orch.set_output_dir(out_dir);

  auto reports = orch.train();
  for (const auto& r : reports)
    std::cout << "cycle " << r.cycle_index << " tail_reward " << r.tail_mean_reward
              << " bank v" << r.bank_version << (r.rolled_back ? " (rolled back)" : "")
              << (r.early_stop ? " (early stop)" : "") << "\n";
  std::cout << "final bank version " << orch.bank().version << ", " << orch.bank().size()
            << " skills\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& bank_path,
             const std::string& controller_path, std::optional<int> k) {
  Session s = load_session(config_path);
  Orchestrator orch(s.config, *s.embedder,
                    {s.executor.get(), s.answerer.get(), s.designer.get()},
                    std::move(s.traces));
  if (!bank_path.empty()) orch.set_bank(load_bank(bank_path));
  if (!controller_path.empty())
    orch.set_controller(ControllerParams::from_json(load_json_file(controller_path)));

  const auto& traces = s.eval_traces;
  if (traces.empty()) throw CLI::ValidationError("config", "no eval traces configured");
  double reward = orch.evaluate(traces, k.value_or(s.config.k_eval));
  nlohmann::json out{{"mean_reward", reward},
                     {"num_traces", traces.size()},
                     {"k", k.value_or(s.config.k_eval)},
                     {"bank_version", orch.bank().version}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_skills_list(const std::string& bank_path) {
  SkillBank bank = load_bank(bank_path);
  std::cout << "bank v" << bank.version << " (" << bank.size() << " skills)\n";
  for (const auto& s : bank.skills)
    std::cout << "  " << s.name << " [" << to_string(s.update_type) << "] " << s.description
              << "\n";
  return 0;
}

int cmd_skills_show(const std::string& bank_path, const std::string& name) {
  SkillBank bank = load_bank(bank_path);
  const Skill* s = bank.find(name);
  if (!s) throw std::runtime_error("no skill named '" + name + "' in " + bank_path);
  std::cout << "name: " << s->name << "\nupdate_type: " << to_string(s->update_type)
            << "\ndescription: " << s->description << "\n\n"
            << s->instruction_template << "\n";
  return 0;
}

int cmd_skills_diff(const std::string& path_a, const std::string& path_b) {
  SkillBank a = load_bank(path_a), b = load_bank(path_b);
  std::cout << "v" << a.version << " -> v" << b.version << "\n";
  for (const auto& s : b.skills) {
    const Skill* old = a.find(s.name);
    if (!old)
      std::cout << "added: " << s.name << "\n";
    else if (old->description != s.description ||
             old->instruction_template != s.instruction_template)
      std::cout << "refined: " << s.name << "\n";
  }
  for (const auto& s : a.skills)
    if (!b.find(s.name)) std::cout << "removed: " << s.name << "\n";
  return 0;
}

int cmd_replay(const std::string& config_path, const std::string& trace_path,
               const std::string& format, const std::string& bank_path) {
  Session s = load_session(config_path);
  Orchestrator orch(s.config, *s.embedder,
                    {s.executor.get(), s.answerer.get(), s.designer.get()},
                    std::move(s.traces));
  if (!bank_path.empty()) orch.set_bank(load_bank(bank_path));

  Trace trace = trace_path.empty()
                    ? (s.eval_traces.empty() ? throw CLI::ValidationError("trace", "no trace")
                                             : s.eval_traces.front())
                    : load_trace_json(trace_path, format, s.config.span_tokens);
  EpisodeResult res = orch.run_episode(trace, s.config.k_eval, false);
  for (size_t t = 0; t < res.transitions.size(); ++t) {
    const auto& st = res.transitions[t].selection_step;
    std::cout << "span " << t << " skills:";
    for (int i : st.action) std::cout << " " << orch.bank().skills[i].name;
    std::cout << "\n";
  }
  std::cout << "memory items: " << res.memory.size() << "\nreward: " << res.reward << "\n";
  return 0;
}

int cmd_synth_demo(uint64_t seed) {
  SyntheticSpec spec;
  spec.categories = {"c0", "c1"};
  spec.skill_keying = {{"c0", "insert"}, {"c1", "update"}};
  spec.num_traces = 2;
  spec.seed = seed;
  SkillBank bank = init_primitives();
  SyntheticEnv env = make_synthetic(spec, bank);

  SyntheticExecutorBackend executor(env.keyed_templates);
  SyntheticAnswerBackend answerer;
  RunConfig config;
  config.retrieve_r = 5;
  config.hidden_dim = 16;
  config.seed = seed;
  HashEmbedder embedder(32);
  Orchestrator orch(config, embedder, {&executor, &answerer, nullptr}, env.traces);
  for (const auto& trace : env.traces) {
    EpisodeResult res = orch.run_episode(trace, 2, false);
    std::cout << trace.trace_id << ": reward " << res.reward << ", memory "
              << res.memory.size() << " items\n";
  }
  return 0;
}

int cmd_report(const std::string& dir) {
  std::ifstream in(dir + "/cycles.jsonl");
  if (!in) throw CLI::ValidationError("dir", "no cycles.jsonl under " + dir);
  std::cout << "cycle  tail_reward  bank  rolled_back  early_stop\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    std::cout << j["cycle"].get<int>() << "      " << j["tail_mean_reward"].get<double>()
              << "     v" << j["bank_version"].get<int>() << "    "
              << (j["rolled_back"].get<bool>() ? "yes" : "no") << "          "
              << (j["early_stop"].get<bool>() ? "yes" : "no") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memskill: self-evolving agent memory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, bank_path, bank_path_b, controller_path, skill_name;
  std::string trace_path, trace_format = "conversational", report_dir;
  std::optional<uint64_t> seed;
  std::optional<int> max_cycles, k;
  uint64_t demo_seed = 0;
  bool no_designer = false, random_selection = false;

  auto* train = app.add_subcommand("train", "run training cycles");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--seed", seed, "override seed");
  train->add_option("--max-cycles", max_cycles, "override max cycles");
  train->add_flag("--no-designer", no_designer, "disable skill evolution");
  train->add_flag("--random-selection", random_selection, "uniform-random skill ablation");

  auto* eval = app.add_subcommand("eval", "evaluate a bank on held-out traces");
  eval->add_option("--config", config_path, "run config JSON")->required();
  eval->add_option("--bank", bank_path, "skill bank JSON")->required();
  eval->add_option("--controller", controller_path, "controller checkpoint JSON");
  eval->add_option("--k", k, "skills per span");

  auto* skills = app.add_subcommand("skills", "inspect skill banks");
  skills->require_subcommand(1);
  auto* slist = skills->add_subcommand("list", "list skills");
  slist->add_option("--bank", bank_path, "skill bank JSON")->required();
  auto* sshow = skills->add_subcommand("show", "show one skill");
  sshow->add_option("--bank", bank_path, "skill bank JSON")->required();
  sshow->add_option("--name", skill_name, "skill name")->required();
  auto* sdiff = skills->add_subcommand("diff", "diff two banks");
  sdiff->add_option("--bank", bank_path, "older bank")->required();
  sdiff->add_option("--bank-b", bank_path_b, "newer bank")->required();

  auto* replay = app.add_subcommand("replay", "span-by-span action log for one trace");
  replay->add_option("--config", config_path, "run config JSON")->required();
  replay->add_option("--trace", trace_path, "trace JSON file");
  replay->add_option("--format", trace_format, "conversational|trajectory");
  replay->add_option("--bank", bank_path, "skill bank JSON");

  auto* demo = app.add_subcommand("synth-demo", "run the synthetic environment end to end");
  demo->add_option("--seed", demo_seed, "environment seed");

  auto* report = app.add_subcommand("report", "summarize a training output directory");
  report->add_option("--dir", report_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    memskill::assert_reference_defaults();
    if (*train)
      return cmd_train(config_path, out_dir, seed, max_cycles, no_designer, random_selection);
    if (*eval) return cmd_eval(config_path, bank_path, controller_path, k);
    if (*slist) return cmd_skills_list(bank_path);
    if (*sshow) return cmd_skills_show(bank_path, skill_name);
    if (*sdiff) return cmd_skills_diff(bank_path, bank_path_b);
    if (*replay) return cmd_replay(config_path, trace_path, trace_format, bank_path);
    if (*demo) return cmd_synth_demo(demo_seed);
    if (*report) return cmd_report(report_dir);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
