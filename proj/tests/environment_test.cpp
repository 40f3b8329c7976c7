#include <regex>
#include <sstream>

#include "doctest.h"
#include "memskill/controller.hpp"
#include "memskill/environment.hpp"

using namespace memskill;

namespace {

const HashEmbedder kEmbedder(32);

std::string words(int n, const std::string& prefix = "w") {
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    if (i) out << ' ';
    out << prefix << i;
  }
  return out.str();
}

std::string span_category(const std::string& text) {
  std::smatch m;
  REQUIRE(std::regex_search(text, m, std::regex("\\[CAT:([A-Za-z0-9_]+)\\]")));
  return m[1].str();
}

// six-skill bank: the four primitives plus two distractors
SkillBank six_skill_bank() {
  SkillBank bank = init_primitives();
  EvolutionProposal p;
  p.action = EvolutionProposal::Action::ApplyChanges;
  for (int i = 0; i < 2; ++i) {
    AddChange add;
    add.name = "distractor_" + std::to_string(i);
    add.description = "distractor skill " + std::to_string(i) + " that never matches";
    add.instruction_template = "Skill: Distractor " + std::to_string(i) + ". Action type: INSERT only.";
    p.changes.push_back(add);
  }
  return apply_proposal(bank, p, 0, 0);
}

}  // namespace

TEST_CASE("chunk_text splits greedily at the token budget") {
  SUBCASE("1000 tokens at 512 -> 512 + 488") {
    auto spans = chunk_text(words(1000), 512);
    REQUIRE(spans.size() == 2);
    std::istringstream a(spans[0].text), b(spans[1].text);
    int na = 0, nb = 0;
    std::string tok;
    while (a >> tok) ++na;
    while (b >> tok) ++nb;
    CHECK(na == 512);
    CHECK(nb == 488);
    CHECK(spans[0].index == 0);
    CHECK(spans[1].index == 1);
    CHECK(spans[0].text.substr(0, 2) == "w0");
    CHECK(spans[1].text.substr(0, 4) == "w512");
  }
  SUBCASE("short input is one span") {
    auto spans = chunk_text("just a few tokens", 512);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].text == "just a few tokens");
  }
  SUBCASE("empty input yields no spans") {
    CHECK(chunk_text("", 512).empty());
    CHECK(chunk_text("   \n\t ", 512).empty());
  }
  SUBCASE("budget below 16 throws") { CHECK_THROWS(chunk_text("x", 8)); }
  SUBCASE("whitespace runs collapse to single spaces") {
    auto spans = chunk_text("alpha   beta\n\ngamma", 16);
    CHECK(spans[0].text == "alpha beta gamma");
  }
}

TEST_CASE("chunk_sessions keeps one span per session") {
  auto spans = chunk_sessions({"first session", "second", "third"});
  REQUIRE(spans.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(spans[i].index == i);
  CHECK(spans[1].text == "second");
  CHECK(chunk_sessions({}).empty());
}

TEST_CASE("token_f1 closed forms") {
  CHECK(token_f1("Paris", "paris.") == doctest::Approx(1.0));
  CHECK(token_f1("red coin", "red door") == doctest::Approx(0.5));
  CHECK(token_f1("", "x") == doctest::Approx(0.0));
  CHECK(token_f1("x", "") == doctest::Approx(0.0));
  CHECK(token_f1("", "") == doctest::Approx(1.0));
  CHECK(token_f1("nothing shared", "totally different") == doctest::Approx(0.0));
  // articles are dropped
  CHECK(token_f1("the brass coin", "a brass coin") == doctest::Approx(1.0));
  // multiset semantics: repeated tokens only match as often as they appear
  CHECK(token_f1("dog dog", "dog") == doctest::Approx(2.0 / 3.0));

  SUBCASE("symmetry") {
    std::vector<std::pair<std::string, std::string>> pairs = {
        {"red green blue", "green blue yellow"},
        {"one two", "two"},
        {"Hello, World!", "hello world"},
    };
    for (const auto& [x, y] : pairs) CHECK(token_f1(x, y) == doctest::Approx(token_f1(y, x)));
  }
}

TEST_CASE("answer prompt layout") {
  RetrievedSet r;
  r.items.push_back({0, 7, "Juniper is a cat.", 0.9, kEmbedder.embed("cat")});
  std::string p = build_answer_prompt(r, "What is Juniper?");
  CHECK(p.find("Context:\n[0] Juniper is a cat.") != std::string::npos);
  CHECK(p.find("Question: What is Juniper? Short answer:") != std::string::npos);
  CHECK(build_answer_prompt({}, "q").find("Context:\n(none)") != std::string::npos);
}

TEST_CASE("evaluate_memory") {
  MemoryBank bank;
  RetrievedSet none;
  bank.apply_actions(none, {InsertAction{"Alice works at the bakery"}}, kEmbedder, 0);
  std::vector<Query> queries = {{"q0", "Where does Alice work?", "at the bakery", {}},
                                {"q1", "Where does Bob live?", "in Leeds", {}}};

  SUBCASE("mixed hits average to 0.5") {
    ScriptedBackend backend(
        std::vector<ScriptedBackend::Rule>{{{"Where does Alice work?"}, "at the bakery"}});
    backend.set_default_response("no idea whatsoever");
    EvalResult res = evaluate_memory(bank, queries, backend, kEmbedder, 5);
    REQUIRE(res.records.size() == 2);
    CHECK(res.records[0].reward == doctest::Approx(1.0));
    CHECK(res.records[1].reward == doctest::Approx(0.0));
    CHECK(res.mean_reward == doctest::Approx(0.5));
    CHECK(res.records[0].retrieved_texts == std::vector<std::string>{"Alice works at the bakery"});
  }
  SUBCASE("backend failure scores zero and is flagged") {
    CallbackBackend backend([](const std::string&) -> std::string {
      throw BackendError("down");
    });
    EvalResult res = evaluate_memory(bank, queries, backend, kEmbedder, 5);
    CHECK(res.mean_reward == doctest::Approx(0.0));
    for (const auto& rec : res.records) CHECK(rec.backend_failed);
  }
  SUBCASE("empty query list throws") {
    ScriptedBackend backend;
    CHECK_THROWS(evaluate_memory(bank, {}, backend, kEmbedder, 5));
  }
}

TEST_CASE("synthetic environment construction") {
  SkillBank bank = init_primitives();
  SyntheticSpec spec;
  spec.categories = {"c0", "c1"};
  spec.skill_keying = {{"c0", "insert"}, {"c1", "update"}};
  spec.num_traces = 3;
  SyntheticEnv env = make_synthetic(spec, bank);

  REQUIRE(env.traces.size() == 3);
  CHECK(env.keyed_templates.at("c0") == bank.find("insert")->instruction_template);
  CHECK(env.keyed_templates.at("c1") == bank.find("update")->instruction_template);
  for (const auto& trace : env.traces) {
    CHECK(trace.spans.size() == 4);
    CHECK(trace.queries.size() == 4);  // one fact per span by default
    for (const auto& q : trace.queries) {
      CHECK(q.ground_truth.rfind("fact_", 0) == 0);
      CHECK(q.text.find(q.ground_truth) != std::string::npos);
      CHECK((q.metadata.at("category") == "c0" || q.metadata.at("category") == "c1"));
    }
  }
  SUBCASE("keying to a skill absent from the bank leaves the category untemplated") {
    SyntheticSpec evolved = spec;
    evolved.skill_keying["c1"] = "not_yet_designed";
    SyntheticEnv e2 = make_synthetic(evolved, bank);
    CHECK(e2.keyed_templates.count("c1") == 0);
    CHECK(e2.keyed_templates.count("c0") == 1);
  }
  SUBCASE("fewer than two categories throws") {
    SyntheticSpec bad = spec;
    bad.categories = {"solo"};
    CHECK_THROWS(make_synthetic(bad, bank));
  }
}

TEST_CASE("synthetic causal chain end to end") {
  SkillBank bank = six_skill_bank();
  SyntheticSpec spec;
  spec.categories = {"c0", "c1", "c2", "c3"};
  spec.skill_keying = {{"c0", "insert"}, {"c1", "update"}, {"c2", "delete"}, {"c3", "noop"}};
  spec.num_traces = 4;
  SyntheticEnv env = make_synthetic(spec, bank);
  SyntheticAnswerBackend answerer;

  auto run_trace = [&](const Trace& trace, auto select_skills) {
    SyntheticExecutorBackend executor(env.keyed_templates);
    MemoryBank memory;
    for (const auto& span : trace.spans) {
      RetrievedSet retrieved = memory.retrieve(kEmbedder.embed(span.text), 20);
      execute_span(span.text, memory, retrieved, select_skills(span), executor, kEmbedder, {},
                   span.index);
    }
    return evaluate_memory(memory, trace.queries, answerer, kEmbedder, 20).mean_reward;
  };

  SUBCASE("always selecting the keyed skill is a perfect policy") {
    for (const auto& trace : env.traces) {
      double reward = run_trace(trace, [&](const Span& span) -> std::vector<Skill> {
        std::string keyed = spec.skill_keying.at(span_category(span.text));
        return {*bank.find(keyed), *bank.find("distractor_0")};
      });
      CHECK(reward == doctest::Approx(1.0));
    }
  }
  SUBCASE("never selecting the keyed skill stores nothing") {
    for (const auto& trace : env.traces) {
      double reward = run_trace(trace, [&](const Span&) -> std::vector<Skill> {
        return {*bank.find("distractor_0"), *bank.find("distractor_1")};
      });
      CHECK(reward == doctest::Approx(0.0));
    }
  }
  SUBCASE("uniform random selection scores K/N on average") {
    const int k = 2, n = bank.size();
    REQUIRE(n == 6);
    Rng rng(29);
    double total = 0.0;
    int episodes = 0;
    for (int rep = 0; rep < 125; ++rep)
      for (const auto& trace : env.traces) {
        total += run_trace(trace, [&](const Span&) -> std::vector<Skill> {
          std::vector<Skill> selected;
          for (int idx : sample_topk(Vec::Zero(n), k, rng)) selected.push_back(bank.skills[idx]);
          return selected;
        });
        ++episodes;
      }
    CHECK(total / episodes == doctest::Approx(static_cast<double>(k) / n).epsilon(0.15));
    CHECK(std::abs(total / episodes - static_cast<double>(k) / n) < 0.05);
  }
}

TEST_CASE("conversational trace fixture") {
  Trace trace = load_trace_json(std::string(MEMSKILL_TEST_DIR) + "/fixtures/conversational.json",
                                "conversational", 512);
  CHECK(trace.trace_id == "conv_demo");
  REQUIRE(trace.spans.size() == 2);
  CHECK(trace.spans[0].text.rfind("Alice: I just started", 0) == 0);
  CHECK(trace.spans[0].text.find("\nBob: Congrats!") != std::string::npos);
  REQUIRE(trace.queries.size() == 2);
  CHECK(trace.queries[1].ground_truth == "Juniper");
  CHECK(trace.queries[1].metadata.at("category") == "pets");
}

TEST_CASE("trajectory trace fixture chunks rendered steps") {
  Trace trace = load_trace_json(std::string(MEMSKILL_TEST_DIR) + "/fixtures/trajectory.json",
                                "trajectory", 32);
  CHECK(trace.trace_id == "traj_demo");
  REQUIRE(!trace.spans.empty());
  CHECK(trace.spans.size() > 1);  // 10 rendered steps exceed one 32-token span
  CHECK(trace.spans[0].text.rfind("Observation: You are in a kitchen", 0) == 0);
  for (const auto& span : trace.spans) {
    std::istringstream in(span.text);
    std::string tok;
    int count = 0;
    while (in >> tok) ++count;
    CHECK(count <= 32);
  }
  CHECK(trace.queries.size() == 3);
}

TEST_CASE("trace schema violations name the offending JSON path") {
  nlohmann::json j = {
      {"sessions",
       {{{"turns", {{{"speaker", "A"}, {"text", "hi"}}, {{"speaker", "B"}}}}}}},
      {"queries", nlohmann::json::array()},
  };
  try {
    parse_trace(j, "conversational", 512);
    FAIL("expected a schema error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("$.sessions[0].turns[1].text") != std::string::npos);
  }

  SUBCASE("duplicate query ids are rejected") {
    nlohmann::json dup = {{"sessions", nlohmann::json::array()},
                          {"queries",
                           {{{"id", "q0"}, {"question", "a?"}, {"answer", "a"}},
                            {{"id", "q0"}, {"question", "b?"}, {"answer", "b"}}}}};
    CHECK_THROWS(parse_trace(dup, "conversational", 512));
  }
  SUBCASE("unknown format") {
    CHECK_THROWS(parse_trace(nlohmann::json::object(), "tabular", 512));
  }
  SUBCASE("missing file") {
    CHECK_THROWS(load_trace_json("/nonexistent/trace.json", "conversational", 512));
  }
}
