#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "memskill/executor.hpp"

using namespace memskill;

namespace {

const HashEmbedder kEmbedder(32);

std::string read_file(const std::string& name) {
  std::ifstream in(std::string(MEMSKILL_TEST_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

RetrievedSet two_memories() {
  RetrievedSet r;
  r.items.push_back({0, 0, "Alice lives in London.", 0.9, kEmbedder.embed("Alice lives")});
  r.items.push_back({1, 1, "Bob enjoys hiking.", 0.4, kEmbedder.embed("Bob hiking")});
  return r;
}

}  // namespace

TEST_CASE("executor prompt matches the golden fixture byte for byte") {
  SkillBank bank = init_primitives();
  std::string prompt = build_executor_prompt(
      "Alice moved to Paris in 2021. Bob visited her in May.", two_memories(),
      {*bank.find("update"), *bank.find("insert")});
  CHECK(prompt + "\n" == read_file("golden/executor_prompt.txt"));
}

TEST_CASE("empty retrieved set renders a (none) marker") {
  SkillBank bank = init_primitives();
  std::string prompt = build_executor_prompt("text", {}, {bank.skills[0]});
  CHECK(prompt.find("Retrieved Memories (0-based index):\n(none)") != std::string::npos);
}

TEST_CASE("skill templates appear verbatim and in selection order") {
  SkillBank bank = init_primitives();
  std::vector<Skill> skills = {*bank.find("update"), *bank.find("insert")};
  std::string prompt = build_executor_prompt("span", {}, skills);
  size_t upd = prompt.find(skills[0].instruction_template);
  size_t ins = prompt.find(skills[1].instruction_template);
  REQUIRE(upd != std::string::npos);
  REQUIRE(ins != std::string::npos);
  CHECK(upd < ins);
}

TEST_CASE("build_executor_prompt rejects an empty skill list") {
  CHECK_THROWS(build_executor_prompt("x", {}, {}));
}

TEST_CASE("parse single INSERT block") {
  ParseResult r = parse_action_blocks("ACTION: INSERT\nMEMORY_ITEM: Alice moved to Paris");
  REQUIRE(r.actions.size() == 1);
  CHECK(std::get<InsertAction>(r.actions[0]).text == "Alice moved to Paris");
  CHECK(r.warnings.empty());
}

TEST_CASE("parse multiple blocks in order") {
  ParseResult r = parse_action_blocks(
      "ACTION: INSERT\nMEMORY_ITEM: new fact\n"
      "\n"
      "ACTION: UPDATE\nMEMORY_INDEX: 1\nUPDATED_MEMORY: merged text\n"
      "\n"
      "ACTION: DELETE\nMEMORY_INDEX: 0\n"
      "\n"
      "ACTION: NOOP\n");
  REQUIRE(r.actions.size() == 4);
  CHECK(std::get<InsertAction>(r.actions[0]).text == "new fact");
  CHECK(std::get<UpdateAction>(r.actions[1]).local_index == 1);
  CHECK(std::get<UpdateAction>(r.actions[1]).text == "merged text");
  CHECK(std::get<DeleteAction>(r.actions[2]).local_index == 0);
  CHECK(std::holds_alternative<NoopAction>(r.actions[3]));
}

TEST_CASE("malformed input degrades to warnings, never throws") {
  SUBCASE("prose") {
    ParseResult r = parse_action_blocks("hello world");
    CHECK(r.actions.empty());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("missing field") {
    ParseResult r = parse_action_blocks("ACTION: INSERT");
    CHECK(r.actions.empty());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("non-integer index") {
    ParseResult r = parse_action_blocks("ACTION: DELETE\nMEMORY_INDEX: first");
    CHECK(r.actions.empty());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("unknown action") {
    ParseResult r = parse_action_blocks("ACTION: MERGE\nMEMORY_ITEM: x");
    CHECK(r.actions.empty());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("empty text") {
    ParseResult r = parse_action_blocks("");
    CHECK(r.actions.empty());
    CHECK(r.warnings.empty());
  }
}

TEST_CASE("field parsing is case-insensitive") {
  ParseResult r = parse_action_blocks("action: insert\nmemory_item: lower case");
  REQUIRE(r.actions.size() == 1);
  CHECK(std::get<InsertAction>(r.actions[0]).text == "lower case");
}

TEST_CASE("format/parse round-trip over randomized action lists") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MemoryAction> actions;
    int n = 1 + static_cast<int>(gen() % 6);
    for (int i = 0; i < n; ++i) {
      switch (gen() % 4) {
        case 0: actions.push_back(InsertAction{"fact " + std::to_string(gen() % 1000)}); break;
        case 1:
          actions.push_back(
              UpdateAction{static_cast<int>(gen() % 20), "upd " + std::to_string(gen() % 1000)});
          break;
        case 2: actions.push_back(DeleteAction{static_cast<int>(gen() % 20)}); break;
        default: actions.push_back(NoopAction{});
      }
    }
    ParseResult r = parse_action_blocks(format_action_blocks(actions));
    CHECK(r.warnings.empty());
    REQUIRE(r.actions.size() == actions.size());
    for (size_t i = 0; i < actions.size(); ++i) CHECK(r.actions[i] == actions[i]);
  }
}

TEST_CASE("execute_span makes exactly one backend call") {
  SkillBank bank = init_primitives();
  ScriptedBackend backend;
  backend.set_default_response("ACTION: INSERT\nMEMORY_ITEM: stored fact");
  MemoryBank memory;
  SpanResult res = execute_span("some span", memory, {}, {bank.skills[0]}, backend, kEmbedder,
                                {}, 0);
  CHECK(backend.call_count() == 1);
  CHECK_FALSE(res.failed);
  CHECK(memory.size() == 1);
  CHECK(res.report.inserted == 1);
}

TEST_CASE("NOOP completion leaves the bank unchanged") {
  SkillBank bank = init_primitives();
  ScriptedBackend backend;  // default response is ACTION: NOOP
  MemoryBank memory;
  SpanResult res = execute_span("span", memory, {}, {bank.skills[3]}, backend, kEmbedder, {},
                                0);
  CHECK(memory.size() == 0);
  CHECK(res.report.noops == 1);
}

TEST_CASE("backend failure leaves the bank unchanged and flags the span") {
  SkillBank bank = init_primitives();
  CallbackBackend backend([](const std::string&) -> std::string {
    throw BackendError("timeout");
  });
  MemoryBank memory;
  RetrievedSet none;
  memory.apply_actions(none, {InsertAction{"existing"}}, kEmbedder, 0);
  SpanResult res = execute_span("span", memory, {}, {bank.skills[0]}, backend, kEmbedder, {},
                                1);
  CHECK(res.failed);
  CHECK(res.failure_reason == "timeout");
  CHECK(memory.size() == 1);
}

TEST_CASE("actions beyond the per-span cap are dropped with a warning") {
  SkillBank bank = init_primitives();
  std::ostringstream many;
  for (int i = 0; i < 10; ++i) many << "ACTION: INSERT\nMEMORY_ITEM: item " << i << "\n\n";
  ScriptedBackend backend;
  backend.set_default_response(many.str());
  MemoryBank memory;
  SpanResult res = execute_span("span", memory, {}, {bank.skills[0]}, backend, kEmbedder, {},
                                0, 4);
  CHECK(memory.size() == 4);
  CHECK_FALSE(res.parse_warnings.empty());
}

TEST_CASE("scripted backend rule matching") {
  ScriptedBackend backend({{{"needle one", "needle two"}, "matched"}});
  backend.set_default_response("fallback");
  CHECK(backend.complete({{"user", "has needle one and needle two"}}, {}) == "matched");
  CHECK(backend.complete({{"user", "has needle one only"}}, {}) == "fallback");
  CHECK(backend.call_count() == 2);
  // purity: identical input, identical output
  CHECK(backend.complete({{"user", "has needle one and needle two"}}, {}) == "matched");
}
