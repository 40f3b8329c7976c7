#include <random>

#include "doctest.h"
#include "memskill/skill_bank.hpp"

using namespace memskill;

TEST_CASE("init_primitives builds the four-skill bank") {
  SkillBank bank = init_primitives();
  CHECK(bank.version == 0);
  CHECK_FALSE(bank.parent_version.has_value());
  REQUIRE(bank.size() == 4);
  CHECK(bank.skills[0].name == "insert");
  CHECK(bank.skills[1].name == "update");
  CHECK(bank.skills[2].name == "delete");
  CHECK(bank.skills[3].name == "noop");
  CHECK(bank.skills[0].update_type == UpdateType::Insert);
  CHECK(bank.skills[1].update_type == UpdateType::Update);
  CHECK(bank.skills[2].update_type == UpdateType::Delete);
  CHECK(bank.skills[3].update_type == UpdateType::Noop);
  for (const auto& s : bank.skills) {
    CHECK_FALSE(s.description.empty());
    CHECK_FALSE(s.instruction_template.empty());
    CHECK(s.origin.kind == SkillOrigin::Kind::Initial);
  }
  // key lines from the published primitive texts
  CHECK(bank.skills[0].instruction_template.find("Skill: Insert New Memory") == 0);
  CHECK(bank.skills[0].instruction_template.find("Action type: INSERT only.") !=
        std::string::npos);
  CHECK(bank.skills[3].instruction_template.find("Skill: No Operation") == 0);
}

TEST_CASE("init_primitives is deterministic") {
  CHECK(serialize_bank(init_primitives()) == serialize_bank(init_primitives()));
  CHECK(init_primitives() == init_primitives());
}

namespace {

EvolutionProposal add_proposal(const std::string& name) {
  AddChange add;
  add.name = name;
  add.description = "captures " + name + " details";
  add.instruction_template = "Skill: " + name + ". Action type: INSERT only.";
  add.update_type = UpdateType::Insert;
  EvolutionProposal p;
  p.action = EvolutionProposal::Action::ApplyChanges;
  p.changes.push_back(add);
  return p;
}

}  // namespace

TEST_CASE("apply_proposal appends adds and bumps the version") {
  SkillBank bank = init_primitives();
  SkillBank next = apply_proposal(bank, add_proposal("capture_dates"), 2, 150);
  CHECK(next.version == 1);
  CHECK(next.parent_version == 0);
  REQUIRE(next.size() == 5);
  CHECK(next.skills[4].name == "capture_dates");
  CHECK(next.skills[4].origin.kind == SkillOrigin::Kind::DesignerAdded);
  CHECK(next.skills[4].origin.round == 2);
  CHECK(next.skills[4].created_step == 150);
  // input untouched
  CHECK(bank.size() == 4);
  CHECK(bank.version == 0);
  // untargeted skills unchanged field by field
  for (int i = 0; i < 4; ++i) CHECK(next.skills[i] == bank.skills[i]);
}

TEST_CASE("apply_proposal refines in place") {
  SkillBank bank = init_primitives();
  RefineChange refine;
  refine.name = "insert";
  refine.new_description = "sharper insert description";
  EvolutionProposal p;
  p.action = EvolutionProposal::Action::ApplyChanges;
  p.changes.push_back(refine);

  SkillBank next = apply_proposal(bank, p, 1, 40);
  CHECK(next.size() == 4);
  CHECK(next.version == 1);
  CHECK(next.skills[0].name == "insert");
  CHECK(next.skills[0].description == "sharper insert description");
  CHECK(next.skills[0].instruction_template == bank.skills[0].instruction_template);
  CHECK(next.skills[0].update_type == UpdateType::Insert);
  CHECK(next.skills[0].origin.kind == SkillOrigin::Kind::DesignerRefined);
}

TEST_CASE("apply_proposal validation") {
  SkillBank bank = init_primitives();

  SUBCASE("duplicate target") {
    RefineChange r1;
    r1.name = "insert";
    r1.new_description = "x";
    EvolutionProposal p;
    p.action = EvolutionProposal::Action::ApplyChanges;
    p.changes.push_back(r1);
    p.changes.push_back(r1);
    CHECK_THROWS_AS(apply_proposal(bank, p, 0, 0), ProposalError);
  }
  SUBCASE("missing refine target") {
    RefineChange r;
    r.name = "missing";
    r.new_description = "x";
    EvolutionProposal p;
    p.action = EvolutionProposal::Action::ApplyChanges;
    p.changes.push_back(r);
    CHECK_THROWS_AS(apply_proposal(bank, p, 0, 0), ProposalError);
  }
  SUBCASE("name collision") {
    CHECK_THROWS_AS(apply_proposal(bank, add_proposal("insert"), 0, 0), ProposalError);
  }
  SUBCASE("disallowed update_type") {
    EvolutionProposal p = add_proposal("bad_skill");
    std::get<AddChange>(p.changes[0]).update_type = UpdateType::Delete;
    CHECK_THROWS_AS(apply_proposal(bank, p, 0, 0), ProposalError);
  }
  SUBCASE("validation failure leaves the input untouched") {
    SkillBank before = bank;
    try {
      apply_proposal(bank, add_proposal("insert"), 0, 0);
    } catch (const ProposalError&) {
    }
    CHECK(bank == before);
  }
}

TEST_CASE("serialization round-trips randomized banks") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    SkillBank bank = init_primitives();
    int n_adds = static_cast<int>(gen() % 4);
    for (int i = 0; i < n_adds; ++i) {
      bank = apply_proposal(bank, [&] {
        AddChange add;
        add.name = "skill_" + std::to_string(trial) + "_" + std::to_string(i);
        add.description = "desc " + std::to_string(gen() % 1000);
        add.instruction_template = "template\nwith lines " + std::to_string(gen() % 1000);
        add.update_type = (gen() % 2) ? UpdateType::Insert : UpdateType::Update;
        EvolutionProposal p;
        p.action = EvolutionProposal::Action::ApplyChanges;
        p.changes.push_back(add);
        return p;
      }(), i, static_cast<int>(gen() % 500));
    }
    CHECK(parse_bank(serialize_bank(bank)) == bank);
  }
}

TEST_CASE("snapshot store round-trips and rejects unknown ids") {
  SnapshotStore store;
  SkillBank b0 = init_primitives();
  SkillBank b1 = apply_proposal(b0, add_proposal("capture_x"), 0, 10);

  int id0 = store.snapshot(b0);
  int id1 = store.snapshot(b1);
  CHECK(id0 != id1);
  CHECK(store.restore(id0) == b0);
  CHECK(store.restore(id1) == b1);
  CHECK_THROWS(store.restore(999));
}

TEST_CASE("update type string conversions") {
  for (auto t : {UpdateType::Insert, UpdateType::Update, UpdateType::Delete, UpdateType::Noop})
    CHECK(update_type_from_string(to_string(t)) == t);
  CHECK_THROWS(update_type_from_string("bogus"));
}
