#pragma once
// Versioned, shared bank of memory skills plus the proposal format the
// designer uses to mutate it. Banks are immutable values; every mutation
// yields a new version.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace memskill {

enum class UpdateType { Insert, Update, Delete, Noop };

std::string to_string(UpdateType t);
UpdateType update_type_from_string(const std::string& s);

struct SkillOrigin {
  enum class Kind { Initial, DesignerAdded, DesignerRefined };
  Kind kind = Kind::Initial;
  int round = 0;  // evolution round, for designer-made skills
};

struct Skill {
  std::string name;  // snake_case, unique within a bank
  std::string description;
  std::string instruction_template;
  UpdateType update_type = UpdateType::Insert;
  SkillOrigin origin;
  int created_step = 0;
};

struct AddChange {
  std::string name;
  std::string description;
  std::string instruction_template;
  UpdateType update_type = UpdateType::Insert;  // insert or update only
  std::string reasoning;
};

struct RefineChange {
  std::string name;  // existing skill
  std::optional<std::string> new_description;
  std::optional<std::string> new_instruction_template;
  std::string reasoning;
};

using SkillChange = std::variant<AddChange, RefineChange>;

struct EvolutionProposal {
  enum class Action { ApplyChanges, NoChange };
  Action action = Action::NoChange;
  std::vector<SkillChange> changes;
  std::string summary;
};

class ProposalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SkillBank {
  int version = 0;
  std::optional<int> parent_version;
  std::vector<Skill> skills;

  const Skill* find(const std::string& name) const;
  int index_of(const std::string& name) const;  // -1 if absent
  int size() const { return static_cast<int>(skills.size()); }
};

bool operator==(const SkillOrigin& a, const SkillOrigin& b);
bool operator==(const Skill& a, const Skill& b);
bool operator==(const SkillBank& a, const SkillBank& b);

// The four initial primitives (insert/update/delete/noop), bank version 0.
SkillBank init_primitives();

// Validates and applies a proposal, returning a bank with version+1.
// Adds are appended in proposal order; refines replace text in place.
// Throws ProposalError naming the offending change; `bank` is untouched.
SkillBank apply_proposal(const SkillBank& bank, const EvolutionProposal& proposal,
                         int round, int step);

nlohmann::json to_json(const SkillBank& bank);
SkillBank bank_from_json(const nlohmann::json& j);
std::string serialize_bank(const SkillBank& bank);  // stable key order
SkillBank parse_bank(const std::string& text);

// In-memory snapshot store backing rollback; optionally mirrored to a
// directory of one JSON file per snapshot.
class SnapshotStore {
 public:
  SnapshotStore() = default;
  explicit SnapshotStore(std::string dir) : dir_(std::move(dir)) {}

  using SnapshotId = int;
  SnapshotId snapshot(const SkillBank& bank);
  SkillBank restore(SnapshotId id) const;  // throws on unknown id

 private:
  std::map<SnapshotId, SkillBank> banks_;
  SnapshotId next_id_ = 0;
  std::string dir_;
};

}  // namespace memskill
