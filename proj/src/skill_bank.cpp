#include "memskill/skill_bank.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

namespace memskill {

std::string to_string(UpdateType t) {
  switch (t) {
    case UpdateType::Insert: return "insert";
    case UpdateType::Update: return "update";
    case UpdateType::Delete: return "delete";
    case UpdateType::Noop: return "noop";
  }
  return "noop";
}

UpdateType update_type_from_string(const std::string& s) {
  if (s == "insert") return UpdateType::Insert;
  if (s == "update") return UpdateType::Update;
  if (s == "delete") return UpdateType::Delete;
  if (s == "noop") return UpdateType::Noop;
  throw std::invalid_argument("unknown update_type: " + s);
}

bool operator==(const SkillOrigin& a, const SkillOrigin& b) {
  return a.kind == b.kind && a.round == b.round;
}

bool operator==(const Skill& a, const Skill& b) {
  return a.name == b.name && a.description == b.description &&
         a.instruction_template == b.instruction_template &&
         a.update_type == b.update_type && a.origin == b.origin &&
         a.created_step == b.created_step;
}

bool operator==(const SkillBank& a, const SkillBank& b) {
  return a.version == b.version && a.parent_version == b.parent_version &&
         a.skills == b.skills;
}

const Skill* SkillBank::find(const std::string& name) const {
  for (const auto& s : skills)
    if (s.name == name) return &s;
  return nullptr;
}

int SkillBank::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (skills[i].name == name) return i;
  return -1;
}

namespace {

const char* kInsertTemplate =
    "Skill: Insert New Memory\n"
    "\n"
    "Description: Memory management skill for capturing new, durable facts from the current text chunk that are not already in memory.\n"
    "\n"
    "Purpose: Capture new, durable facts from the current text chunk that are missing in memory.\n"
    "\n"
    "When to use:\n"
    "- The text chunk introduces new facts, events, plans, or context worth storing.\n"
    "- The information is stable and likely useful later.\n"
    "\n"
    "How to apply:\n"
    "- Compare against retrieved memories to avoid duplicates.\n"
    "- Split distinct facts into separate items.\n"
    "- Keep each item concise and specific.\n"
    "\n"
    "Constraints:\n"
    "- Skip trivial, fleeting, or speculative content.\n"
    "- Do not update or delete existing memories.\n"
    "\n"
    "Action type: INSERT only.";

const char* kUpdateTemplate =
    "Skill: Update Existing Memory\n"
    "\n"
    "Description: Memory management skill for revising an existing memory item when the text chunk provides corrections or new details.\n"
    "\n"
    "Purpose: Revise a retrieved memory with new or corrected information from the text chunk.\n"
    "\n"
    "When to use:\n"
    "- The text chunk clarifies, corrects, or extends a retrieved memory.\n"
    "\n"
    "How to apply:\n"
    "- Select the best matching memory item.\n"
    "- Merge new details into a single updated item.\n"
    "- Preserve accurate details that still hold.\n"
    "\n"
    "Constraints:\n"
    "- Do not create new memories.\n"
    "- Do not delete items.\n"
    "\n"
    "Action type: UPDATE only.";

const char* kDeleteTemplate =
    "Skill: Delete Invalid Memory\n"
    "\n"
    "Description: Memory management skill for removing memory items that are incorrect, outdated, or superseded.\n"
    "\n"
    "Purpose: Remove a retrieved memory that is wrong, outdated, or superseded by the text chunk.\n"
    "\n"
    "When to use:\n"
    "- The text chunk clearly contradicts a memory.\n"
    "- A plan or fact is explicitly canceled or replaced.\n"
    "\n"
    "How to apply:\n"
    "- Only delete when evidence is explicit.\n"
    "\n"
    "Constraints:\n"
    "- If uncertain, prefer no action over deletion.\n"
    "\n"
    "Action type: DELETE only.";

const char* kNoopTemplate =
    "Skill: No Operation\n"
    "\n"
    "Description: Memory management skill for confirming that no memory changes are required.\n"
    "\n"
    "Purpose: Confirm no memory changes are needed for the text chunk.\n"
    "\n"
    "When to use:\n"
    "- The text chunk contains no new, corrective, or actionable information.\n"
    "\n"
    "Constraints:\n"
    "- Emit NOOP only if none of the selected skills produce actions.\n"
    "\n"
    "Action type: NOOP only.";

const std::regex kNameRe("[a-z0-9_]+");

void check_skill_text(const Skill& s) {
  if (s.name.empty() || !std::regex_match(s.name, kNameRe))
    throw std::invalid_argument("invalid skill name: '" + s.name + "'");
  if (s.description.empty() || s.instruction_template.empty())
    throw std::invalid_argument("skill '" + s.name + "': empty description or template");
}

}  // namespace

SkillBank init_primitives() {
  SkillBank bank;
  bank.version = 0;
  bank.skills = {
      {"insert",
       "Memory management skill for capturing new, durable facts from the current text "
       "chunk that are not already in memory.",
       kInsertTemplate, UpdateType::Insert, {}, 0},
      {"update",
       "Memory management skill for revising an existing memory item when the text chunk "
       "provides corrections or new details.",
       kUpdateTemplate, UpdateType::Update, {}, 0},
      {"delete",
       "Memory management skill for removing memory items that are incorrect, outdated, "
       "or superseded.",
       kDeleteTemplate, UpdateType::Delete, {}, 0},
      {"noop",
       "Memory management skill for confirming that no memory changes are required.",
       kNoopTemplate, UpdateType::Noop, {}, 0},
  };
  return bank;
}

SkillBank apply_proposal(const SkillBank& bank, const EvolutionProposal& proposal,
                         int round, int step) {
  SkillBank out = bank;
  out.parent_version = bank.version;
  out.version = bank.version + 1;
  if (proposal.action == EvolutionProposal::Action::NoChange) return out;

  std::set<std::string> targets;
  for (const auto& change : proposal.changes) {
    const std::string& name =
        std::holds_alternative<AddChange>(change) ? std::get<AddChange>(change).name
                                                  : std::get<RefineChange>(change).name;
    if (!targets.insert(name).second)
      throw ProposalError("proposal targets skill '" + name + "' more than once");
  }

  for (const auto& change : proposal.changes) {
    if (const auto* add = std::get_if<AddChange>(&change)) {
      if (add->update_type != UpdateType::Insert && add->update_type != UpdateType::Update)
        throw ProposalError("added skill '" + add->name +
                            "' has disallowed update_type " + to_string(add->update_type));
      if (out.find(add->name))
        throw ProposalError("added skill '" + add->name + "' collides with existing name");
      Skill s{add->name, add->description, add->instruction_template, add->update_type,
              {SkillOrigin::Kind::DesignerAdded, round}, step};
      check_skill_text(s);
      out.skills.push_back(std::move(s));
    } else {
      const auto& refine = std::get<RefineChange>(change);
      int idx = out.index_of(refine.name);
      if (idx < 0)
        throw ProposalError("refine target '" + refine.name + "' does not exist");
      Skill& s = out.skills[idx];
      if (refine.new_description) s.description = *refine.new_description;
      if (refine.new_instruction_template)
        s.instruction_template = *refine.new_instruction_template;
      s.origin = {SkillOrigin::Kind::DesignerRefined, round};
      check_skill_text(s);
    }
  }
  return out;
}

nlohmann::json to_json(const SkillBank& bank) {
  nlohmann::ordered_json j;
  j["version"] = bank.version;
  if (bank.parent_version) j["parent_version"] = *bank.parent_version;
  else j["parent_version"] = nullptr;
  j["skills"] = nlohmann::ordered_json::array();
  for (const auto& s : bank.skills) {
    nlohmann::ordered_json js;
    js["name"] = s.name;
    js["description"] = s.description;
    js["instruction_template"] = s.instruction_template;
    js["update_type"] = to_string(s.update_type);
    switch (s.origin.kind) {
      case SkillOrigin::Kind::Initial: js["origin"] = "initial"; break;
      case SkillOrigin::Kind::DesignerAdded:
        js["origin"] = "designer_added:" + std::to_string(s.origin.round);
        break;
      case SkillOrigin::Kind::DesignerRefined:
        js["origin"] = "designer_refined:" + std::to_string(s.origin.round);
        break;
    }
    js["created_step"] = s.created_step;
    j["skills"].push_back(std::move(js));
  }
  return j;
}

SkillBank bank_from_json(const nlohmann::json& j) {
  SkillBank bank;
  bank.version = j.at("version").get<int>();
  if (j.contains("parent_version") && !j["parent_version"].is_null())
    bank.parent_version = j["parent_version"].get<int>();
  for (const auto& js : j.at("skills")) {
    Skill s;
    s.name = js.at("name").get<std::string>();
    s.description = js.at("description").get<std::string>();
    s.instruction_template = js.at("instruction_template").get<std::string>();
    s.update_type = update_type_from_string(js.at("update_type").get<std::string>());
    std::string origin = js.at("origin").get<std::string>();
    if (origin == "initial") {
      s.origin = {SkillOrigin::Kind::Initial, 0};
    } else if (origin.rfind("designer_added:", 0) == 0) {
      s.origin = {SkillOrigin::Kind::DesignerAdded, std::stoi(origin.substr(15))};
    } else if (origin.rfind("designer_refined:", 0) == 0) {
      s.origin = {SkillOrigin::Kind::DesignerRefined, std::stoi(origin.substr(17))};
    } else {
      throw std::invalid_argument("unknown skill origin: " + origin);
    }
    s.created_step = js.at("created_step").get<int>();
    check_skill_text(s);
    bank.skills.push_back(std::move(s));
  }
  std::set<std::string> names;
  for (const auto& s : bank.skills)
    if (!names.insert(s.name).second)
      throw std::invalid_argument("duplicate skill name: " + s.name);
  if (bank.skills.empty()) throw std::invalid_argument("skill bank must be non-empty");
  return bank;
}

std::string serialize_bank(const SkillBank& bank) { return to_json(bank).dump(2); }

SkillBank parse_bank(const std::string& text) {
  return bank_from_json(nlohmann::json::parse(text));
}

SnapshotStore::SnapshotId SnapshotStore::snapshot(const SkillBank& bank) {
  SnapshotId id = next_id_++;
  banks_[id] = bank;
  if (!dir_.empty()) {
    std::filesystem::create_directories(dir_);
    std::ofstream out(dir_ + "/snapshot_" + std::to_string(id) + ".json");
    out << serialize_bank(bank) << "\n";
  }
  return id;
}

SkillBank SnapshotStore::restore(SnapshotId id) const {
  auto it = banks_.find(id);
  if (it == banks_.end())
    throw std::out_of_range("unknown snapshot id " + std::to_string(id));
  return it->second;
}

}  // namespace memskill
