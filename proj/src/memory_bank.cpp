#include "memskill/memory_bank.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace memskill {

bool operator==(const InsertAction& a, const InsertAction& b) { return a.text == b.text; }
bool operator==(const UpdateAction& a, const UpdateAction& b) {
  return a.local_index == b.local_index && a.text == b.text;
}
bool operator==(const DeleteAction& a, const DeleteAction& b) {
  return a.local_index == b.local_index;
}
bool operator==(const NoopAction&, const NoopAction&) { return true; }

const MemoryItem* MemoryBank::find(long id) const {
  for (const auto& item : items_)
    if (item.id == id) return &item;
  return nullptr;
}

RetrievedSet MemoryBank::retrieve(const Vec& query, int top_r) const {
  if (top_r < 1) throw std::invalid_argument("retrieve: R must be >= 1");
  struct Scored {
    double score;
    const MemoryItem* item;
  };
  std::vector<Scored> scored;
  scored.reserve(items_.size());
  for (const auto& item : items_) scored.push_back({cosine(query, item.embedding), &item});
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.item->updated_step != b.item->updated_step)
      return a.item->updated_step > b.item->updated_step;
    return a.item->id > b.item->id;
  });
  int n = std::min<int>(top_r, static_cast<int>(scored.size()));
  RetrievedSet out;
  out.items.reserve(n);
  for (int i = 0; i < n; ++i)
    out.items.push_back(
        {i, scored[i].item->id, scored[i].item->text, scored[i].score, scored[i].item->embedding});
  return out;
}

ApplyReport MemoryBank::apply_actions(const RetrievedSet& retrieved,
                                      const std::vector<MemoryAction>& actions,
                                      const Embedder& embedder, int step) {
  ApplyReport report;

  // Resolve indices against the retrieved snapshot before any mutation, so
  // earlier deletes in the batch cannot shift later references.
  auto resolve = [&](int local_index) -> std::optional<long> {
    if (local_index < 0 || local_index >= retrieved.size()) {
      report.warnings.push_back("local_index " + std::to_string(local_index) +
                                " out of range (retrieved " +
                                std::to_string(retrieved.size()) + "); action dropped");
      return std::nullopt;
    }
    return retrieved.items[local_index].item_id;
  };

  struct ResolvedUpdate { long id; std::string text; };
  struct ResolvedDelete { long id; };
  using Resolved = std::variant<InsertAction, ResolvedUpdate, ResolvedDelete, NoopAction>;
  std::vector<Resolved> resolved;
  for (const auto& action : actions) {
    if (const auto* ins = std::get_if<InsertAction>(&action)) {
      resolved.emplace_back(*ins);
    } else if (const auto* upd = std::get_if<UpdateAction>(&action)) {
      if (auto id = resolve(upd->local_index)) resolved.emplace_back(ResolvedUpdate{*id, upd->text});
    } else if (const auto* del = std::get_if<DeleteAction>(&action)) {
      if (auto id = resolve(del->local_index)) resolved.emplace_back(ResolvedDelete{*id});
    } else {
      resolved.emplace_back(NoopAction{});
    }
  }

  auto find_mut = [&](long id) -> MemoryItem* {
    for (auto& item : items_)
      if (item.id == id) return &item;
    return nullptr;
  };

  for (const auto& action : resolved) {
    if (const auto* ins = std::get_if<InsertAction>(&action)) {
      MemoryItem item;
      item.id = next_id_++;
      item.text = ins->text;
      item.embedding = embedder.embed(ins->text);
      item.created_step = step;
      item.updated_step = step;
      items_.push_back(std::move(item));
      ++report.inserted;
    } else if (const auto* upd = std::get_if<ResolvedUpdate>(&action)) {
      if (MemoryItem* item = find_mut(upd->id)) {
        item->text = upd->text;
        item->embedding = embedder.embed(upd->text);
        item->updated_step = step;
        ++report.updated;
      } else {
        report.warnings.push_back("update target id " + std::to_string(upd->id) +
                                  " already deleted in this batch; action dropped");
      }
    } else if (const auto* del = std::get_if<ResolvedDelete>(&action)) {
      auto it = std::find_if(items_.begin(), items_.end(),
                             [&](const MemoryItem& m) { return m.id == del->id; });
      if (it != items_.end()) {
        items_.erase(it);
        ++report.deleted;
      } else {
        report.warnings.push_back("delete target id " + std::to_string(del->id) +
                                  " already deleted in this batch; action dropped");
      }
    } else {
      ++report.noops;
    }
  }
  return report;
}

std::string MemoryBank::serialize() const {
  std::ostringstream out;
  for (const auto& item : items_) {
    nlohmann::ordered_json j;
    j["id"] = item.id;
    j["text"] = item.text;
    j["created_step"] = item.created_step;
    j["updated_step"] = item.updated_step;
    j["embedding"] = std::vector<double>(item.embedding.data(),
                                         item.embedding.data() + item.embedding.size());
    out << j.dump() << "\n";
  }
  return out.str();
}

MemoryBank MemoryBank::load(const std::string& jsonl) {
  MemoryBank bank;
  std::istringstream in(jsonl);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      MemoryItem item;
      item.id = j.at("id").get<long>();
      item.text = j.at("text").get<std::string>();
      item.created_step = j.at("created_step").get<int>();
      item.updated_step = j.at("updated_step").get<int>();
      const auto& e = j.at("embedding");
      item.embedding = Vec(e.size());
      for (int i = 0; i < static_cast<int>(e.size()); ++i) item.embedding[i] = e[i].get<double>();
      bank.next_id_ = std::max(bank.next_id_, item.id + 1);
      bank.items_.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("memory bank load: line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return bank;
}

bool operator==(const MemoryBank& a, const MemoryBank& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i) {
    const auto& x = a.items()[i];
    const auto& y = b.items()[i];
    if (x.id != y.id || x.text != y.text || x.created_step != y.created_step ||
        x.updated_step != y.updated_step || x.embedding != y.embedding)
      return false;
  }
  return true;
}

}  // namespace memskill
