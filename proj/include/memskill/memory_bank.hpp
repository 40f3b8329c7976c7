#pragma once
// Trace-specific memory store: cosine retrieval, structured action
// application with index-to-id resolution, JSONL persistence.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "memskill/embedding.hpp"

namespace memskill {

struct MemoryItem {
  long id = 0;  // monotone per bank, never reused
  std::string text;
  Vec embedding;
  int created_step = 0;
  int updated_step = 0;
};

struct RetrievedEntry {
  int local_index = 0;  // dense 0-based position in this retrieved set
  long item_id = 0;
  std::string text;
  double score = 0.0;
  Vec embedding;
};

struct RetrievedSet {
  std::vector<RetrievedEntry> items;
  bool empty() const { return items.empty(); }
  int size() const { return static_cast<int>(items.size()); }
};

struct InsertAction { std::string text; };
struct UpdateAction { int local_index = 0; std::string text; };
struct DeleteAction { int local_index = 0; };
struct NoopAction {};
using MemoryAction = std::variant<InsertAction, UpdateAction, DeleteAction, NoopAction>;

bool operator==(const InsertAction& a, const InsertAction& b);
bool operator==(const UpdateAction& a, const UpdateAction& b);
bool operator==(const DeleteAction& a, const DeleteAction& b);
bool operator==(const NoopAction&, const NoopAction&);

struct ApplyReport {
  int inserted = 0;
  int updated = 0;
  int deleted = 0;
  int noops = 0;
  std::vector<std::string> warnings;
  int mutations() const { return inserted + updated + deleted; }
};

class MemoryBank {
 public:
  MemoryBank() = default;

  int size() const { return static_cast<int>(items_.size()); }
  const std::vector<MemoryItem>& items() const { return items_; }
  const MemoryItem* find(long id) const;

  // Top-min(R, size) items by cosine score against `query`; ties broken by
  // larger updated_step, then larger id. Deterministic.
  RetrievedSet retrieve(const Vec& query, int top_r) const;

  // Resolves every local_index against `retrieved` before mutating, then
  // applies actions in order. Out-of-range or stale references degrade to
  // warnings; the batch never aborts.
  ApplyReport apply_actions(const RetrievedSet& retrieved,
                            const std::vector<MemoryAction>& actions,
                            const Embedder& embedder, int step);

  std::string serialize() const;  // JSONL, one item per line
  static MemoryBank load(const std::string& jsonl);  // throws with line number

 private:
  std::vector<MemoryItem> items_;
  long next_id_ = 0;
};

bool operator==(const MemoryBank& a, const MemoryBank& b);

}  // namespace memskill
