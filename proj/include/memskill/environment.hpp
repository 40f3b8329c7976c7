#pragma once
// Trace ingestion and chunking, token-F1 reward scoring, memory-bank
// evaluation against queries, and the deterministic synthetic environment
// used for closed-loop verification.

#include <map>
#include <string>
#include <vector>

#include "memskill/executor.hpp"
#include "memskill/memory_bank.hpp"

namespace memskill {

struct Span {
  int index = 0;
  std::string text;
};

struct Query {
  std::string id;
  std::string text;
  std::string ground_truth;
  std::map<std::string, std::string> metadata;
};

struct Trace {
  std::string trace_id;
  std::vector<Span> spans;
  std::vector<Query> queries;
};

// Greedy whitespace-token chunking into spans of <= span_tokens tokens.
// Empty input yields no spans. Requires span_tokens >= 16.
std::vector<Span> chunk_text(const std::string& raw_text, int span_tokens);

// Session mode: one span per session, length ignored.
std::vector<Span> chunk_sessions(const std::vector<std::string>& sessions);

// SQuAD-style normalization (lowercase, strip punctuation, drop a/an/the,
// collapse whitespace), then F1 over token multisets. Both empty -> 1.0,
// exactly one empty -> 0.0.
double token_f1(const std::string& prediction, const std::string& gold);

std::string build_answer_prompt(const RetrievedSet& retrieved, const std::string& question);

struct QueryRecord {
  std::string query_id;
  std::string query_text;
  std::string ground_truth;
  std::string prediction;
  double reward = 0.0;
  bool backend_failed = false;
  std::vector<long> retrieved_ids;
  std::vector<std::string> retrieved_texts;
};

struct EvalResult {
  double mean_reward = 0.0;
  std::vector<QueryRecord> records;
};

// Per query: embed, retrieve top_r, build the answer prompt, call the
// backend, score token_f1. Backend failure scores 0 for that query and is
// flagged in its record. Throws on empty queries.
EvalResult evaluate_memory(const MemoryBank& bank, const std::vector<Query>& queries,
                           LlmBackend& answer_backend, const Embedder& embedder, int top_r);

struct SyntheticSpec {
  std::vector<std::string> categories;  // tags c0, c1, ...
  int spans_per_trace = 4;
  int facts_per_span = 1;
  std::map<std::string, std::string> skill_keying;  // category -> skill name
  int num_traces = 8;
  uint64_t seed = 0;
};

struct SyntheticEnv {
  std::vector<Trace> traces;
  // category -> the keyed skill's instruction template, captured at build
  // time; the scripted executor matches on template presence in the prompt.
  std::map<std::string, std::string> keyed_templates;
};

// Each span carries a "[CAT:c]" marker plus unique fact tokens; every fact
// has one query whose ground truth is the fact token. Deterministic under
// spec.seed.
SyntheticEnv make_synthetic(const SyntheticSpec& spec, const SkillBank& bank);

// Executor backend honoring the synthetic causal chain: emits one INSERT
// per fact in the span iff the prompt contains the instruction template of
// the skill keyed to the span's category; otherwise NOOP.
class SyntheticExecutorBackend final : public LlmBackend {
 public:
  explicit SyntheticExecutorBackend(std::map<std::string, std::string> keyed_templates)
      : keyed_templates_(std::move(keyed_templates)) {}
  std::string complete(const std::vector<ChatMessage>& messages,
                       const CompletionParams& params) override;
  int call_count() const { return call_count_; }

 private:
  std::map<std::string, std::string> keyed_templates_;
  int call_count_ = 0;
};

// Answer backend echoing the fact id named by the question iff some
// retrieved memory contains it; otherwise "unknown".
class SyntheticAnswerBackend final : public LlmBackend {
 public:
  std::string complete(const std::vector<ChatMessage>& messages,
                       const CompletionParams& params) override;
};

// Conversational {sessions:[{turns:[{speaker,text}]}], queries:[...]} or
// trajectory {steps:[{observation,action}], queries:[...]}. Session mode
// gives one span per session; trajectory steps are rendered and chunked at
// span_tokens. Schema violations name the offending JSON path.
Trace load_trace_json(const std::string& path, const std::string& format, int span_tokens);
Trace parse_trace(const nlohmann::json& j, const std::string& format, int span_tokens);

}  // namespace memskill
