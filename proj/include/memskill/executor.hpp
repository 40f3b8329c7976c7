#pragma once
// Skill-conditioned memory extraction: prompt construction, the chat
// backend contract, action-block parsing, and one-call span execution.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "memskill/memory_bank.hpp"
#include "memskill/skill_bank.hpp"

namespace memskill {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 2048;
};

class BackendError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               const CompletionParams& params) = 0;
};

// Renders the executor prompt with the span text, retrieved memories as
// "[i] text" lines ("(none)" when empty), and the selected skills' full
// instruction templates in selection order.
std::string build_executor_prompt(const std::string& span_text, const RetrievedSet& retrieved,
                                  const std::vector<Skill>& skills);

struct ParseResult {
  std::vector<MemoryAction> actions;
  std::vector<std::string> warnings;
};

// Splits completion text on blank lines and parses one action per block.
// Malformed blocks are skipped with a warning; never throws.
ParseResult parse_action_blocks(const std::string& text);

// Inverse of parse_action_blocks for well-formed action lists.
std::string format_action_blocks(const std::vector<MemoryAction>& actions);

struct SpanResult {
  bool failed = false;
  std::string failure_reason;
  std::vector<MemoryAction> actions;
  ApplyReport report;
  std::vector<std::string> parse_warnings;
};

// Exactly one backend call; parsed actions are applied to `bank`. On
// backend failure the bank is left unchanged and the failure is surfaced
// in the result. Actions beyond `max_actions_per_span` are dropped with a
// warning.
SpanResult execute_span(const std::string& span_text, MemoryBank& bank,
                        const RetrievedSet& retrieved, const std::vector<Skill>& selected_skills,
                        LlmBackend& backend, const Embedder& embedder,
                        const CompletionParams& params, int step, int max_actions_per_span = 32);

// Pure rule-driven backend for deterministic tests: the first rule whose
// substrings all appear in the last user message wins. Configurable from a
// JSON rule file: [{"require": [..], "response": ".."}, ...].
class ScriptedBackend final : public LlmBackend {
 public:
  struct Rule {
    std::vector<std::string> require;  // all must be substrings of the prompt
    std::string response;
  };

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {}
  static ScriptedBackend from_json_file(const std::string& path);

  void add_rule(Rule rule) { rules_.push_back(std::move(rule)); }
  void set_default_response(std::string response) { default_response_ = std::move(response); }
  int call_count() const { return call_count_; }

  std::string complete(const std::vector<ChatMessage>& messages,
                       const CompletionParams& params) override;

 private:
  std::vector<Rule> rules_;
  std::string default_response_ = "ACTION: NOOP";
  int call_count_ = 0;
};

// Backend backed by an arbitrary callable; used where rules are awkward.
class CallbackBackend final : public LlmBackend {
 public:
  using Fn = std::function<std::string(const std::string& prompt)>;
  explicit CallbackBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const std::vector<ChatMessage>& messages,
                       const CompletionParams& params) override {
    ++call_count_;
    return fn_(messages.empty() ? std::string() : messages.back().content);
  }
  int call_count() const { return call_count_; }

 private:
  Fn fn_;
  int call_count_ = 0;
};

struct ChatEndpointConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key;
  int max_retries = 3;
  int timeout_seconds = 120;
};

// OpenAI-style chat completions client with bounded retries.
class HttpChatBackend final : public LlmBackend {
 public:
  explicit HttpChatBackend(ChatEndpointConfig config) : config_(std::move(config)) {}
  std::string complete(const std::vector<ChatMessage>& messages,
                       const CompletionParams& params) override;

 private:
  ChatEndpointConfig config_;
};

}  // namespace memskill
