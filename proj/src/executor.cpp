#include "memskill/executor.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace memskill {

namespace {

const char* kExecutorPromptHeader =
    "You are a memory management executor. Apply the selected skills to the input text "
    "chunk and retrieved memories, then output memory actions.";

const char* kExecutorPromptFooter =
    "Guidelines:\n"
    "- Apply any skill as needed; a skill may be used multiple times.\n"
    "- Read the input text chunk carefully line by line and apply any skill as needed.\n"
    "- Only use action types supported by the selected skills.\n"
    "- MEMORY_INDEX is 0-based and must reference the retrieved memories list.\n"
    "- Output only action blocks in the format below.\n"
    "- Do not include explanations or REASONING lines.\n"
    "\n"
    "Output format (repeat as needed). Use ONE block per action and separate blocks with "
    "a blank line:\n"
    "\n"
    "INSERT block:\n"
    "ACTION: INSERT\n"
    "MEMORY_ITEM: [concise but complete summary with essential details]\n"
    "\n"
    "UPDATE block:\n"
    "ACTION: UPDATE\n"
    "MEMORY_INDEX: [0-based index]\n"
    "UPDATED_MEMORY: [concise but complete merged summary with essential updates]\n"
    "\n"
    "DELETE block:\n"
    "ACTION: DELETE\n"
    "MEMORY_INDEX: [0-based index]";

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

// Case-insensitive "KEY:" prefix match; returns the trimmed value.
bool field_value(const std::string& line, const std::string& key, std::string* value) {
  if (line.size() < key.size() + 1) return false;
  if (upper(line.substr(0, key.size())) != key) return false;
  if (line[key.size()] != ':') return false;
  *value = trim(line.substr(key.size() + 1));
  return true;
}

}  // namespace

std::string build_executor_prompt(const std::string& span_text, const RetrievedSet& retrieved,
                                  const std::vector<Skill>& skills) {
  if (skills.empty()) throw std::invalid_argument("build_executor_prompt: no skills selected");
  std::ostringstream out;
  out << kExecutorPromptHeader << "\n\n";
  out << "Input Text Chunk:\n" << span_text << "\n\n";
  out << "Retrieved Memories (0-based index):\n";
  if (retrieved.empty()) {
    out << "(none)\n";
  } else {
    for (const auto& e : retrieved.items) out << "[" << e.local_index << "] " << e.text << "\n";
  }
  out << "\nSelected Skills:\n";
  for (size_t i = 0; i < skills.size(); ++i) {
    out << skills[i].instruction_template << "\n";
    if (i + 1 < skills.size()) out << "\n";
  }
  out << "\n" << kExecutorPromptFooter;
  return out.str();
}

ParseResult parse_action_blocks(const std::string& text) {
  ParseResult result;

  std::vector<std::vector<std::string>> blocks;
  {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> current;
    while (std::getline(in, line)) {
      if (trim(line).empty()) {
        if (!current.empty()) blocks.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(line);
      }
    }
    if (!current.empty()) blocks.push_back(std::move(current));
  }

  for (const auto& block : blocks) {
    std::string action;
    size_t header = block.size();
    for (size_t i = 0; i < block.size(); ++i) {
      if (field_value(block[i], "ACTION", &action)) {
        header = i;
        break;
      }
    }
    if (header == block.size()) {
      result.warnings.push_back("block without ACTION header skipped: '" +
                                trim(block.front()) + "'");
      continue;
    }
    action = upper(action);

    auto find_field = [&](const std::string& key, std::string* value) {
      for (size_t i = header + 1; i < block.size(); ++i)
        if (field_value(block[i], key, value)) return true;
      return false;
    };
    auto parse_index = [&](const std::string& raw, int* index) {
      try {
        size_t pos = 0;
        int v = std::stoi(raw, &pos);
        if (pos != raw.size()) return false;
        *index = v;
        return true;
      } catch (const std::exception&) {
        return false;
      }
    };

    if (action == "INSERT") {
      std::string item;
      if (!find_field("MEMORY_ITEM", &item)) {
        result.warnings.push_back("INSERT block missing MEMORY_ITEM; skipped");
        continue;
      }
      result.actions.push_back(InsertAction{item});
    } else if (action == "UPDATE") {
      std::string raw_index, memory;
      int index = 0;
      if (!find_field("MEMORY_INDEX", &raw_index) || !parse_index(raw_index, &index)) {
        result.warnings.push_back("UPDATE block with missing or non-integer MEMORY_INDEX; skipped");
        continue;
      }
      if (!find_field("UPDATED_MEMORY", &memory)) {
        result.warnings.push_back("UPDATE block missing UPDATED_MEMORY; skipped");
        continue;
      }
      result.actions.push_back(UpdateAction{index, memory});
    } else if (action == "DELETE") {
      std::string raw_index;
      int index = 0;
      if (!find_field("MEMORY_INDEX", &raw_index) || !parse_index(raw_index, &index)) {
        result.warnings.push_back("DELETE block with missing or non-integer MEMORY_INDEX; skipped");
        continue;
      }
      result.actions.push_back(DeleteAction{index});
    } else if (action == "NOOP") {
      result.actions.push_back(NoopAction{});
    } else {
      result.warnings.push_back("unknown action '" + action + "' skipped");
    }
  }
  return result;
}

std::string format_action_blocks(const std::vector<MemoryAction>& actions) {
  std::ostringstream out;
  for (size_t i = 0; i < actions.size(); ++i) {
    if (i > 0) out << "\n";
    const auto& action = actions[i];
    if (const auto* ins = std::get_if<InsertAction>(&action)) {
      out << "ACTION: INSERT\nMEMORY_ITEM: " << ins->text << "\n";
    } else if (const auto* upd = std::get_if<UpdateAction>(&action)) {
      out << "ACTION: UPDATE\nMEMORY_INDEX: " << upd->local_index
          << "\nUPDATED_MEMORY: " << upd->text << "\n";
    } else if (const auto* del = std::get_if<DeleteAction>(&action)) {
      out << "ACTION: DELETE\nMEMORY_INDEX: " << del->local_index << "\n";
    } else {
      out << "ACTION: NOOP\n";
    }
  }
  return out.str();
}

SpanResult execute_span(const std::string& span_text, MemoryBank& bank,
                        const RetrievedSet& retrieved, const std::vector<Skill>& selected_skills,
                        LlmBackend& backend, const Embedder& embedder,
                        const CompletionParams& params, int step, int max_actions_per_span) {
  SpanResult result;
  std::string prompt = build_executor_prompt(span_text, retrieved, selected_skills);
  std::string completion;
  try {
    completion = backend.complete({{"user", prompt}}, params);
  } catch (const std::exception& e) {
    result.failed = true;
    result.failure_reason = e.what();
    return result;
  }
  ParseResult parsed = parse_action_blocks(completion);
  result.parse_warnings = parsed.warnings;
  if (static_cast<int>(parsed.actions.size()) > max_actions_per_span) {
    result.parse_warnings.push_back(
        "span emitted " + std::to_string(parsed.actions.size()) + " actions; capped at " +
        std::to_string(max_actions_per_span));
    parsed.actions.resize(max_actions_per_span);
  }
  result.actions = parsed.actions;
  result.report = bank.apply_actions(retrieved, parsed.actions, embedder, step);
  return result;
}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>& messages,
                                      const CompletionParams&) {
  ++call_count_;
  const std::string& prompt = messages.empty() ? std::string() : messages.back().content;
  for (const auto& rule : rules_) {
    bool all = true;
    for (const auto& needle : rule.require)
      if (prompt.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    if (all) return rule.response;
  }
  return default_response_;
}

ScriptedBackend ScriptedBackend::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scripted backend rules: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  std::vector<Rule> rules;
  for (const auto& jr : j) {
    Rule rule;
    for (const auto& s : jr.at("require")) rule.require.push_back(s.get<std::string>());
    rule.response = jr.at("response").get<std::string>();
    rules.push_back(std::move(rule));
  }
  return ScriptedBackend(std::move(rules));
}

std::string HttpChatBackend::complete(const std::vector<ChatMessage>& messages,
                                      const CompletionParams& params) {
  nlohmann::json req;
  req["model"] = config_.model;
  req["messages"] = nlohmann::json::array();
  for (const auto& m : messages)
    req["messages"].push_back({{"role", m.role}, {"content", m.content}});
  req["temperature"] = params.temperature;
  req["max_tokens"] = params.max_tokens;
  const std::string body = req.dump();

  httplib::Client client(config_.host, config_.port);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  httplib::Result res;
  int attempts = 0;
  for (; attempts < std::max(1, config_.max_retries); ++attempts) {
    res = client.Post(config_.path, headers, body, "application/json");
    if (res && res->status == 200) break;
  }
  if (!res || res->status != 200)
    throw BackendError("chat completion failed after " + std::to_string(attempts) + " attempts");

  try {
    nlohmann::json resp = nlohmann::json::parse(res->body);
    return resp.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("chat completion: malformed response: ") + e.what());
  }
}

}  // namespace memskill
