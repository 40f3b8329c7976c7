#include "memskill/environment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace memskill {

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::string join(const std::vector<std::string>& tokens, size_t begin, size_t end) {
  std::ostringstream out;
  for (size_t i = begin; i < end; ++i) {
    if (i > begin) out << ' ';
    out << tokens[i];
  }
  return out.str();
}

}  // namespace

std::vector<Span> chunk_text(const std::string& raw_text, int span_tokens) {
  if (span_tokens < 16) throw std::invalid_argument("chunk_text: span_tokens must be >= 16");
  auto tokens = whitespace_tokens(raw_text);
  std::vector<Span> spans;
  for (size_t begin = 0; begin < tokens.size(); begin += span_tokens) {
    size_t end = std::min(tokens.size(), begin + static_cast<size_t>(span_tokens));
    spans.push_back({static_cast<int>(spans.size()), join(tokens, begin, end)});
  }
  return spans;
}

std::vector<Span> chunk_sessions(const std::vector<std::string>& sessions) {
  std::vector<Span> spans;
  for (const auto& s : sessions) spans.push_back({static_cast<int>(spans.size()), s});
  return spans;
}

namespace {

std::vector<std::string> normalize_tokens(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c) || std::isspace(c))
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    // punctuation is dropped without inserting a break, SQuAD-style
  }
  std::vector<std::string> out;
  for (auto& tok : whitespace_tokens(cleaned))
    if (tok != "a" && tok != "an" && tok != "the") out.push_back(std::move(tok));
  return out;
}

}  // namespace

double token_f1(const std::string& prediction, const std::string& gold) {
  auto p = normalize_tokens(prediction);
  auto g = normalize_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;

  std::map<std::string, int> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  int overlap = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      ++overlap;
      --it->second;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / p.size();
  double recall = static_cast<double>(overlap) / g.size();
  return 2.0 * precision * recall / (precision + recall);
}

std::string build_answer_prompt(const RetrievedSet& retrieved, const std::string& question) {
  std::ostringstream out;
  out << "Context:\n";
  if (retrieved.empty()) out << "(none)\n";
  for (const auto& e : retrieved.items) out << "[" << e.local_index << "] " << e.text << "\n";
  out << "\n"
      << "Based on the above context, write an answer in the form of a short phrase "
         "for the following question. Answer with exact words from the context whenever "
         "possible.\n"
      << "\n"
      << "Question: " << question << " Short answer:";
  return out.str();
}

EvalResult evaluate_memory(const MemoryBank& bank, const std::vector<Query>& queries,
                           LlmBackend& answer_backend, const Embedder& embedder, int top_r) {
  if (queries.empty()) throw std::invalid_argument("evaluate_memory: no queries");
  EvalResult result;
  CompletionParams params;
  for (const auto& q : queries) {
    QueryRecord rec;
    rec.query_id = q.id;
    rec.query_text = q.text;
    rec.ground_truth = q.ground_truth;
    RetrievedSet retrieved = bank.retrieve(embedder.embed(q.text), top_r);
    for (const auto& e : retrieved.items) {
      rec.retrieved_ids.push_back(e.item_id);
      rec.retrieved_texts.push_back(e.text);
    }
    try {
      rec.prediction =
          answer_backend.complete({{"user", build_answer_prompt(retrieved, q.text)}}, params);
      rec.reward = token_f1(rec.prediction, q.ground_truth);
    } catch (const std::exception&) {
      rec.backend_failed = true;
      rec.reward = 0.0;
    }
    result.mean_reward += rec.reward;
    result.records.push_back(std::move(rec));
  }
  result.mean_reward /= static_cast<double>(result.records.size());
  return result;
}

SyntheticEnv make_synthetic(const SyntheticSpec& spec, const SkillBank& bank) {
  if (spec.categories.size() < 2)
    throw std::invalid_argument("make_synthetic: need at least 2 categories");
  if (spec.spans_per_trace < 1 || spec.facts_per_span < 1 || spec.num_traces < 1)
    throw std::invalid_argument("make_synthetic: counts must be positive");

  SyntheticEnv env;
  for (const auto& [category, skill_name] : spec.skill_keying) {
    // a keyed skill the bank does not hold yet is the evolved-bank case:
    // the category stays untemplated until the caller fills it in
    if (const Skill* s = bank.find(skill_name)) env.keyed_templates[category] = s->instruction_template;
  }

  int n_cats = static_cast<int>(spec.categories.size());
  for (int t = 0; t < spec.num_traces; ++t) {
    Trace trace;
    trace.trace_id = "synth_" + std::to_string(t);
    for (int s = 0; s < spec.spans_per_trace; ++s) {
      const std::string& cat = spec.categories[(t + s) % n_cats];
      std::ostringstream text;
      text << "[CAT:" << cat << "] Session notes for trace " << t << " part " << s << ".";
      for (int f = 0; f < spec.facts_per_span; ++f) {
        std::string fact = "fact_" + cat + "_" + std::to_string(t) + "_" + std::to_string(s) +
                           "_" + std::to_string(f);
        text << " Remember " << fact << ".";
        Query q;
        q.id = trace.trace_id + "_q" + std::to_string(trace.queries.size());
        q.text = "Recall the stored value " + fact;
        q.ground_truth = fact;
        q.metadata["category"] = cat;
        trace.queries.push_back(std::move(q));
      }
      trace.spans.push_back({s, text.str()});
    }
    env.traces.push_back(std::move(trace));
  }
  return env;
}

namespace {

const std::regex kFactRe("fact_[A-Za-z0-9_]+");
const std::regex kCatRe("\\[CAT:([A-Za-z0-9_]+)\\]");

std::string chunk_section(const std::string& prompt) {
  size_t begin = prompt.find("Input Text Chunk:");
  size_t end = prompt.find("Retrieved Memories");
  if (begin == std::string::npos) return prompt;
  if (end == std::string::npos || end < begin) end = prompt.size();
  return prompt.substr(begin, end - begin);
}

}  // namespace

std::string SyntheticExecutorBackend::complete(const std::vector<ChatMessage>& messages,
                                               const CompletionParams&) {
  ++call_count_;
  const std::string& prompt = messages.empty() ? std::string() : messages.back().content;
  std::string chunk = chunk_section(prompt);

  std::smatch cat_match;
  if (!std::regex_search(chunk, cat_match, kCatRe)) return "ACTION: NOOP";
  auto it = keyed_templates_.find(cat_match[1].str());
  if (it == keyed_templates_.end() || prompt.find(it->second) == std::string::npos)
    return "ACTION: NOOP";

  std::ostringstream out;
  bool first = true;
  for (auto m = std::sregex_iterator(chunk.begin(), chunk.end(), kFactRe);
       m != std::sregex_iterator(); ++m) {
    if (!first) out << "\n\n";
    out << "ACTION: INSERT\nMEMORY_ITEM: " << m->str();
    first = false;
  }
  return first ? "ACTION: NOOP" : out.str();
}

std::string SyntheticAnswerBackend::complete(const std::vector<ChatMessage>& messages,
                                             const CompletionParams&) {
  const std::string& prompt = messages.empty() ? std::string() : messages.back().content;
  size_t q_pos = prompt.find("Question:");
  if (q_pos == std::string::npos) return "unknown";
  std::string context = prompt.substr(0, q_pos);
  std::string question = prompt.substr(q_pos);

  std::smatch fact_match;
  if (!std::regex_search(question, fact_match, kFactRe)) return "unknown";
  const std::string fact = fact_match.str();
  return context.find(fact) != std::string::npos ? fact : "unknown";
}

namespace {

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& key,
                                    const std::string& path) {
  if (!j.is_object() || !j.contains(key))
    throw std::runtime_error("trace schema: missing field " + path + "." + key);
  return j.at(key);
}

std::string string_field(const nlohmann::json& j, const std::string& key,
                         const std::string& path) {
  const auto& v = require_field(j, key, path);
  if (!v.is_string())
    throw std::runtime_error("trace schema: " + path + "." + key + " must be a string");
  return v.get<std::string>();
}

std::vector<Query> parse_queries(const nlohmann::json& j) {
  std::vector<Query> queries;
  const auto& arr = require_field(j, "queries", "$");
  if (!arr.is_array()) throw std::runtime_error("trace schema: $.queries must be an array");
  for (size_t i = 0; i < arr.size(); ++i) {
    std::string path = "$.queries[" + std::to_string(i) + "]";
    const auto& jq = arr[i];
    Query q;
    q.id = jq.contains("id") ? jq.at("id").get<std::string>() : "q" + std::to_string(i);
    q.text = jq.contains("question") ? string_field(jq, "question", path)
                                     : string_field(jq, "text", path);
    q.ground_truth = jq.contains("answer") ? string_field(jq, "answer", path)
                                           : string_field(jq, "ground_truth", path);
    if (jq.contains("metadata"))
      for (const auto& [k, v] : jq.at("metadata").items()) q.metadata[k] = v.get<std::string>();
    queries.push_back(std::move(q));
  }
  for (size_t i = 0; i < queries.size(); ++i)
    for (size_t k = i + 1; k < queries.size(); ++k)
      if (queries[i].id == queries[k].id)
        throw std::runtime_error("trace schema: duplicate query id '" + queries[i].id + "'");
  return queries;
}

}  // namespace

Trace parse_trace(const nlohmann::json& j, const std::string& format, int span_tokens) {
  Trace trace;
  trace.trace_id = j.contains("trace_id") ? j.at("trace_id").get<std::string>() : "trace";

  if (format == "conversational") {
    const auto& sessions = require_field(j, "sessions", "$");
    if (!sessions.is_array())
      throw std::runtime_error("trace schema: $.sessions must be an array");
    std::vector<std::string> rendered;
    for (size_t s = 0; s < sessions.size(); ++s) {
      std::string spath = "$.sessions[" + std::to_string(s) + "]";
      const auto& turns = require_field(sessions[s], "turns", spath);
      if (!turns.is_array())
        throw std::runtime_error("trace schema: " + spath + ".turns must be an array");
      std::ostringstream text;
      for (size_t t = 0; t < turns.size(); ++t) {
        std::string tpath = spath + ".turns[" + std::to_string(t) + "]";
        if (t > 0) text << "\n";
        text << string_field(turns[t], "speaker", tpath) << ": "
             << string_field(turns[t], "text", tpath);
      }
      rendered.push_back(text.str());
    }
    trace.spans = chunk_sessions(rendered);
  } else if (format == "trajectory") {
    const auto& steps = require_field(j, "steps", "$");
    if (!steps.is_array()) throw std::runtime_error("trace schema: $.steps must be an array");
    std::ostringstream text;
    for (size_t s = 0; s < steps.size(); ++s) {
      std::string spath = "$.steps[" + std::to_string(s) + "]";
      if (s > 0) text << "\n";
      text << "Observation: " << string_field(steps[s], "observation", spath)
           << "\nAction: " << string_field(steps[s], "action", spath);
    }
    trace.spans = chunk_text(text.str(), span_tokens);
  } else {
    throw std::invalid_argument("parse_trace: unknown format '" + format + "'");
  }

  trace.queries = parse_queries(j);
  return trace;
}

Trace load_trace_json(const std::string& path, const std::string& format, int span_tokens) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("trace file " + path + ": " + e.what());
  }
  return parse_trace(j, format, span_tokens);
}

}  // namespace memskill
