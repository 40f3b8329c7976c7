#include "memskill/designer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "memskill/controller.hpp"

namespace memskill {

void HardCaseBuffer::record_case(const CaseObservation& obs, int step) {
  if (obs.reward >= fail_threshold_) {
    cases_.erase(obs.query);  // a success clears the entry
    return;
  }
  auto it = cases_.find(obs.query);
  if (it != cases_.end()) {
    HardCase& c = it->second;
    ++c.failure_count;
    c.reward = obs.reward;
    c.prediction = obs.prediction;
    c.retrieved_ids = obs.retrieved_ids;
    c.retrieved_texts = obs.retrieved_texts;
    c.last_seen_step = step;
  } else {
    HardCase c;
    c.query = obs.query;
    c.query_embedding = obs.query_embedding;
    c.ground_truth = obs.ground_truth;
    c.prediction = obs.prediction;
    c.retrieved_ids = obs.retrieved_ids;
    c.retrieved_texts = obs.retrieved_texts;
    c.reward = obs.reward;
    c.failure_count = 1;
    c.last_seen_step = step;
    cases_.emplace(obs.query, std::move(c));
    evict_to_capacity();
  }
}

void HardCaseBuffer::evict_to_capacity() {
  while (static_cast<int>(cases_.size()) > capacity_) {
    auto victim = cases_.end();
    for (auto it = cases_.begin(); it != cases_.end(); ++it) {
      if (victim == cases_.end()) {
        victim = it;
        continue;
      }
      double d = difficulty(it->second), dv = difficulty(victim->second);
      if (d < dv || (d == dv && it->second.last_seen_step < victim->second.last_seen_step))
        victim = it;
    }
    cases_.erase(victim);
  }
}

std::vector<std::string> HardCaseBuffer::expire(int current_step) {
  std::vector<std::string> evicted;
  for (auto it = cases_.begin(); it != cases_.end();) {
    if (it->second.last_seen_step < current_step - max_age_) {
      evicted.push_back(it->first);
      it = cases_.erase(it);
    } else {
      ++it;
    }
  }
  while (static_cast<int>(cases_.size()) > capacity_) {
    auto victim = cases_.end();
    for (auto it = cases_.begin(); it != cases_.end(); ++it) {
      if (victim == cases_.end()) {
        victim = it;
        continue;
      }
      double d = difficulty(it->second), dv = difficulty(victim->second);
      if (d < dv || (d == dv && it->second.last_seen_step < victim->second.last_seen_step))
        victim = it;
    }
    evicted.push_back(victim->first);
    cases_.erase(victim);
  }
  return evicted;
}

std::vector<HardCase> HardCaseBuffer::cases() const {
  std::vector<HardCase> out;
  out.reserve(cases_.size());
  for (const auto& [_, c] : cases_) out.push_back(c);
  return out;
}

std::vector<std::vector<HardCase>> cluster_cases(const std::vector<HardCase>& cases, int k,
                                                 uint64_t seed) {
  if (k < 1) throw std::invalid_argument("cluster_cases: k must be >= 1");
  int n = static_cast<int>(cases.size());
  if (n == 0) return {};
  k = std::min(k, n);

  Rng rng(seed);
  int dim = static_cast<int>(cases[0].query_embedding.size());

  // k-means++ seeding
  std::vector<Vec> centroids;
  centroids.push_back(cases[rng.uniform_int(n)].query_embedding);
  std::vector<double> dist2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centroids)
        best = std::min(best, (cases[i].query_embedding - c).squaredNorm());
      dist2[i] = best;
      total += best;
    }
    int pick = 0;
    if (total > 0.0) {
      double r = rng.uniform01() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(n);
    }
    centroids.push_back(cases[pick].query_embedding);
  }

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (int c = 0; c < k; ++c) {
        double d = (cases[i].query_embedding - centroids[c]).squaredNorm();
        if (d < best) {
          best = d;
          assignment[i] = c;
        }
      }
    }
    std::vector<Vec> next(k, Vec::Zero(dim));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      next[assignment[i]] += cases[i].query_embedding;
      ++counts[assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next[c] /= static_cast<double>(counts[c]);
      } else {
        // reseed an empty cluster from the point farthest from its centroid
        int farthest = 0;
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = (cases[i].query_embedding - centroids[assignment[i]]).squaredNorm();
          if (d > best) {
            best = d;
            farthest = i;
          }
        }
        next[c] = cases[farthest].query_embedding;
        assignment[farthest] = c;
      }
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) shift += (next[c] - centroids[c]).norm();
    centroids = std::move(next);
    if (shift < 1e-6) break;
  }

  // final assignment against converged centroids
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::max();
    for (int c = 0; c < k; ++c) {
      double d = (cases[i].query_embedding - centroids[c]).squaredNorm();
      if (d < best) {
        best = d;
        assignment[i] = c;
      }
    }
  }

  std::vector<std::vector<HardCase>> clusters(k);
  for (int i = 0; i < n; ++i) clusters[assignment[i]].push_back(cases[i]);
  clusters.erase(std::remove_if(clusters.begin(), clusters.end(),
                                [](const auto& c) { return c.empty(); }),
                 clusters.end());
  return clusters;
}

std::vector<HardCase> select_representatives(const std::vector<std::vector<HardCase>>& clusters,
                                             int per_cluster, int max_total) {
  if (per_cluster < 1) throw std::invalid_argument("select_representatives: per_cluster >= 1");
  std::vector<std::vector<HardCase>> ranked = clusters;
  for (auto& cluster : ranked) {
    std::sort(cluster.begin(), cluster.end(), [](const HardCase& a, const HardCase& b) {
      double da = difficulty(a), db = difficulty(b);
      if (da != db) return da > db;
      if (a.failure_count != b.failure_count) return a.failure_count > b.failure_count;
      return a.last_seen_step > b.last_seen_step;
    });
    if (static_cast<int>(cluster.size()) > per_cluster) cluster.resize(per_cluster);
  }
  std::vector<HardCase> out;
  for (int round = 0; round < per_cluster; ++round)
    for (const auto& cluster : ranked)
      if (round < static_cast<int>(cluster.size()) &&
          static_cast<int>(out.size()) < max_total)
        out.push_back(cluster[round]);
  return out;
}

namespace {

std::string render_feedback(const std::vector<std::string>& feedback) {
  if (feedback.empty()) return "(none)";
  std::ostringstream out;
  size_t begin = feedback.size() > 5 ? feedback.size() - 5 : 0;  // last 5 cycles
  for (size_t i = begin; i < feedback.size(); ++i) {
    out << "- " << feedback[i];
    if (i + 1 < feedback.size()) out << "\n";
  }
  return out.str();
}

std::string render_cases(const std::vector<HardCase>& cases) {
  std::ostringstream out;
  for (size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    out << "Case " << (i + 1) << ":\n";
    out << "Query: " << c.query << "\n";
    out << "Ground Truth: " << c.ground_truth << "\n";
    out << "Prediction: " << c.prediction << "\n";
    out << "Reward: " << c.reward << "\n";
    out << "Failure Count: " << c.failure_count << "\n";
    out << "Retrieved Memories:\n";
    if (c.retrieved_texts.empty()) out << "(none)\n";
    for (size_t m = 0; m < c.retrieved_texts.size(); ++m)
      out << "[" << m << "] " << c.retrieved_texts[m] << "\n";
    if (i + 1 < cases.size()) out << "\n";
  }
  return out.str();
}

std::string render_bank_description(const SkillBank& bank) {
  std::ostringstream out;
  for (int i = 0; i < bank.size(); ++i) {
    const auto& s = bank.skills[i];
    out << "- " << s.name << " (" << to_string(s.update_type) << "): " << s.description;
    if (i + 1 < bank.size()) out << "\n";
  }
  return out.str();
}

std::string render_bank_full(const SkillBank& bank) {
  std::ostringstream out;
  for (int i = 0; i < bank.size(); ++i) {
    const auto& s = bank.skills[i];
    out << "Operation: " << s.name << "\n";
    out << "Update type: " << to_string(s.update_type) << "\n";
    out << "Description: " << s.description << "\n";
    out << "Instruction template:\n" << s.instruction_template << "\n";
    if (i + 1 < bank.size()) out << "\n";
  }
  return out.str();
}

// Tolerates ```json fences around an otherwise strict JSON document.
std::string strip_fences(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return text;
  if (text.compare(begin, 3, "```") != 0) return text;
  size_t line_end = text.find('\n', begin);
  if (line_end == std::string::npos) return text;
  size_t close = text.rfind("```");
  if (close <= line_end) return text;
  return text.substr(line_end + 1, close - line_end - 1);
}

}  // namespace

std::string build_analysis_prompt(const SkillBank& bank,
                                  const std::vector<std::string>& evolution_feedback,
                                  const std::vector<HardCase>& cases, int max_changes) {
  std::ostringstream out;
  out <<
      "You are an expert analyst for a memory-augmented QA system. Analyze the failure "
      "cases below to identify why the system failed and how the memory management skills "
      "should change.\n"
      "\n"
      "## How This System Works\n"
      "1. **Memory Storage**: The system applies memory management skills to decide what "
      "information to store from the text chunk.\n"
      "2. **Memory Retrieval**: At question time, it retrieves the most relevant memories "
      "by semantic similarity.\n"
      "3. **Answer Generation**: An LLM answers using the retrieved memories.\n"
      "\n"
      "Failures can occur at any stage:\n"
      "- **Storage failure**: Important information was never stored (skill missing or "
      "misapplied)\n"
      "- **Retrieval failure**: Relevant memory exists but was not retrieved (embedding "
      "mismatch)\n"
      "- **Memory quality failure**: Memory exists but is too vague or incomplete to "
      "answer\n"
      "\n"
      "## Current Memory Management Skills\n"
      << render_bank_description(bank) << "\n"
      "\n"
      "## Operation Evolution Feedback\n"
      << render_feedback(evolution_feedback) << "\n"
      "\n"
      "## Failure Cases (" << cases.size() << " cases)\n"
      << render_cases(cases) <<
      "\n"
      "## Analysis Instructions\n"
      "This is round 1 of a reflection loop. Produce a strong initial analysis that can "
      "be critiqued and improved.\n"
      "1. For each case, check whether the retrieved memories contain the answer or the "
      "needed evidence.\n"
      "2. If missing, decide whether it was never stored (storage failure) or stored but "
      "too weak (memory quality failure).\n"
      "3. If the answer is present but not retrieved, label it retrieval failure and "
      "avoid changing skills unless the pattern repeats.\n"
      "4. Group cases into patterns tied to information types, entities, temporal "
      "details, or constraints.\n"
      "5. For each pattern, propose a concrete skill change: add a new skill or refine an "
      "existing one to capture missing details.\n"
      "6. Provide up to " << max_changes << " recommendations total (use fewer if only "
      "one change is justified).\n"
      "\n"
      "## Output Format\n"
      "Provide your analysis as JSON:\n"
      "{\n"
      "    \"failure_patterns\": [\n"
      "        {\n"
      "            \"pattern_name\": \"[descriptive name for this failure pattern]\",\n"
      "            \"affected_cases\": [list of case numbers, e.g., 1, 3, 5],\n"
      "            \"root_cause\": \"[storage_failure|retrieval_failure|memory_quality_failure]\",\n"
      "            \"explanation\": \"[why this pattern of failures is occurring]\",\n"
      "            \"potential_fix\": \"[what kind of operation change could address this]\"\n"
      "        }\n"
      "    ],\n"
      "    \"recommendations\": [\n"
      "        {\n"
      "            \"action\": \"[add_new_operation|refine_existing_operation|no_change]\",\n"
      "            \"target_operation\": \"[operation name to refine, or null if adding new]\",\n"
      "            \"rationale\": \"[clear explanation of why this is the best improvement]\",\n"
      "            \"priority\": \"[high|medium|low]\"\n"
      "        }\n"
      "    ],\n"
      "    \"summary\": \"[1-2 sentence summary of main findings]\"\n"
      "}\n"
      "\n"
      "Focus on actionable insights. What specific change to the skill bank would prevent "
      "these failures?\n"
      "\n"
      "Output ONLY the JSON, no other text.";
  return out.str();
}

std::string build_refinement_prompt(const std::string& analysis_json, const SkillBank& bank,
                                    const std::vector<std::string>& evolution_feedback,
                                    int max_changes) {
  std::ostringstream out;
  out <<
      "Based on the failure analysis, propose a specific improvement to the memory "
      "operation bank.\n"
      "\n"
      "## Failure Analysis (from Stage 1)\n"
      << analysis_json << "\n"
      "\n"
      "## Current Operation Bank\n"
      << render_bank_full(bank) << "\n"
      "## Operation Evolution Feedback\n"
      << render_feedback(evolution_feedback) << "\n"
      "\n"
      "## Your Task\n"
      "Propose up to " << max_changes << " improvements based on the analysis:\n"
      "\n"
      "**Option A - Add New Operation**: Create a new operation if the analysis shows a "
      "capability gap (e.g., certain information types are not being captured).\n"
      "**Option B - Refine Existing Operation**: Improve an existing operation's "
      "instruction template if the analysis shows it's not working well (e.g., memories "
      "are too vague, missing key details).\n"
      "**Option C - No Change**: If the failures are due to retrieval issues (not "
      "operation issues), or if the current operations are already well-designed.\n"
      "\n"
      "## CRITICAL Requirements\n"
      "1. instruction_template MUST be a skill-style guide and MUST NOT include context "
      "placeholders (the executor injects the text chunk and retrieved memories)\n"
      "2. instruction_template MUST clearly state purpose, when to use, and constraints\n"
      "3. instruction_template MUST specify the allowed action type (INSERT or UPDATE "
      "only)\n"
      "4. For new operations, `update_type` must be either \"insert\" or \"update\" "
      "(delete and noop operations are not evolved at this time)\n"
      "5. Only propose operations with update_type \"insert\" or \"update\"\n"
      "6. Avoid labels like \"ENHANCED\", \"ADVANCED\", or other marketing adjectives in "
      "descriptions or templates; keep phrasing neutral and task-specific\n"
      "7. Do NOT embed output blocks; the executor handles output formatting and can "
      "apply the skill multiple times\n"
      "8. The number of changes in the list MUST be less than " << max_changes << "\n"
      "9. Do NOT modify the same operation more than once in a single response, and do "
      "NOT refine an operation you add in the same response\n"
      "\n"
      "## Example of a Well-Designed Insert Operation\n"
      "{\n"
      "    \"name\": \"extract_personal_preferences\",\n"
      "    \"description\": \"Memory management skill for capturing personal preferences "
      "and habits mentioned in the text chunk.\",\n"
      "    \"update_type\": \"insert\",\n"
      "    \"instruction_template\": \"Skill: Insert Preferences. Purpose: Capture "
      "personal preferences, habits, or opinions stated in the text chunk. When to use: "
      "The text chunk mentions likes, dislikes, routines, or goals tied to a person. How "
      "to apply: Attribute the preference to the correct person. Keep the preference "
      "specific and actionable. Constraints: Avoid one-off or ambiguous statements. "
      "Action type: INSERT only.\"\n"
      "}\n"
      "\n"
      "## Output Format\n"
      "Respond with ONE of these JSON structures:\n"
      "\n"
      "### One or more changes (up to " << max_changes << "):\n"
      "{\n"
      "    \"action\": \"apply_changes\",\n"
      "    \"summary\": \"[overall rationale for the set of changes]\",\n"
      "    \"changes\": [\n"
      "        {\n"
      "            \"action\": \"add_new\",\n"
      "            \"new_operation\": {\n"
      "                \"name\": \"[snake_case_name]\",\n"
      "                \"description\": \"[what it does and when to use it]\",\n"
      "                \"instruction_template\": \"[skill-style instruction template]\",\n"
      "                \"update_type\": \"[insert|update]\",\n"
      "                \"reasoning\": \"[how this addresses the identified failures]\"\n"
      "            }\n"
      "        },\n"
      "        {\n"
      "            \"action\": \"refine_existing\",\n"
      "            \"refined_operation\": {\n"
      "                \"name\": \"[existing_operation_name]\",\n"
      "                \"changes\": {\n"
      "                    \"description\": \"[improved description]\",\n"
      "                    \"instruction_template\": \"[improved template]\"\n"
      "                },\n"
      "                \"reasoning\": \"[how these changes address the identified failures]\"\n"
      "            }\n"
      "        }\n"
      "    ]\n"
      "}\n"
      "\n"
      "### No changes needed:\n"
      "{\n"
      "    \"action\": \"no_change\",\n"
      "    \"reasoning\": \"[why the current operations are sufficient]\"\n"
      "}\n"
      "\n"
      "## Instruction Template Structure\n"
      "When writing instruction templates, follow this structure:\n"
      "\n"
      "Skill: [Short skill name]\n"
      "Purpose: [What this skill does]\n"
      "When to use:\n"
      "- [Trigger 1]\n"
      "- [Trigger 2]\n"
      "How to apply:\n"
      "- [Step 1]\n"
      "- [Step 2]\n"
      "Constraints:\n"
      "- [What to avoid]\n"
      "Action type: [INSERT only | UPDATE only]\n"
      "\n"
      "Output ONLY the JSON, no other text.";
  return out.str();
}

EvolutionProposal parse_proposal_json(const std::string& text, const SkillBank& bank,
                                      int max_changes, bool strict,
                                      std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  nlohmann::json j = nlohmann::json::parse(strip_fences(text));
  EvolutionProposal proposal;
  std::string action = j.at("action").get<std::string>();
  if (action == "no_change") {
    proposal.action = EvolutionProposal::Action::NoChange;
    if (j.contains("reasoning")) proposal.summary = j["reasoning"].get<std::string>();
    return proposal;
  }
  if (action != "apply_changes")
    throw std::runtime_error("proposal: unknown action '" + action + "'");

  proposal.action = EvolutionProposal::Action::ApplyChanges;
  if (j.contains("summary")) proposal.summary = j["summary"].get<std::string>();
  const auto& changes = j.at("changes");
  if (static_cast<int>(changes.size()) > max_changes) {
    if (strict)
      throw std::runtime_error("proposal has " + std::to_string(changes.size()) +
                               " changes, max is " + std::to_string(max_changes));
    warn("proposal has " + std::to_string(changes.size()) + " changes (max " +
         std::to_string(max_changes) + "); degraded to no_change");
    proposal.action = EvolutionProposal::Action::NoChange;
    proposal.changes.clear();
    return proposal;
  }

  std::vector<std::string> targets;
  auto seen = [&](const std::string& name) {
    return std::find(targets.begin(), targets.end(), name) != targets.end();
  };

  for (const auto& jc : changes) {
    try {
      std::string kind = jc.at("action").get<std::string>();
      if (kind == "add_new") {
        const auto& op = jc.at("new_operation");
        AddChange add;
        add.name = op.at("name").get<std::string>();
        add.description = op.at("description").get<std::string>();
        add.instruction_template = op.at("instruction_template").get<std::string>();
        add.update_type = update_type_from_string(op.at("update_type").get<std::string>());
        if (op.contains("reasoning")) add.reasoning = op["reasoning"].get<std::string>();
        if (add.update_type != UpdateType::Insert && add.update_type != UpdateType::Update)
          throw std::runtime_error("disallowed update_type for new operation");
        if (bank.find(add.name)) throw std::runtime_error("name collides with existing skill");
        if (seen(add.name)) throw std::runtime_error("duplicate target in proposal");
        targets.push_back(add.name);
        proposal.changes.emplace_back(std::move(add));
      } else if (kind == "refine_existing") {
        const auto& op = jc.at("refined_operation");
        RefineChange refine;
        refine.name = op.at("name").get<std::string>();
        const auto& ch = op.at("changes");
        if (ch.contains("description"))
          refine.new_description = ch["description"].get<std::string>();
        if (ch.contains("instruction_template"))
          refine.new_instruction_template = ch["instruction_template"].get<std::string>();
        if (op.contains("reasoning")) refine.reasoning = op["reasoning"].get<std::string>();
        if (!refine.new_description && !refine.new_instruction_template)
          throw std::runtime_error("refine with no changes");
        if (!bank.find(refine.name)) throw std::runtime_error("refine target does not exist");
        if (seen(refine.name)) throw std::runtime_error("duplicate target in proposal");
        targets.push_back(refine.name);
        proposal.changes.emplace_back(std::move(refine));
      } else {
        throw std::runtime_error("unknown change action '" + kind + "'");
      }
    } catch (const std::exception& e) {
      if (strict) throw;
      warn(std::string("dropped invalid change entry: ") + e.what());
    }
  }
  if (proposal.changes.empty()) proposal.action = EvolutionProposal::Action::NoChange;
  return proposal;
}

EvolutionOutcome run_evolution(const SkillBank& bank, const HardCaseBuffer& buffer,
                               LlmBackend& backend, const DesignerConfig& config,
                               const std::vector<std::string>& evolution_feedback, int step) {
  EvolutionOutcome outcome;
  if (buffer.empty()) {
    outcome.proposal.action = EvolutionProposal::Action::NoChange;
    return outcome;
  }

  auto cases = buffer.cases();
  auto clusters = cluster_cases(cases, std::min<int>(config.cluster_k, buffer.size()),
                                config.seed + static_cast<uint64_t>(step));
  auto reps = select_representatives(clusters, config.per_cluster, config.max_representatives);

  CompletionParams params;
  auto call_with_retry = [&](const std::string& prompt,
                             const char* stage) -> std::optional<std::string> {
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string raw;
      try {
        raw = backend.complete({{"user", prompt}}, params);
        ++outcome.backend_calls;
      } catch (const std::exception& e) {
        outcome.warnings.push_back(std::string(stage) + ": backend error: " + e.what());
        continue;
      }
      try {
        nlohmann::json::parse(strip_fences(raw));
        return raw;
      } catch (const std::exception& e) {
        outcome.warnings.push_back(std::string(stage) + ": malformed JSON: " + e.what());
      }
    }
    return std::nullopt;
  };

  std::string analysis_prompt =
      build_analysis_prompt(bank, evolution_feedback, reps, config.max_changes);
  auto analysis = call_with_retry(analysis_prompt, "analysis");
  if (!analysis) {
    outcome.proposal.action = EvolutionProposal::Action::NoChange;
    return outcome;
  }
  outcome.analysis_json = *analysis;

  std::string refinement_prompt =
      build_refinement_prompt(*analysis, bank, evolution_feedback, config.max_changes);
  auto refinement = call_with_retry(refinement_prompt, "refinement");
  if (!refinement) {
    outcome.proposal.action = EvolutionProposal::Action::NoChange;
    return outcome;
  }

  try {
    outcome.proposal = parse_proposal_json(*refinement, bank, config.max_changes,
                                           config.strict, &outcome.warnings);
  } catch (const std::exception& e) {
    if (config.strict) throw;
    outcome.warnings.push_back(std::string("proposal rejected: ") + e.what());
    outcome.proposal = {};
  }
  return outcome;
}

double tail_mean_reward(const std::vector<double>& step_rewards, int cycle_len) {
  if (static_cast<int>(step_rewards.size()) < cycle_len)
    throw std::invalid_argument("tail_mean_reward: fewer rewards than cycle length");
  int window = (cycle_len + 3) / 4;
  double sum = 0.0;
  for (size_t i = step_rewards.size() - window; i < step_rewards.size(); ++i)
    sum += step_rewards[i];
  return sum / window;
}

EvolutionGate::Decision EvolutionGate::observe(double tail_reward, int snapshot_id) {
  Decision d;
  if (tail_reward > best_tail_ || best_snapshot_ < 0) {
    best_tail_ = tail_reward;
    best_snapshot_ = snapshot_id;
    consecutive_bad_ = 0;
    d.improved = true;
  } else {
    ++consecutive_bad_;
    d.rolled_back = true;
    if (consecutive_bad_ >= patience_) d.early_stop = true;
  }
  d.best_snapshot = best_snapshot_;
  return d;
}

}  // namespace memskill
