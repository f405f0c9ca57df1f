#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instructmix/corpus.hpp"
#include "instructmix/prompting.hpp"
#include "instructmix/scorer.hpp"
#include "instructmix/tokenizer.hpp"

namespace imix {

inline constexpr std::size_t kDefaultMaxGenTokens = 256;
inline constexpr std::size_t kDefaultMaxValidationPrompts = 250;

struct EvalTaskConfig {
  Metric metric = Metric::kRougeLF1;
  std::size_t shots = 0;
  std::size_t max_gen_tokens = kDefaultMaxGenTokens;
  bool has_candidates = false;

  void validate() const;
};

// Index of the highest-likelihood candidate (raw summed log-probability),
// lowest index on ties.
std::size_t rank_classify(std::span<const TokenId> context,
                          const std::vector<std::vector<TokenId>>& candidates,
                          const Scorer& scorer);

// Appends greedy tokens until eos (not returned) or max_tokens.
std::vector<TokenId> greedy_generate(std::span<const TokenId> context, const Scorer& scorer,
                                     std::size_t max_tokens = kDefaultMaxGenTokens);

// Longest common subsequence length (bit-parallel).
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Lowercased whitespace tokens; max over references.
double rouge_l_f1(std::string_view hypothesis, const std::vector<std::string>& references);

int exact_match(std::string_view hypothesis, const std::vector<std::string>& references);

// min(max_prompts, pool_size) distinct indices in ascending order.
std::vector<std::size_t> sample_validation(std::size_t pool_size, std::size_t max_prompts,
                                           std::uint64_t seed);

struct LeafScore {
  std::string subtask;    // registry task id
  std::string task;       // logical task
  std::string benchmark;
  std::string category;
  std::size_t shots = 0;
  double score = 0.0;
  std::size_t count = 0;  // scored prompts
};

enum class GroupBy { kCategory, kBenchmark };

struct EvalReport {
  std::vector<LeafScore> leaves;
  // (logical task, benchmark) -> shots -> mean over subtasks
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, double>> task_benchmark;
  // logical task -> shots -> mean over benchmarks
  std::map<std::string, std::map<std::size_t, double>> tasks;
  // category (or benchmark) -> shots -> mean over tasks
  std::map<std::string, std::map<std::size_t, double>> groups;
  GroupBy group_by = GroupBy::kCategory;
  double combined = 0.0;
};

// Subtasks -> task (per benchmark) -> task across benchmarks -> group ->
// combined mean of every group/shots entry.
EvalReport aggregate(const std::vector<LeafScore>& leaves, GroupBy group_by = GroupBy::kCategory);

struct EvalOptions {
  std::vector<std::size_t> shots{0, 5};
  std::size_t max_prompts = kDefaultMaxValidationPrompts;
  std::size_t max_gen_tokens = kDefaultMaxGenTokens;
  std::string separator{kInferenceDemoSeparator};
  std::uint64_t seed = 0;
};

struct EvalItem {
  std::string task_id;
  std::size_t shots = 0;
  EvalTaskConfig config;
  RenderedExample example;
  std::vector<std::string> references;
  std::vector<std::string> candidates;
};

// Renders the validation prompts of every evaluated task. Demonstrations come
// from the task's training records, or from its other evaluation records when
// it has no training pool.
std::vector<EvalItem> plan_eval(const Registry& registry, const EvalOptions& options);

struct ItemResult {
  double score = 0.0;
  std::string prediction;
};

ItemResult score_item(const EvalItem& item, const Scorer& scorer, const Tokenizer& tokenizer);

std::vector<LeafScore> run_eval(const Registry& registry, std::span<const EvalItem> items,
                                const Scorer& scorer, const Tokenizer& tokenizer,
                                std::size_t workers = 1);

// Echo scripts that reproduce every item's reference.
std::vector<EchoScript> oracle_scripts(std::span<const EvalItem> items, const Tokenizer& tokenizer);

// Structured form: {"group_by", "combined", "groups", "tasks", "task_benchmark", "leaves"}.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view json_text);

// Tab-separated: subtask task benchmark category shots score count.
void write_leaf_table(std::ostream& out, const std::vector<LeafScore>& leaves);

// Human-readable aggregation tree.
void print_report(std::ostream& out, const EvalReport& report);

}  // namespace imix
