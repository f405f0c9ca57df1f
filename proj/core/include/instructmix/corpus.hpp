#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "instructmix/records.hpp"

namespace imix {

class Tokenizer;

struct BenchmarkId {
  std::string name;
  InstructionStyle instruction_style = InstructionStyle::kInstanceLevel;

  friend bool operator==(const BenchmarkId&, const BenchmarkId&) = default;
};

// Benchmarks known out of the box; user manifests may add more.
const std::vector<BenchmarkId>& builtin_benchmarks();

enum class Split { kTrain, kValidation, kTest };
enum class GeneralizationLevel { kFullyHeldOut, kPartiallySupervised, kFullySupervised };

std::string_view to_string(Split split);
std::string_view to_string(GeneralizationLevel level);
Split parse_split(std::string_view s);
GeneralizationLevel parse_generalization_level(std::string_view s);

enum class Metric { kAccuracy, kRougeLF1, kExactMatch };
std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view s);

// Default per-task example cap, by benchmark.
inline constexpr std::size_t kDefaultExampleCap = 100000;
inline constexpr std::size_t kFlanExampleCap = 30000;
std::size_t default_example_cap(std::string_view benchmark);

struct TaskSpec {
  std::string task_id;
  std::string benchmark;
  std::string category;
  std::string data_source;
  // Name shared by the same task across benchmarks or subtasks (for
  // aggregation); defaults to task_id.
  std::string logical_task;
  Split split = Split::kTrain;
  GeneralizationLevel generalization_level = GeneralizationLevel::kFullySupervised;
  bool evaluated = false;
  std::size_t example_cap = kDefaultExampleCap;
  std::size_t num_examples = 0;
  std::optional<Metric> metric;
  std::optional<Split> declared_split;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// A registered task: metadata, its training records and (after split
// assignment) the records reserved for evaluation.
struct Task {
  TaskSpec spec;
  std::vector<RawRecord> records;
  std::vector<RawRecord> eval_records;
  std::vector<PromptTemplate> templates;
};

// Manifest entry describing one task before ingestion.
struct TaskDescriptor {
  std::string task_id;
  std::string benchmark;
  std::string category;
  std::string data_source;
  std::filesystem::path records_path;
  std::optional<std::size_t> example_cap;
  std::optional<std::string> logical_task;
  std::optional<Split> split;
  std::optional<Metric> metric;
  std::vector<PromptTemplate> templates;
};

struct Manifest {
  std::vector<BenchmarkId> benchmarks;
  std::vector<TaskDescriptor> tasks;
};

// Parses a JSON manifest; relative paths resolve against the manifest's
// directory.
Manifest load_manifest(const std::filesystem::path& path);

// Parses a JSONL records file. Errors carry the 1-based line number.
std::vector<RawRecord> parse_records(std::istream& in, std::string_view origin,
                                     bool require_target);
std::vector<PromptTemplate> load_templates(const std::filesystem::path& path);

class Registry {
 public:
  void add_benchmark(BenchmarkId benchmark);
  const BenchmarkId* find_benchmark(std::string_view name) const;
  const std::vector<BenchmarkId>& benchmarks() const { return benchmarks_; }

  // Throws kConflict on a duplicate task_id.
  const Task& add_task(Task task);
  const Task* find(std::string_view task_id) const;
  Task& mutable_task(std::string_view task_id);

  const std::vector<Task>& tasks() const { return tasks_; }
  std::size_t size() const { return tasks_.size(); }
  bool empty() const { return tasks_.empty(); }

  InstructionStyle style_of(const Task& task) const;

 private:
  std::vector<BenchmarkId> benchmarks_;
  std::vector<Task> tasks_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads and validates the task's records, then registers it.
const TaskSpec& ingest_task(Registry& registry, const TaskDescriptor& entry);
const TaskSpec& ingest_task(Registry& registry, const TaskDescriptor& entry,
                            std::istream& records);

// Keeps at most `cap` records, chosen by a seeded permutation. Retained
// records keep their original relative order.
Task cap_examples(const Task& task, std::size_t cap, std::uint64_t seed);

struct SplitPlan {
  std::set<std::string> held_out_categories;
  std::map<std::string, std::set<std::string>> partially_held_tasks;
  std::set<std::string> supervised_eval_tasks;
  // Share of a supervised task's records moved to evaluation.
  double supervised_eval_fraction = 0.1;
  Split eval_split = Split::kValidation;
};

SplitPlan load_split_plan(const std::filesystem::path& path);

// Labels every task with split and generalization level and moves evaluation
// records out of the training pool.
Registry assign_splits(const Registry& registry, const SplitPlan& plan);

struct StatsRow {
  std::string key;
  std::size_t tasks = 0;
  std::size_t examples = 0;
  double prompts_per_task = 0.0;
  double mean_prompt_tokens = 0.0;
  double std_prompt_tokens = 0.0;
};

struct RegistryStats {
  std::vector<StatsRow> by_benchmark;
  std::vector<StatsRow> by_category;
  StatsRow total;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};
// Population standard deviation.
MeanStd mean_std(const std::vector<double>& values);

// Prompt lengths come from rendering each record with its merged template
// assignment and counting tokens of source plus target.
RegistryStats registry_stats(const Registry& registry, const Tokenizer& tokenizer,
                             std::uint64_t seed);

}  // namespace imix
