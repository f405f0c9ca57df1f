#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "instructmix/corpus.hpp"
#include "instructmix/rng.hpp"

namespace imix {

// Order of the seven values in a proportion shorthand "a/b/c/d/e/f/g".
inline constexpr std::array<std::string_view, 7> kShorthandOrder = {
    "crossfit", "exmix", "flan", "niv2", "promptsource", "t5", "uskg"};

inline constexpr std::string_view kPretrain = "pretrain";
inline constexpr std::string_view kReasoning = "reasoning";
inline constexpr std::string_view kDialogue = "dialogue";
bool is_auxiliary_benchmark(std::string_view name);

std::map<std::string, double> parse_proportions(std::string_view shorthand);

struct AuxProportions {
  double pretrain = 0.0;
  double reasoning = 0.0;
  double dialogue = 0.0;
  double total() const { return pretrain + reasoning + dialogue; }
};

struct MixtureConfig {
  std::size_t eps = 4096;
  std::map<std::string, double> benchmark_proportions;
  AuxProportions aux;
  std::uint64_t seed = 0;

  void validate() const;
};

// Reads eps, benchmark_proportions (object or shorthand string),
// aux_proportions and seed from a JSON file. Missing keys keep defaults.
MixtureConfig load_mixture_config(const std::filesystem::path& path, MixtureConfig base = {});

struct TaskSize {
  std::string task_id;
  std::string benchmark;
  std::size_t size = 0;
};

// task -> min(size, eps) normalized within its benchmark.
std::map<std::string, double> eps_weights(const std::vector<TaskSize>& sizes, std::size_t eps);

struct SamplingWeights {
  std::map<std::string, double> per_task;
  std::map<std::string, double> per_benchmark;
  // Kept so auxiliary streams can be folded in later.
  std::map<std::string, std::string> task_benchmark;
  std::map<std::string, double> within;
};

SamplingWeights benchmark_mix(const std::vector<TaskSize>& sizes,
                              const std::map<std::string, double>& within,
                              const std::map<std::string, double>& proportions);

// Pre-training and dialogue mass drains proportionally from every benchmark;
// reasoning mass then comes out of the single largest benchmark.
SamplingWeights add_auxiliary(const SamplingWeights& weights, const AuxProportions& aux);

// eps_weights -> benchmark_mix -> add_auxiliary over the registry's training
// pools.
SamplingWeights mixture_weights(const Registry& registry, const MixtureConfig& config);

struct Draw {
  std::string task_id;
  std::size_t record_index = 0;
  friend bool operator==(const Draw&, const Draw&) = default;
};

// Infinite i.i.d. stream: task by per-task weight (alias table), record
// uniformly within the task.
class SampleStream {
 public:
  SampleStream(const SamplingWeights& weights, const Registry& registry, std::uint64_t seed);

  Draw next();

 private:
  std::vector<std::string> tasks_;
  std::vector<std::size_t> sizes_;
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
  Rng rng_;
};

SampleStream sample_stream(const SamplingWeights& weights, const Registry& registry,
                           std::uint64_t seed);

// Shard s of a materialized stream uses the sub-stream derive_seed(seed, s),
// so output is independent of how shards are spread over workers.
std::vector<Draw> materialize_shard(const SamplingWeights& weights, const Registry& registry,
                                    std::uint64_t seed, std::size_t shard_index,
                                    std::size_t count);

// Nested subsets, smallest first; forced tasks appear in every subset.
std::vector<std::vector<std::string>> subset_tasks(const std::vector<std::string>& task_ids,
                                                   const std::set<std::string>& forced,
                                                   const std::vector<std::size_t>& sizes,
                                                   std::uint64_t seed);

// Training tasks of the registry; supervised-evaluation sources are forced.
std::vector<std::vector<std::string>> subset_tasks(const Registry& registry,
                                                   const std::vector<std::size_t>& sizes,
                                                   std::uint64_t seed);

// Categories ranked by task count (descending, ties by id) with
// always_include forced in; nested.
std::vector<std::vector<std::string>> subset_clusters(
    const std::map<std::string, std::size_t>& category_task_counts,
    const std::vector<std::size_t>& counts, const std::set<std::string>& always_include);

std::vector<std::vector<std::string>> subset_clusters(const Registry& registry,
                                                      const std::vector<std::size_t>& counts,
                                                      const std::set<std::string>& always_include);

}  // namespace imix
