#include "instructmix/mixture.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "instructmix/error.hpp"

namespace imix {

using nlohmann::json;

bool is_auxiliary_benchmark(std::string_view name) {
  return name == kPretrain || name == kReasoning || name == kDialogue;
}

std::map<std::string, double> parse_proportions(std::string_view shorthand) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (true) {
    const auto slash = shorthand.find('/', pos);
    auto part = shorthand.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || !(v >= 0.0) ||
        !std::isfinite(v)) {
      fail(ErrorKind::kParse, "bad proportion '" + std::string(part) + "' in \"" + std::string(shorthand) + "\"");
    }
    values.push_back(v);
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  if (values.size() != kShorthandOrder.size()) {
    fail(ErrorKind::kParse, "proportion shorthand needs " + std::to_string(kShorthandOrder.size()) +
                                " values (crossfit/exmix/flan/niv2/promptsource/t5/uskg), got " +
                                std::to_string(values.size()));
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  if (!(sum > 0.0)) fail(ErrorKind::kParse, "proportions sum to zero");
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < values.size(); ++i) out[std::string(kShorthandOrder[i])] = values[i] / sum;
  return out;
}

void MixtureConfig::validate() const {
  if (eps < 1) fail(ErrorKind::kConfiguration, "eps must be >= 1");
  double sum = 0.0;
  for (const auto& [b, p] : benchmark_proportions) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorKind::kConfiguration, "proportion of '" + b + "' must be >= 0");
    sum += p;
  }
  if (!benchmark_proportions.empty() && !(sum > 0.0)) {
    fail(ErrorKind::kConfiguration, "benchmark proportions sum to zero");
  }
  for (double p : {aux.pretrain, aux.reasoning, aux.dialogue}) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::kConfiguration, "auxiliary proportions must lie in [0, 1)");
  }
  if (!(aux.total() < 1.0)) fail(ErrorKind::kConfiguration, "auxiliary proportions must sum below 1");
}

MixtureConfig load_mixture_config(const std::filesystem::path& path, MixtureConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open mixture config " + path.string());
  try {
    const json j = json::parse(in);
    if (j.contains("eps")) base.eps = j["eps"].get<std::size_t>();
    if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("benchmark_proportions")) {
      const auto& bp = j["benchmark_proportions"];
      if (bp.is_string()) {
        base.benchmark_proportions = parse_proportions(bp.get<std::string>());
      } else {
        base.benchmark_proportions = bp.get<std::map<std::string, double>>();
      }
    }
    if (j.contains("aux_proportions")) {
      const auto& a = j["aux_proportions"];
      base.aux.pretrain = a.value("pretrain", 0.0);
      base.aux.reasoning = a.value("reasoning", 0.0);
      base.aux.dialogue = a.value("dialogue", 0.0);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return base;
}

std::map<std::string, double> eps_weights(const std::vector<TaskSize>& sizes, std::size_t eps) {
  if (eps < 1) fail(ErrorKind::kInvalidArgument, "eps must be >= 1");
  std::map<std::string, double> totals;
  for (const auto& t : sizes) totals[t.benchmark] += static_cast<double>(std::min(t.size, eps));
  for (const auto& [b, total] : totals) {
    if (!(total > 0.0)) fail(ErrorKind::kInvalidArgument, "every task of benchmark '" + b + "' is empty");
  }
  std::map<std::string, double> out;
  for (const auto& t : sizes) {
    if (out.count(t.task_id)) fail(ErrorKind::kInvalidArgument, "task '" + t.task_id + "' listed twice");
    out[t.task_id] = static_cast<double>(std::min(t.size, eps)) / totals[t.benchmark];
  }
  return out;
}

namespace {

void fill_per_task(SamplingWeights& w) {
  w.per_task.clear();
  for (const auto& [task, b] : w.task_benchmark) {
    auto it = w.per_benchmark.find(b);
    w.per_task[task] = it == w.per_benchmark.end() ? 0.0 : it->second * w.within.at(task);
  }
}

}  // namespace

SamplingWeights benchmark_mix(const std::vector<TaskSize>& sizes, const std::map<std::string, double>& within,
                              const std::map<std::string, double>& proportions) {
  SamplingWeights w;
  std::set<std::string> present;
  for (const auto& t : sizes) {
    w.task_benchmark[t.task_id] = t.benchmark;
    auto it = within.find(t.task_id);
    if (it == within.end()) fail(ErrorKind::kInvalidArgument, "no within-benchmark weight for task '" + t.task_id + "'");
    w.within[t.task_id] = it->second;
    if (!is_auxiliary_benchmark(t.benchmark)) present.insert(t.benchmark);
  }
  for (const auto& b : present) {
    if (!proportions.count(b)) fail(ErrorKind::kConfiguration, "benchmark '" + b + "' has no configured proportion");
  }
  double sum = 0.0;
  for (const auto& [b, p] : proportions) {
    if (is_auxiliary_benchmark(b)) {
      fail(ErrorKind::kConfiguration, "'" + b + "' is an auxiliary stream; set it via aux proportions");
    }
    if (!(p >= 0.0)) fail(ErrorKind::kConfiguration, "proportion of '" + b + "' is negative");
    if (p > 0.0 && !present.count(b)) {
      fail(ErrorKind::kConfiguration, "benchmark '" + b + "' has a proportion but no training tasks");
    }
    sum += p;
  }
  if (!(sum > 0.0)) fail(ErrorKind::kConfiguration, "benchmark proportions sum to zero");
  for (const auto& [b, p] : proportions) w.per_benchmark[b] = p / sum;
  fill_per_task(w);
  return w;
}

SamplingWeights add_auxiliary(const SamplingWeights& weights, const AuxProportions& aux) {
  for (double p : {aux.pretrain, aux.reasoning, aux.dialogue}) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::kInvalidArgument, "auxiliary proportions must lie in [0, 1)");
  }
  if (!(aux.total() < 1.0)) fail(ErrorKind::kInvalidArgument, "auxiliary proportions must sum below 1");
  SamplingWeights w = weights;
  const double keep = 1.0 - aux.pretrain - aux.dialogue;
  std::string largest;
  for (auto& [b, p] : w.per_benchmark) {
    if (is_auxiliary_benchmark(b)) continue;
    p *= keep;
    if (largest.empty() || p > w.per_benchmark[largest]) largest = b;
  }
  if (aux.reasoning > 0.0) {
    if (largest.empty() || aux.reasoning >= w.per_benchmark[largest]) {
      fail(ErrorKind::kInvalidArgument, "reasoning proportion must be below the largest benchmark's share");
    }
    w.per_benchmark[largest] -= aux.reasoning;
  }
  const std::pair<std::string_view, double> streams[] = {
      {kPretrain, aux.pretrain}, {kReasoning, aux.reasoning}, {kDialogue, aux.dialogue}};
  for (const auto& [name, p] : streams) {
    if (p <= 0.0) continue;
    const bool has_tasks = std::any_of(w.task_benchmark.begin(), w.task_benchmark.end(),
                                       [&](const auto& kv) { return kv.second == name; });
    if (!has_tasks) {
      fail(ErrorKind::kConfiguration, "auxiliary stream '" + std::string(name) + "' has no registered tasks");
    }
    w.per_benchmark[std::string(name)] = p;
  }
  fill_per_task(w);
  return w;
}

SamplingWeights mixture_weights(const Registry& registry, const MixtureConfig& config) {
  config.validate();
  std::vector<TaskSize> sizes;
  for (const auto& t : registry.tasks()) {
    if (t.spec.split != Split::kTrain) continue;
    sizes.push_back({t.spec.task_id, t.spec.benchmark, t.records.size()});
  }
  if (sizes.empty()) fail(ErrorKind::kConfiguration, "registry has no training tasks");
  const auto within = eps_weights(sizes, config.eps);
  auto proportions = config.benchmark_proportions;
  if (proportions.empty()) {
    // Plain example-proportional across benchmarks, still EPS-capped.
    for (const auto& t : sizes) {
      if (!is_auxiliary_benchmark(t.benchmark)) {
        proportions[t.benchmark] += static_cast<double>(std::min(t.size, config.eps));
      }
    }
  }
  return add_auxiliary(benchmark_mix(sizes, within, proportions), config.aux);
}

SampleStream::SampleStream(const SamplingWeights& weights, const Registry& registry, std::uint64_t seed)
    : rng_(seed) {
  std::vector<double> p;
  for (const auto& [task, w] : weights.per_task) {
    if (!(w > 0.0)) continue;
    const Task* t = registry.find(task);
    if (!t) fail(ErrorKind::kInvalidArgument, "weighted task '" + task + "' is not registered");
    if (t->records.empty()) fail(ErrorKind::kInvalidArgument, "weighted task '" + task + "' has no training records");
    tasks_.push_back(task);
    sizes_.push_back(t->records.size());
    p.push_back(w);
  }
  if (tasks_.empty()) fail(ErrorKind::kInvalidArgument, "no task has positive weight");
  // Vose's alias method.
  const std::size_t n = p.size();
  double total = 0.0;
  for (double x : p) total += x;
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = p[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) prob_[i] = 1.0;
  for (auto i : small) prob_[i] = 1.0;
}

Draw SampleStream::next() {
  const std::size_t column = rng_.uniform_index(tasks_.size());
  const std::size_t task = rng_.uniform01() < prob_[column] ? column : alias_[column];
  return {tasks_[task], rng_.uniform_index(sizes_[task])};
}

SampleStream sample_stream(const SamplingWeights& weights, const Registry& registry, std::uint64_t seed) {
  return SampleStream(weights, registry, seed);
}

std::vector<Draw> materialize_shard(const SamplingWeights& weights, const Registry& registry,
                                    std::uint64_t seed, std::size_t shard_index, std::size_t count) {
  SampleStream stream(weights, registry, derive_seed(seed, static_cast<std::uint64_t>(shard_index)));
  std::vector<Draw> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(stream.next());
  return out;
}

namespace {

void check_ascending(const std::vector<std::size_t>& sizes, const char* what) {
  if (sizes.empty()) fail(ErrorKind::kInvalidArgument, std::string(what) + " list is empty");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] < sizes[i - 1]) fail(ErrorKind::kInvalidArgument, std::string(what) + " must be ascending");
  }
}

}  // namespace

std::vector<std::vector<std::string>> subset_tasks(const std::vector<std::string>& task_ids,
                                                   const std::set<std::string>& forced,
                                                   const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  check_ascending(sizes, "subset sizes");
  if (sizes.back() > task_ids.size()) {
    fail(ErrorKind::kInvalidArgument, "largest subset exceeds the " + std::to_string(task_ids.size()) + " available tasks");
  }
  if (forced.size() > sizes.front()) {
    fail(ErrorKind::kInvalidArgument, std::to_string(forced.size()) +
                                          " always-selected tasks do not fit the smallest subset");
  }
  std::vector<std::string> rest;
  for (const auto& id : task_ids) {
    if (!forced.count(id)) rest.push_back(id);
  }
  for (const auto& f : forced) {
    if (std::find(task_ids.begin(), task_ids.end(), f) == task_ids.end()) {
      fail(ErrorKind::kInvalidArgument, "forced task '" + f + "' is not a candidate");
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(rest));
  std::vector<std::vector<std::string>> out;
  for (std::size_t n : sizes) {
    std::vector<std::string> s(forced.begin(), forced.end());
    s.insert(s.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n - forced.size()));
    std::sort(s.begin(), s.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<std::string>> subset_tasks(const Registry& registry, const std::vector<std::size_t>& sizes,
                                                   std::uint64_t seed) {
  std::vector<std::string> ids;
  std::set<std::string> forced;
  for (const auto& t : registry.tasks()) {
    if (t.spec.split != Split::kTrain) continue;
    ids.push_back(t.spec.task_id);
    if (t.spec.evaluated) forced.insert(t.spec.task_id);
  }
  return subset_tasks(ids, forced, sizes, seed);
}

std::vector<std::vector<std::string>> subset_clusters(const std::map<std::string, std::size_t>& category_task_counts,
                                                      const std::vector<std::size_t>& counts,
                                                      const std::set<std::string>& always_include) {
  check_ascending(counts, "cluster counts");
  if (always_include.size() > counts.front()) {
    fail(ErrorKind::kInvalidArgument, "always-included categories do not fit the smallest count");
  }
  if (counts.back() > category_task_counts.size()) {
    fail(ErrorKind::kInvalidArgument, "cluster count exceeds the " + std::to_string(category_task_counts.size()) +
                                          " available categories");
  }
  for (const auto& c : always_include) {
    if (!category_task_counts.count(c)) fail(ErrorKind::kInvalidArgument, "unknown category '" + c + "'");
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& kv : category_task_counts) {
    if (!always_include.count(kv.first)) ranked.push_back(kv);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::vector<std::string>> out;
  for (std::size_t n : counts) {
    std::vector<std::string> s(always_include.begin(), always_include.end());
    for (std::size_t i = 0; i < n - always_include.size(); ++i) s.push_back(ranked[i].first);
    std::sort(s.begin(), s.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<std::string>> subset_clusters(const Registry& registry, const std::vector<std::size_t>& counts,
                                                      const std::set<std::string>& always_include) {
  std::map<std::string, std::size_t> per_category;
  for (const auto& t : registry.tasks()) {
    if (t.spec.split == Split::kTrain) ++per_category[t.spec.category];
  }
  return subset_clusters(per_category, counts, always_include);
}

}  // namespace imix
