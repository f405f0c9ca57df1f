#include <cmath>
#include <map>

#include "instructmix/corpus.hpp"
#include "instructmix/prompting.hpp"
#include "instructmix/tokenizer.hpp"

namespace imix {

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

namespace {

struct Accum {
  std::size_t tasks = 0;
  std::size_t examples = 0;
  std::size_t templates = 0;
  std::vector<double> lengths;

  StatsRow row(std::string key) const {
    StatsRow r;
    r.key = std::move(key);
    r.tasks = tasks;
    r.examples = examples;
    r.prompts_per_task = tasks ? static_cast<double>(templates) / static_cast<double>(tasks) : 0.0;
    const auto ms = mean_std(lengths);
    r.mean_prompt_tokens = ms.mean;
    r.std_prompt_tokens = ms.stddev;
    return r;
  }
};

}  // namespace

RegistryStats registry_stats(const Registry& registry, const Tokenizer& tokenizer,
                             std::uint64_t seed) {
  std::map<std::string, Accum> by_benchmark;
  std::map<std::string, Accum> by_category;
  Accum total;
  for (const auto& task : registry.tasks()) {
    std::vector<RawRecord> records = task.records;
    records.insert(records.end(), task.eval_records.begin(), task.eval_records.end());
    std::vector<double> lengths;
    lengths.reserve(records.size());
    if (!records.empty()) {
      const auto assignment = merge_prompts(records, task.templates, derive_seed(seed, task.spec.task_id));
      for (const auto& a : assignment) {
        const auto& rec = records[a.record_index];
        Rng rng(derive_seed(seed, task.spec.task_id + '\x1f' + rec.record_id));
        const auto rendered = render_zero_shot(rec, task.templates[a.template_index], rng);
        lengths.push_back(static_cast<double>(tokenizer.encode(rendered.full_text()).ids.size()));
      }
    }
    for (Accum* acc : {&by_benchmark[task.spec.benchmark], &by_category[task.spec.category], &total}) {
      acc->tasks += 1;
      acc->examples += records.size();
      acc->templates += task.templates.size();
      acc->lengths.insert(acc->lengths.end(), lengths.begin(), lengths.end());
    }
  }
  RegistryStats stats;
  for (const auto& [k, acc] : by_benchmark) stats.by_benchmark.push_back(acc.row(k));
  for (const auto& [k, acc] : by_category) stats.by_category.push_back(acc.row(k));
  stats.total = total.row("total");
  return stats;
}

}  // namespace imix
