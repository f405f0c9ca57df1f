#include "instructmix/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "instructmix/error.hpp"
#include "instructmix/parallel.hpp"
#include "instructmix/text.hpp"

namespace imix {

using nlohmann::json;

void EvalTaskConfig::validate() const {
  if (metric == Metric::kAccuracy && !has_candidates) {
    fail(ErrorKind::kValidation, "accuracy requires answer candidates");
  }
  if (max_gen_tokens < 1) fail(ErrorKind::kValidation, "max_gen_tokens must be >= 1");
}

std::size_t rank_classify(std::span<const TokenId> context,
                          const std::vector<std::vector<TokenId>>& candidates, const Scorer& scorer) {
  if (candidates.empty()) fail(ErrorKind::kInvalidArgument, "rank classification needs candidates");
  std::size_t best = 0;
  double best_score = -INFINITY;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = scorer.logprob(context, candidates[i]);
    if (i == 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::vector<TokenId> greedy_generate(std::span<const TokenId> context, const Scorer& scorer,
                                     std::size_t max_tokens) {
  std::vector<TokenId> ctx(context.begin(), context.end());
  std::vector<TokenId> out;
  while (out.size() < max_tokens) {
    const TokenId t = scorer.greedy_step(ctx);
    if (t == scorer.eos_id()) break;
    out.push_back(t);
    ctx.push_back(t);
  }
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  if (a.size() < b.size()) std::swap(a, b);
  // Bit-vector LCS over the shorter sequence (Allison-Dix / Crochemore form).
  const std::size_t m = b.size();
  const std::size_t words = (m + 63) / 64;
  std::unordered_map<std::string_view, std::vector<std::uint64_t>> match;
  for (std::size_t i = 0; i < m; ++i) {
    auto& bits = match[b[i]];
    if (bits.empty()) bits.assign(words, 0);
    bits[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  std::vector<std::uint64_t> v(words, ~std::uint64_t{0});
  for (const auto& tok : a) {
    auto it = match.find(tok);
    if (it == match.end()) continue;
    const auto& mk = it->second;
    std::uint64_t carry = 0;
    for (std::size_t w = 0; w < words; ++w) {
      const std::uint64_t u = v[w] & mk[w];
      const std::uint64_t t = v[w] + carry;
      const std::uint64_t c1 = t < v[w];
      const std::uint64_t s = t + u;
      const std::uint64_t c2 = s < t;
      carry = c1 | c2;
      v[w] = s | (v[w] & ~mk[w]);
    }
  }
  std::size_t zeros = 0;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t x = ~v[w];
    if (w + 1 == words && m % 64) x &= (std::uint64_t{1} << (m % 64)) - 1;
    zeros += static_cast<std::size_t>(std::popcount(x));
  }
  return zeros;
}

double rouge_l_f1(std::string_view hypothesis, const std::vector<std::string>& references) {
  const auto hyp = text::lower_tokens(hypothesis);
  double best = 0.0;
  for (const auto& ref_text : references) {
    const auto ref = text::lower_tokens(ref_text);
    double f1 = 0.0;
    if (hyp.empty() && ref.empty()) {
      f1 = 1.0;
    } else if (!hyp.empty() && !ref.empty()) {
      const double l = static_cast<double>(lcs_length(hyp, ref));
      const double p = l / static_cast<double>(hyp.size());
      const double r = l / static_cast<double>(ref.size());
      f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    best = std::max(best, f1);
  }
  return best;
}

int exact_match(std::string_view hypothesis, const std::vector<std::string>& references) {
  const auto h = text::normalize_answer(hypothesis);
  for (const auto& r : references) {
    if (text::normalize_answer(r) == h) return 1;
  }
  return 0;
}

std::vector<std::size_t> sample_validation(std::size_t pool_size, std::size_t max_prompts,
                                           std::uint64_t seed) {
  if (pool_size == 0) fail(ErrorKind::kInvalidArgument, "validation prompt pool is empty");
  Rng rng(seed);
  auto idx = rng.sample_without_replacement(pool_size, std::min(pool_size, max_prompts));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

// Sorted summation keeps the mean independent of child order.
double mean_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

EvalReport aggregate(const std::vector<LeafScore>& leaves, GroupBy group_by) {
  EvalReport report;
  report.leaves = leaves;
  report.group_by = group_by;
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::vector<double>>> stage1;
  std::map<std::string, std::string> task_category;
  for (const auto& leaf : leaves) {
    if (leaf.subtask.empty() || leaf.task.empty() || leaf.benchmark.empty() || leaf.category.empty()) {
      fail(ErrorKind::kValidation, "leaf score '" + leaf.subtask + "' is missing task metadata");
    }
    stage1[{leaf.task, leaf.benchmark}][leaf.shots].push_back(leaf.score);
    auto [it, inserted] = task_category.emplace(leaf.task, leaf.category);
    if (!inserted && it->second != leaf.category) {
      fail(ErrorKind::kValidation, "task '" + leaf.task + "' appears under categories '" + it->second +
                                       "' and '" + leaf.category + "'");
    }
  }
  std::map<std::string, std::map<std::size_t, std::vector<double>>> stage2;
  std::map<std::string, std::map<std::size_t, std::vector<double>>> by_benchmark;
  for (const auto& [key, per_shots] : stage1) {
    for (const auto& [shots, values] : per_shots) {
      const double m = mean_of(values);
      report.task_benchmark[key][shots] = m;
      stage2[key.first][shots].push_back(m);
      by_benchmark[key.second][shots].push_back(m);
    }
  }
  std::map<std::string, std::map<std::size_t, std::vector<double>>> stage3;
  for (const auto& [task, per_shots] : stage2) {
    for (const auto& [shots, values] : per_shots) {
      const double m = mean_of(values);
      report.tasks[task][shots] = m;
      stage3[task_category[task]][shots].push_back(m);
    }
  }
  std::vector<double> all;
  for (const auto& [group, per_shots] : group_by == GroupBy::kCategory ? stage3 : by_benchmark) {
    for (const auto& [shots, values] : per_shots) {
      const double m = mean_of(values);
      report.groups[group][shots] = m;
      all.push_back(m);
    }
  }
  report.combined = all.empty() ? 0.0 : mean_of(all);
  return report;
}

std::vector<EvalItem> plan_eval(const Registry& registry, const EvalOptions& options) {
  std::vector<EvalItem> items;
  for (const auto& task : registry.tasks()) {
    if (!task.spec.evaluated) continue;
    const auto& id = task.spec.task_id;
    if (task.eval_records.empty()) {
      warn("evaluated task '" + id + "' has no evaluation records");
      continue;
    }
    bool all_candidates = true;
    for (const auto& r : task.eval_records) all_candidates &= r.candidates.has_value();
    EvalTaskConfig cfg;
    cfg.has_candidates = all_candidates;
    cfg.metric = task.spec.metric.value_or(all_candidates ? Metric::kAccuracy : Metric::kRougeLF1);
    cfg.max_gen_tokens = options.max_gen_tokens;
    cfg.validate();

    const auto assignment = merge_prompts(task.eval_records, task.templates, derive_seed(options.seed, "merge/" + id));
    const auto selected = sample_validation(assignment.size(), options.max_prompts,
                                            derive_seed(options.seed, "validation/" + id));
    for (std::size_t shots : options.shots) {
      cfg.shots = shots;
      bool warned = false;
      for (std::size_t idx : selected) {
        const auto& rec = task.eval_records[assignment[idx].record_index];
        const auto& tmpl = task.templates[assignment[idx].template_index];
        std::vector<RawRecord> demos;
        if (shots > 0) {
          std::vector<const RawRecord*> pool;
          for (const auto* src : {&task.records, &task.eval_records}) {
            if (!pool.empty()) break;
            for (const auto& r : *src) {
              if (r.record_id != rec.record_id) pool.push_back(&r);
            }
          }
          if (pool.size() < shots && !warned) {
            warn("task '" + id + "': only " + std::to_string(pool.size()) + " demonstrations for " +
                 std::to_string(shots) + "-shot evaluation");
            warned = true;
          }
          Rng demo_rng(derive_seed(options.seed, "demos/" + id + "/" + std::to_string(shots) + "/" + rec.record_id));
          for (std::size_t j : demo_rng.sample_without_replacement(pool.size(), std::min(shots, pool.size()))) {
            demos.push_back(*pool[j]);
          }
        }
        Rng rng(derive_seed(options.seed, "render/" + id + "/" + std::to_string(shots) + "/" + rec.record_id));
        EvalItem item;
        item.task_id = id;
        item.shots = shots;
        item.config = cfg;
        try {
          item.example = render_few_shot(rec, demos, tmpl, rng, options.separator);
        } catch (const Error& e) {
          fail(e.kind(), "task '" + id + "': " + e.what());
        }
        item.example.provenance.task_id = id;
        item.references = {rec.target};
        if (rec.candidates) item.candidates = *rec.candidates;
        items.push_back(std::move(item));
      }
    }
  }
  return items;
}

ItemResult score_item(const EvalItem& item, const Scorer& scorer, const Tokenizer& tokenizer) {
  const auto context = tokenizer.encode(item.example.source_text).ids;
  ItemResult result;
  if (item.config.metric == Metric::kAccuracy) {
    std::vector<std::vector<TokenId>> cands;
    for (const auto& c : item.candidates) cands.push_back(tokenizer.encode(c).ids);
    const std::size_t pred = rank_classify(context, cands, scorer);
    result.prediction = item.candidates[pred];
    result.score = std::find(item.references.begin(), item.references.end(), result.prediction) !=
                           item.references.end()
                       ? 1.0
                       : 0.0;
    return result;
  }
  const auto gen = greedy_generate(context, scorer, item.config.max_gen_tokens);
  result.prediction = tokenizer.decode(gen);
  result.score = item.config.metric == Metric::kExactMatch
                     ? static_cast<double>(exact_match(result.prediction, item.references))
                     : rouge_l_f1(result.prediction, item.references);
  return result;
}

std::vector<LeafScore> run_eval(const Registry& registry, std::span<const EvalItem> items,
                                const Scorer& scorer, const Tokenizer& tokenizer, std::size_t workers) {
  std::vector<double> scores(items.size());
  parallel_for(items.size(), scorer.concurrent_safe() ? workers : 1,
               [&](std::size_t i) { scores[i] = score_item(items[i], scorer, tokenizer).score; });

  std::map<std::pair<std::string, std::size_t>, std::vector<double>> grouped;
  for (std::size_t i = 0; i < items.size(); ++i) {
    grouped[{items[i].task_id, items[i].shots}].push_back(scores[i]);
  }
  std::vector<LeafScore> leaves;
  for (const auto& task : registry.tasks()) {
    for (auto it = grouped.lower_bound({task.spec.task_id, 0});
         it != grouped.end() && it->first.first == task.spec.task_id; ++it) {
      LeafScore leaf;
      leaf.subtask = task.spec.task_id;
      leaf.task = task.spec.logical_task.empty() ? task.spec.task_id : task.spec.logical_task;
      leaf.benchmark = task.spec.benchmark;
      leaf.category = task.spec.category;
      leaf.shots = it->first.second;
      leaf.count = it->second.size();
      leaf.score = mean_of(it->second);
      leaves.push_back(std::move(leaf));
    }
  }
  return leaves;
}

std::vector<EchoScript> oracle_scripts(std::span<const EvalItem> items, const Tokenizer& tokenizer) {
  std::vector<EchoScript> scripts;
  scripts.reserve(items.size());
  for (const auto& item : items) {
    scripts.push_back({tokenizer.encode(item.example.source_text).ids,
                       tokenizer.encode(item.references.front()).ids});
  }
  return scripts;
}

namespace {

json shots_map(const std::map<std::size_t, double>& m) {
  json j = json::object();
  for (const auto& [shots, v] : m) j[std::to_string(shots)] = v;
  return j;
}

std::map<std::size_t, double> shots_from(const json& j) {
  std::map<std::size_t, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoul(k)] = v.get<double>();
  return m;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["group_by"] = report.group_by == GroupBy::kCategory ? "category" : "benchmark";
  j["combined"] = report.combined;
  json groups = json::object();
  for (const auto& [g, m] : report.groups) groups[g] = shots_map(m);
  j["groups"] = groups;
  json tasks = json::object();
  for (const auto& [t, m] : report.tasks) tasks[t] = shots_map(m);
  j["tasks"] = tasks;
  json tb = json::array();
  for (const auto& [key, m] : report.task_benchmark) {
    tb.push_back({{"task", key.first}, {"benchmark", key.second}, {"scores", shots_map(m)}});
  }
  j["task_benchmark"] = tb;
  json leaves = json::array();
  for (const auto& l : report.leaves) {
    leaves.push_back({{"subtask", l.subtask}, {"task", l.task}, {"benchmark", l.benchmark},
                      {"category", l.category}, {"shots", l.shots}, {"score", l.score},
                      {"count", l.count}});
  }
  j["leaves"] = leaves;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view json_text) {
  try {
    const auto j = json::parse(json_text);
    EvalReport r;
    r.group_by = j.at("group_by").get<std::string>() == "benchmark" ? GroupBy::kBenchmark : GroupBy::kCategory;
    r.combined = j.at("combined").get<double>();
    for (const auto& [g, m] : j.at("groups").items()) r.groups[g] = shots_from(m);
    for (const auto& [t, m] : j.at("tasks").items()) r.tasks[t] = shots_from(m);
    for (const auto& e : j.at("task_benchmark")) {
      r.task_benchmark[{e.at("task").get<std::string>(), e.at("benchmark").get<std::string>()}] =
          shots_from(e.at("scores"));
    }
    for (const auto& e : j.at("leaves")) {
      LeafScore l;
      l.subtask = e.at("subtask").get<std::string>();
      l.task = e.at("task").get<std::string>();
      l.benchmark = e.at("benchmark").get<std::string>();
      l.category = e.at("category").get<std::string>();
      l.shots = e.at("shots").get<std::size_t>();
      l.score = e.at("score").get<double>();
      l.count = e.at("count").get<std::size_t>();
      r.leaves.push_back(std::move(l));
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("eval report: ") + e.what());
  }
}

void write_leaf_table(std::ostream& out, const std::vector<LeafScore>& leaves) {
  out << "subtask\ttask\tbenchmark\tcategory\tshots\tscore\tcount\n";
  for (const auto& l : leaves) {
    out << l.subtask << '\t' << l.task << '\t' << l.benchmark << '\t' << l.category << '\t' << l.shots
        << '\t' << std::setprecision(17) << l.score << '\t' << l.count << '\n';
  }
}

void print_report(std::ostream& out, const EvalReport& report) {
  auto fmt = [](const std::map<std::size_t, double>& m) {
    std::string s;
    for (const auto& [shots, v] : m) {
      if (!s.empty()) s += "  ";
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu-shot %.4f", shots, v);
      s += buf;
    }
    return s;
  };
  out << "combined " << std::fixed << std::setprecision(4) << report.combined << '\n';
  out << (report.group_by == GroupBy::kCategory ? "categories" : "benchmarks") << ":\n";
  for (const auto& [g, m] : report.groups) out << "  " << g << "  " << fmt(m) << '\n';
  out << "tasks:\n";
  for (const auto& [t, m] : report.tasks) out << "  " << t << "  " << fmt(m) << '\n';
  out << "task x benchmark:\n";
  for (const auto& [k, m] : report.task_benchmark) {
    out << "  " << k.first << " @ " << k.second << "  " << fmt(m) << '\n';
  }
}

}  // namespace imix
