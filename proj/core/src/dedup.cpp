#include "instructmix/dedup.hpp"

#include <algorithm>
#include <iomanip>

#include <json.hpp>

#include "instructmix/error.hpp"
#include "instructmix/parallel.hpp"
#include "instructmix/prompting.hpp"
#include "instructmix/rng.hpp"
#include "instructmix/text.hpp"

namespace imix {

namespace {

void sort_unique(std::vector<std::uint64_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

ShingleSet shingle(std::string_view text, std::size_t n) {
  const auto tokens = text::lower_tokens(text);
  ShingleSet out;
  out.token_count = tokens.size();
  if (n == 0 || tokens.size() < n) return out;
  // Per-token hashes, then an order-sensitive combine per window.
  std::vector<std::uint64_t> th(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) th[i] = mix64(fnv1a64(tokens[i]));
  out.hashes.reserve(tokens.size() - n + 1);
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::size_t k = 0; k < n; ++k) h = mix64(h ^ th[i + k]);
    out.hashes.push_back(h);
  }
  sort_unique(out.hashes);
  return out;
}

std::set<std::string> exact_shingles(std::string_view text, std::size_t n) {
  const auto tokens = text::lower_tokens(text);
  std::set<std::string> out;
  for (std::size_t i = 0; n > 0 && i + n <= tokens.size(); ++i) {
    std::string w;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) w += ' ';
      w += tokens[i + k];
    }
    out.insert(std::move(w));
  }
  return out;
}

TaskFingerprints fingerprint_task(std::string task_id,
                                  const std::vector<std::vector<std::string>>& sequences) {
  TaskFingerprints fp;
  fp.task_id = std::move(task_id);
  fp.examples.reserve(sequences.size());
  for (const auto& variants : sequences) {
    std::vector<std::uint64_t> h;
    for (const auto& text : variants) {
      auto s = shingle(text);
      h.insert(h.end(), s.hashes.begin(), s.hashes.end());
    }
    sort_unique(h);
    fp.pooled.insert(fp.pooled.end(), h.begin(), h.end());
    fp.examples.push_back(std::move(h));
  }
  sort_unique(fp.pooled);
  return fp;
}

double overlap_fraction(const TaskFingerprints& eval, const TaskFingerprints& train) {
  if (eval.examples.empty()) {
    fail(ErrorKind::kInvalidArgument, "eval task '" + eval.task_id + "' has no examples");
  }
  std::size_t hits = 0;
  for (const auto& ex : eval.examples) {
    const bool shared = std::any_of(ex.begin(), ex.end(), [&](std::uint64_t h) {
      return std::binary_search(train.pooled.begin(), train.pooled.end(), h);
    });
    hits += shared ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(eval.examples.size());
}

std::vector<std::vector<std::string>> instantiate_sequences(const Task& task, bool eval_records,
                                                            std::uint64_t seed) {
  const auto& records = eval_records ? task.eval_records : task.records;
  std::vector<std::vector<std::string>> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    Rng rng(derive_seed(seed, "dedup/" + task.spec.task_id + "/" + rec.record_id));
    std::vector<std::string> variants;
    for (const auto& tmpl : task.templates) {
      variants.push_back(render_zero_shot(rec, tmpl, rng).full_text());
    }
    out.push_back(std::move(variants));
  }
  return out;
}

std::vector<OverlapEntry> dedup_report(const Registry& registry, double threshold, std::uint64_t seed,
                                       std::size_t workers) {
  std::vector<const Task*> evals;
  std::vector<const Task*> trains;
  for (const auto& t : registry.tasks()) {
    if (t.spec.evaluated && !t.eval_records.empty()) evals.push_back(&t);
    if (t.spec.split == Split::kTrain && !t.records.empty()) trains.push_back(&t);
  }
  std::vector<TaskFingerprints> eval_fp(evals.size());
  std::vector<TaskFingerprints> train_fp(trains.size());
  parallel_for(evals.size() + trains.size(), workers, [&](std::size_t i) {
    if (i < evals.size()) {
      eval_fp[i] = fingerprint_task(evals[i]->spec.task_id, instantiate_sequences(*evals[i], true, seed));
    } else {
      const Task* t = trains[i - evals.size()];
      train_fp[i - evals.size()] = fingerprint_task(t->spec.task_id, instantiate_sequences(*t, false, seed));
    }
  });
  std::vector<OverlapEntry> entries(evals.size() * trains.size());
  parallel_for(entries.size(), workers, [&](std::size_t k) {
    const std::size_t e = k / trains.size();
    const std::size_t t = k % trains.size();
    auto& entry = entries[k];
    entry.eval_task = eval_fp[e].task_id;
    entry.train_task = train_fp[t].task_id;
    entry.fraction = overlap_fraction(eval_fp[e], train_fp[t]);
    entry.flagged = entry.fraction > threshold;
  });
  std::sort(entries.begin(), entries.end(), [](const OverlapEntry& a, const OverlapEntry& b) {
    if (a.fraction != b.fraction) return a.fraction > b.fraction;
    if (a.eval_task != b.eval_task) return a.eval_task < b.eval_task;
    return a.train_task < b.train_task;
  });
  return entries;
}

void write_overlap_report(std::ostream& out, const std::vector<OverlapEntry>& entries) {
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["eval_task"] = e.eval_task;
    j["train_task"] = e.train_task;
    j["fraction"] = e.fraction;
    j["flagged"] = e.flagged;
    out << j.dump() << '\n';
  }
}

}  // namespace imix
