#include "instructmix/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "instructmix/error.hpp"
#include "instructmix/rng.hpp"

namespace imix {

using nlohmann::json;

namespace {

std::string string_field(const json& j, const char* key, std::string_view ctx) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    fail(ErrorKind::kParse, std::string(ctx) + ": missing string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key, std::string_view ctx) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    fail(ErrorKind::kParse, std::string(ctx) + ": field \"" + key + "\" must be a string");
  }
  return it->get<std::string>();
}

PromptTemplate template_from_json(const json& j, std::string_view ctx) {
  PromptTemplate t;
  t.template_id = string_field(j, "template_id", ctx);
  if (auto s = optional_string(j, "instruction_style", ctx)) {
    t.instruction_style = parse_instruction_style(*s);
  }
  t.instruction_text = string_field(j, "instruction_text", ctx);
  if (auto s = optional_string(j, "output_field", ctx)) t.output_field = *s;
  if (auto s = optional_string(j, "task_description", ctx)) t.task_description = *s;
  return t;
}

// Stable per-record coin for moving supervised records to evaluation.
bool lands_in_eval(std::string_view task_id, std::string_view record_id, double fraction) {
  const std::uint64_t h = mix64(fnv1a64(record_id, fnv1a64(task_id)));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

}  // namespace

const std::vector<BenchmarkId>& builtin_benchmarks() {
  static const std::vector<BenchmarkId> kBuiltins = {
      {"crossfit", InstructionStyle::kKeywords},
      {"exmix", InstructionStyle::kInstanceLevel},
      {"flan", InstructionStyle::kInstanceLevel},
      {"niv2", InstructionStyle::kTaskLevel},
      {"promptsource", InstructionStyle::kInstanceLevel},
      {"t5", InstructionStyle::kInstanceLevel},
      {"uskg", InstructionStyle::kInstanceLevel},
      {"reasoning", InstructionStyle::kInstanceLevel},
      {"pretrain", InstructionStyle::kRaw},
      {"dialogue", InstructionStyle::kRaw},
  };
  return kBuiltins;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

std::string_view to_string(GeneralizationLevel level) {
  switch (level) {
    case GeneralizationLevel::kFullyHeldOut: return "fully_held_out";
    case GeneralizationLevel::kPartiallySupervised: return "partially_supervised";
    case GeneralizationLevel::kFullySupervised: return "fully_supervised";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  fail(ErrorKind::kParse, "unknown split '" + std::string(s) + "'");
}

GeneralizationLevel parse_generalization_level(std::string_view s) {
  if (s == "fully_held_out") return GeneralizationLevel::kFullyHeldOut;
  if (s == "partially_supervised") return GeneralizationLevel::kPartiallySupervised;
  if (s == "fully_supervised") return GeneralizationLevel::kFullySupervised;
  fail(ErrorKind::kParse, "unknown generalization level '" + std::string(s) + "'");
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kRougeLF1: return "rouge_l_f1";
    case Metric::kExactMatch: return "exact_match";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  if (s == "accuracy") return Metric::kAccuracy;
  if (s == "rouge_l_f1") return Metric::kRougeLF1;
  if (s == "exact_match") return Metric::kExactMatch;
  fail(ErrorKind::kParse, "unknown metric '" + std::string(s) + "'");
}

std::size_t default_example_cap(std::string_view benchmark) {
  return benchmark == "flan" ? kFlanExampleCap : kDefaultExampleCap;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  const std::string ctx = path.string();
  Manifest m;
  if (auto it = j.find("benchmarks"); it != j.end()) {
    for (const auto& b : *it) {
      m.benchmarks.push_back({string_field(b, "name", ctx),
                              parse_instruction_style(string_field(b, "instruction_style", ctx))});
    }
  }
  auto tasks = j.find("tasks");
  if (tasks == j.end() || !tasks->is_array()) fail(ErrorKind::kParse, ctx + ": missing \"tasks\" array");
  for (const auto& t : *tasks) {
    TaskDescriptor d;
    d.task_id = string_field(t, "task_id", ctx);
    const std::string tctx = ctx + " task " + d.task_id;
    d.benchmark = string_field(t, "benchmark", tctx);
    d.category = string_field(t, "category", tctx);
    d.data_source = optional_string(t, "data_source", tctx).value_or(d.task_id);
    d.records_path = base / string_field(t, "records_path", tctx);
    if (auto it = t.find("example_cap"); it != t.end()) {
      if (!it->is_number_integer() || it->get<long long>() <= 0) {
        fail(ErrorKind::kParse, tctx + ": example_cap must be a positive integer");
      }
      d.example_cap = it->get<std::size_t>();
    }
    d.logical_task = optional_string(t, "logical_task", tctx);
    if (auto s = optional_string(t, "split", tctx)) d.split = parse_split(*s);
    if (auto s = optional_string(t, "metric", tctx)) d.metric = parse_metric(*s);
    if (auto it = t.find("templates"); it != t.end()) {
      for (const auto& tj : *it) d.templates.push_back(template_from_json(tj, tctx));
    }
    if (auto s = optional_string(t, "templates_path", tctx)) {
      auto more = load_templates(base / *s);
      d.templates.insert(d.templates.end(), more.begin(), more.end());
    }
    m.tasks.push_back(std::move(d));
  }
  return m;
}

std::vector<RawRecord> parse_records(std::istream& in, std::string_view origin,
                                     bool require_target) {
  std::vector<RawRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = std::string(origin) + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::kParse, ctx + ": " + e.what());
    }
    if (!j.is_object()) fail(ErrorKind::kParse, ctx + ": record must be an object");
    RawRecord r;
    r.record_id = string_field(j, "record_id", ctx);
    r.source = optional_string(j, "source", ctx).value_or("");
    if (auto turns = j.find("turns"); turns != j.end() && !j.contains("target")) {
      if (!turns->is_array()) fail(ErrorKind::kParse, ctx + ": \"turns\" must be an array");
      r = format_dialogue(r.record_id, turns->get<std::vector<std::string>>());
    } else if (auto t = optional_string(j, "target", ctx)) {
      r.target = *t;
    } else if (require_target) {
      fail(ErrorKind::kParse, ctx + ": missing string field \"target\"");
    }
    if (require_target && r.target.empty()) {
      fail(ErrorKind::kValidation, ctx + ": empty target on a training record");
    }
    if (auto c = j.find("candidates"); c != j.end() && !c->is_null()) {
      if (!c->is_array()) fail(ErrorKind::kParse, ctx + ": \"candidates\" must be an array");
      r.candidates = c->get<std::vector<std::string>>();
      if (std::find(r.candidates->begin(), r.candidates->end(), r.target) ==
          r.candidates->end()) {
        fail(ErrorKind::kValidation, ctx + ": target is not among candidates");
      }
    }
    r.template_id = optional_string(j, "template_id", ctx);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PromptTemplate> load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open templates " + path.string());
  std::vector<PromptTemplate> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    try {
      out.push_back(template_from_json(json::parse(line), ctx));
    } catch (const json::exception& e) {
      fail(ErrorKind::kParse, ctx + ": " + e.what());
    }
  }
  return out;
}

void Registry::add_benchmark(BenchmarkId benchmark) {
  for (auto& b : benchmarks_) {
    if (b.name == benchmark.name) {
      if (b.instruction_style != benchmark.instruction_style) {
        fail(ErrorKind::kConflict, "benchmark '" + b.name + "' registered with two styles");
      }
      return;
    }
  }
  benchmarks_.push_back(std::move(benchmark));
}

const BenchmarkId* Registry::find_benchmark(std::string_view name) const {
  for (const auto& b : benchmarks_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Task& Registry::add_task(Task task) {
  if (index_.count(task.spec.task_id)) {
    fail(ErrorKind::kConflict, "duplicate task_id '" + task.spec.task_id + "'");
  }
  if (!find_benchmark(task.spec.benchmark)) {
    fail(ErrorKind::kValidation,
         "task '" + task.spec.task_id + "' names unknown benchmark '" + task.spec.benchmark + "'");
  }
  index_.emplace(task.spec.task_id, tasks_.size());
  tasks_.push_back(std::move(task));
  return tasks_.back();
}

const Task* Registry::find(std::string_view task_id) const {
  auto it = index_.find(std::string(task_id));
  return it == index_.end() ? nullptr : &tasks_[it->second];
}

Task& Registry::mutable_task(std::string_view task_id) {
  auto it = index_.find(std::string(task_id));
  if (it == index_.end()) fail(ErrorKind::kInvalidArgument, "unknown task '" + std::string(task_id) + "'");
  return tasks_[it->second];
}

InstructionStyle Registry::style_of(const Task& task) const {
  const auto* b = find_benchmark(task.spec.benchmark);
  return b ? b->instruction_style : InstructionStyle::kInstanceLevel;
}

const TaskSpec& ingest_task(Registry& registry, const TaskDescriptor& entry) {
  std::ifstream in(entry.records_path);
  if (!in) fail(ErrorKind::kIo, "cannot open records file " + entry.records_path.string());
  return ingest_task(registry, entry, in);
}

const TaskSpec& ingest_task(Registry& registry, const TaskDescriptor& entry,
                            std::istream& records) {
  if (registry.find(entry.task_id)) {
    fail(ErrorKind::kConflict, "duplicate task_id '" + entry.task_id + "'");
  }
  if (!registry.find_benchmark(entry.benchmark)) {
    for (const auto& b : builtin_benchmarks()) {
      if (b.name == entry.benchmark) registry.add_benchmark(b);
    }
  }
  const BenchmarkId* bench = registry.find_benchmark(entry.benchmark);
  if (!bench) fail(ErrorKind::kValidation, "task '" + entry.task_id + "': unknown benchmark '" + entry.benchmark + "'");

  const bool train = !entry.split || *entry.split == Split::kTrain;
  Task task;
  task.records = parse_records(records, entry.records_path.string(), train);
  task.spec.task_id = entry.task_id;
  task.spec.benchmark = entry.benchmark;
  task.spec.category = entry.category;
  task.spec.data_source = entry.data_source.empty() ? entry.task_id : entry.data_source;
  task.spec.logical_task = entry.logical_task.value_or(entry.task_id);
  task.spec.example_cap = entry.example_cap.value_or(default_example_cap(entry.benchmark));
  task.spec.num_examples = task.records.size();
  task.spec.metric = entry.metric;
  task.spec.declared_split = entry.split;
  if (entry.split) task.spec.split = *entry.split;

  if (bench->instruction_style == InstructionStyle::kRaw) {
    task.templates = {raw_template()};
  } else if (entry.templates.empty()) {
    task.templates = {default_template(bench->instruction_style)};
  } else {
    task.templates = entry.templates;
    const auto expected = bench->instruction_style == InstructionStyle::kTaskLevel
                              ? InstructionStyle::kTaskLevel
                              : InstructionStyle::kInstanceLevel;
    for (const auto& t : task.templates) {
      if (t.instruction_style != expected) {
        fail(ErrorKind::kValidation, "task '" + entry.task_id + "': template '" + t.template_id +
                                         "' is " + std::string(to_string(t.instruction_style)) +
                                         " but benchmark '" + bench->name + "' is " +
                                         std::string(to_string(bench->instruction_style)));
      }
    }
  }
  if (task.records.empty()) {
    warn("task '" + entry.task_id + "': records file " + entry.records_path.string() + " is empty");
  }
  return registry.add_task(std::move(task)).spec;
}

Task cap_examples(const Task& task, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) fail(ErrorKind::kInvalidArgument, "example cap must be positive");
  if (task.records.size() <= cap) return task;
  Rng rng(derive_seed(seed, task.spec.task_id));
  auto keep = rng.sample_without_replacement(task.records.size(), cap);
  std::sort(keep.begin(), keep.end());
  Task out;
  out.spec = task.spec;
  out.templates = task.templates;
  out.eval_records = task.eval_records;
  out.records.reserve(cap);
  for (std::size_t i : keep) out.records.push_back(task.records[i]);
  out.spec.num_examples = out.records.size();
  return out;
}

SplitPlan load_split_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open split plan " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  SplitPlan plan;
  try {
    if (j.contains("held_out_categories")) {
      plan.held_out_categories = j["held_out_categories"].get<std::set<std::string>>();
    }
    if (j.contains("partially_held_tasks")) {
      plan.partially_held_tasks =
          j["partially_held_tasks"].get<std::map<std::string, std::set<std::string>>>();
    }
    if (j.contains("supervised_eval_tasks")) {
      plan.supervised_eval_tasks = j["supervised_eval_tasks"].get<std::set<std::string>>();
    }
    if (j.contains("supervised_eval_fraction")) {
      plan.supervised_eval_fraction = j["supervised_eval_fraction"].get<double>();
    }
    if (j.contains("eval_split")) plan.eval_split = parse_split(j["eval_split"].get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return plan;
}

Registry assign_splits(const Registry& registry, const SplitPlan& plan) {
  if (plan.eval_split == Split::kTrain) {
    fail(ErrorKind::kInvalidArgument, "eval_split must be validation or test");
  }
  if (!(plan.supervised_eval_fraction > 0.0 && plan.supervised_eval_fraction < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "supervised_eval_fraction must lie in (0, 1)");
  }
  std::map<std::string, GeneralizationLevel> level;
  auto assign = [&](const std::string& id, GeneralizationLevel l) {
    if (!registry.find(id)) fail(ErrorKind::kInvalidArgument, "split plan names unknown task '" + id + "'");
    auto [it, inserted] = level.emplace(id, l);
    if (!inserted && it->second != l) {
      fail(ErrorKind::kConflict, "task '" + id + "' assigned to both " +
                                     std::string(to_string(it->second)) + " and " +
                                     std::string(to_string(l)));
    }
  };

  for (const auto& task : registry.tasks()) {
    if (plan.held_out_categories.count(task.spec.category)) {
      if (task.spec.declared_split == Split::kTrain) {
        fail(ErrorKind::kConflict, "held-out category '" + task.spec.category +
                                       "' contains train task '" + task.spec.task_id + "'");
      }
      assign(task.spec.task_id, GeneralizationLevel::kFullyHeldOut);
    }
  }
  for (const auto& [category, ids] : plan.partially_held_tasks) {
    if (plan.held_out_categories.count(category)) {
      fail(ErrorKind::kConflict, "category '" + category + "' is both held out and partially held");
    }
    for (const auto& id : ids) {
      assign(id, GeneralizationLevel::kPartiallySupervised);
      const Task* t = registry.find(id);
      if (t->spec.category != category) {
        fail(ErrorKind::kValidation, "task '" + id + "' listed under category '" + category +
                                         "' but belongs to '" + t->spec.category + "'");
      }
      if (t->spec.declared_split == Split::kTrain) {
        fail(ErrorKind::kConflict, "partially held task '" + id + "' is declared train");
      }
    }
  }
  for (const auto& id : plan.supervised_eval_tasks) {
    assign(id, GeneralizationLevel::kFullySupervised);
    if (plan.held_out_categories.count(registry.find(id)->spec.category)) {
      fail(ErrorKind::kConflict, "supervised task '" + id + "' sits in a held-out category");
    }
  }

  Registry out;
  for (const auto& b : registry.benchmarks()) out.add_benchmark(b);
  std::set<std::string> train_sources;
  std::map<std::string, std::size_t> train_per_category;
  for (const auto& task : registry.tasks()) {
    Task t = task;
    // Re-annotation starts from the ingested state.
    t.records.insert(t.records.end(), t.eval_records.begin(), t.eval_records.end());
    t.eval_records.clear();
    auto it = level.find(t.spec.task_id);
    const bool eval_only = it != level.end() && it->second != GeneralizationLevel::kFullySupervised;
    if (eval_only) {
      t.spec.split = plan.eval_split;
      t.spec.generalization_level = it->second;
      t.spec.evaluated = true;
      t.eval_records = std::move(t.records);
      t.records.clear();
    } else if (t.spec.declared_split && *t.spec.declared_split != Split::kTrain) {
      fail(ErrorKind::kConflict, "task '" + t.spec.task_id + "' is declared " +
                                     std::string(to_string(*t.spec.declared_split)) +
                                     " but the plan leaves it in train");
    } else {
      t.spec.split = Split::kTrain;
      t.spec.generalization_level = GeneralizationLevel::kFullySupervised;
      t.spec.evaluated = it != level.end();
      if (t.spec.evaluated) {
        std::vector<RawRecord> train;
        for (auto& r : t.records) {
          (lands_in_eval(t.spec.task_id, r.record_id, plan.supervised_eval_fraction)
               ? t.eval_records
               : train)
              .push_back(std::move(r));
        }
        t.records = std::move(train);
      }
      train_sources.insert(t.spec.data_source);
      ++train_per_category[t.spec.category];
    }
    t.spec.num_examples = t.records.size() + t.eval_records.size();
    out.add_task(std::move(t));
  }

  for (const auto& task : out.tasks()) {
    if (task.spec.split == Split::kTrain) continue;
    if (train_sources.count(task.spec.data_source)) {
      fail(ErrorKind::kConflict, "eval task '" + task.spec.task_id + "' shares data source '" +
                                     task.spec.data_source + "' with a train task");
    }
    if (task.spec.generalization_level == GeneralizationLevel::kPartiallySupervised &&
        train_per_category[task.spec.category] == 0) {
      fail(ErrorKind::kValidation, "partially held category '" + task.spec.category +
                                       "' has no remaining train tasks");
    }
  }
  return out;
}

}  // namespace imix
