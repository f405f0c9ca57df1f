#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "instructmix/corpus.hpp"
#include "instructmix/dedup.hpp"
#include "instructmix/error.hpp"
#include "instructmix/eval.hpp"
#include "instructmix/mixture.hpp"
#include "instructmix/packing.hpp"
#include "instructmix/parallel.hpp"
#include "instructmix/prompting.hpp"
#include "instructmix/registry_io.hpp"
#include "instructmix/scorer.hpp"
#include "instructmix/tokenizer.hpp"

namespace imix::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RefusedOverwrite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool force = false;
  std::string out;
};

void require_seed(const CLI::App& app) {
  if (app.count("--seed") == 0) fail(ErrorKind::kInvalidArgument, "--seed is required for " + app.get_name());
}

// Refuses to touch an existing output unless forced; a forced directory is
// cleared so no stale shards survive.
void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    const bool occupied = !fs::is_directory(dir) || !fs::is_empty(dir);
    if (occupied && !force) throw RefusedOverwrite("output " + dir.string() + " exists; pass --force to overwrite");
    if (occupied) fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void prepare_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) {
    throw RefusedOverwrite("output " + file.string() + " exists; pass --force to overwrite");
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

void write_run_manifest(const fs::path& path, const std::string& command, ordered_json settings,
                        const Common& common) {
  ordered_json j;
  j["tool"] = "instructmix";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = common.seed;
  j["workers"] = common.workers;
  j["settings"] = std::move(settings);
  write_text(path, j.dump(2) + "\n");
}

// digests.txt lists every data file (relative path and FNV-1a digest);
// run.json is excluded so worker count does not change it.
void write_digests(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir);
    if (rel == "run.json" || rel == "digests.txt") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) text += file_digest(dir / f) + "  " + f.generic_string() + "\n";
  write_text(dir / "digests.txt", text);
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      fail(ErrorKind::kParse, "bad integer list '" + s + "'");
    }
    out.push_back(std::stoul(part));
  }
  if (out.empty()) fail(ErrorKind::kParse, "empty integer list");
  return out;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string manifest;
};

int cmd_ingest(const IngestArgs& a, const Common& c, std::ostream& out) {
  if (!fs::exists(a.manifest)) fail(ErrorKind::kIo, "manifest not found: " + a.manifest);
  const Manifest manifest = load_manifest(a.manifest);
  for (const auto& d : manifest.tasks) {
    if (!fs::exists(d.records_path)) fail(ErrorKind::kIo, "records file not found: " + d.records_path.string());
  }
  const fs::path dir = c.out;
  prepare_dir(dir, c.force);

  // Parse in parallel into scratch registries, register in manifest order.
  std::vector<Registry> scratch(manifest.tasks.size());
  parallel_for(manifest.tasks.size(), c.workers, [&](std::size_t i) {
    for (const auto& b : manifest.benchmarks) scratch[i].add_benchmark(b);
    ingest_task(scratch[i], manifest.tasks[i]);
  });
  Registry registry;
  for (const auto& b : manifest.benchmarks) registry.add_benchmark(b);
  std::size_t capped = 0;
  for (auto& s : scratch) {
    for (const auto& b : s.benchmarks()) registry.add_benchmark(b);
    const Task& t = s.tasks().front();
    Task kept = cap_examples(t, t.spec.example_cap, c.seed);
    capped += t.records.size() - kept.records.size();
    registry.add_task(std::move(kept));
  }
  save_registry(registry, dir);
  ordered_json settings;
  settings["manifest"] = a.manifest;
  write_run_manifest(dir / "run.json", "ingest", settings, c);
  write_digests(dir);
  out << "registered " << registry.size() << " tasks";
  if (capped) out << " (" << capped << " records dropped by example caps)";
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- splits

struct SplitsArgs {
  std::string registry;
  std::string plan;
};

int cmd_splits(const SplitsArgs& a, const Common& c, std::ostream& out) {
  const Registry reg = load_registry(a.registry);
  const SplitPlan plan = load_split_plan(a.plan);
  const Registry annotated = assign_splits(reg, plan);
  prepare_dir(c.out, c.force);
  save_registry(annotated, c.out);
  ordered_json settings;
  settings["registry"] = a.registry;
  settings["plan"] = a.plan;
  write_run_manifest(fs::path(c.out) / "run.json", "splits", settings, c);
  write_digests(c.out);
  std::map<std::string, std::size_t> counts;
  for (const auto& t : annotated.tasks()) {
    if (t.spec.split == Split::kTrain) ++counts["train"];
    if (t.spec.evaluated) ++counts[std::string(to_string(t.spec.generalization_level))];
  }
  out << "train tasks " << counts["train"] << ", eval tasks: fully_held_out " << counts["fully_held_out"]
      << ", partially_supervised " << counts["partially_supervised"] << ", fully_supervised "
      << counts["fully_supervised"] << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
  std::string registry;
  std::string tokenizer = "byte";
};

int cmd_stats(const StatsArgs& a, const Common& c, std::ostream& out) {
  const Registry reg = load_registry(a.registry);
  const auto tok = make_tokenizer(a.tokenizer);
  const auto stats = registry_stats(reg, *tok, c.seed);
  std::ostringstream table;
  table << "level\tkey\ttasks\texamples\tprompts_per_task\tmean_prompt_tokens\tstd_prompt_tokens\n";
  auto row = [&](const char* level, const StatsRow& r) {
    table << level << '\t' << r.key << '\t' << r.tasks << '\t' << r.examples << '\t' << fmt(r.prompts_per_task, 3)
          << '\t' << fmt(r.mean_prompt_tokens, 3) << '\t' << fmt(r.std_prompt_tokens, 3) << '\n';
  };
  for (const auto& r : stats.by_benchmark) row("benchmark", r);
  for (const auto& r : stats.by_category) row("category", r);
  row("total", stats.total);
  if (c.out.empty()) {
    out << table.str();
  } else {
    prepare_file(c.out, c.force);
    write_text(c.out, table.str());
    out << "wrote " << c.out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- dedup

struct DedupArgs {
  std::string registry;
  double threshold = kDefaultOverlapThreshold;
};

int cmd_dedup(const DedupArgs& a, const Common& c, std::ostream& out) {
  const Registry reg = load_registry(a.registry);
  const auto entries = dedup_report(reg, a.threshold, c.seed, c.workers);
  prepare_file(c.out, c.force);
  std::ostringstream text;
  write_overlap_report(text, entries);
  write_text(c.out, text.str());
  const auto flagged = std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.flagged; });
  out << entries.size() << " task pairs, " << flagged << " above threshold " << a.threshold << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- mixture

struct MixtureArgs {
  std::string registry;
  std::string config;
  std::string proportions;
  std::size_t eps = 4096;
  double aux_pretrain = 0.0;
  double aux_reasoning = 0.0;
  double aux_dialogue = 0.0;
  std::size_t draws = 100000;
  std::size_t shard_size = 10000;
};

int cmd_mixture(const MixtureArgs& a, const Common& c, const CLI::App& app, std::ostream& out) {
  const Registry reg = load_registry(a.registry);
  MixtureConfig cfg;
  cfg.seed = c.seed;
  if (!a.config.empty()) cfg = load_mixture_config(a.config, cfg);
  if (app.count("--eps")) cfg.eps = a.eps;
  if (app.count("--proportions")) cfg.benchmark_proportions = parse_proportions(a.proportions);
  if (app.count("--aux-pretrain")) cfg.aux.pretrain = a.aux_pretrain;
  if (app.count("--aux-reasoning")) cfg.aux.reasoning = a.aux_reasoning;
  if (app.count("--aux-dialogue")) cfg.aux.dialogue = a.aux_dialogue;
  if (app.count("--seed") || a.config.empty()) cfg.seed = c.seed;
  if (a.shard_size == 0) fail(ErrorKind::kInvalidArgument, "--shard-size must be positive");

  const SamplingWeights w = mixture_weights(reg, cfg);
  const fs::path dir = c.out;
  prepare_dir(dir, c.force);
  fs::create_directories(dir / "shards");

  const std::size_t shards = (a.draws + a.shard_size - 1) / a.shard_size;
  std::vector<std::map<std::string, std::size_t>> counts(shards);
  parallel_for(shards, c.workers, [&](std::size_t s) {
    const std::size_t n = std::min(a.shard_size, a.draws - s * a.shard_size);
    const auto draws = materialize_shard(w, reg, cfg.seed, s, n);
    std::string text;
    for (const auto& d : draws) {
      const Task* t = reg.find(d.task_id);
      ordered_json j;
      j["task_id"] = d.task_id;
      j["record_id"] = t->records[d.record_index].record_id;
      text += j.dump();
      text += '\n';
      ++counts[s][t->spec.benchmark];
    }
    char name[64];
    std::snprintf(name, sizeof(name), "stream_%05zu.jsonl", s);
    write_text(dir / "shards" / name, text);
  });

  std::map<std::string, std::size_t> total;
  for (const auto& m : counts) {
    for (const auto& [b, n] : m) total[b] += n;
  }
  ordered_json stats;
  stats["draws"] = a.draws;
  stats["shards"] = shards;
  ordered_json bench = ordered_json::object();
  for (const auto& [b, p] : w.per_benchmark) {
    const double empirical = a.draws ? static_cast<double>(total[b]) / static_cast<double>(a.draws) : 0.0;
    bench[b] = {{"configured", p}, {"empirical", empirical}, {"draws", total[b]}};
  }
  stats["per_benchmark"] = bench;
  ordered_json tasks = ordered_json::object();
  for (const auto& [t, p] : w.per_task) tasks[t] = p;
  stats["per_task"] = tasks;
  write_text(dir / "stats.json", stats.dump(2) + "\n");

  ordered_json settings;
  settings["registry"] = a.registry;
  settings["config"] = a.config;
  settings["eps"] = cfg.eps;
  ordered_json props = ordered_json::object();
  for (const auto& [b, p] : cfg.benchmark_proportions) props[b] = p;
  settings["benchmark_proportions"] = props;
  settings["aux_proportions"] = {{"pretrain", cfg.aux.pretrain}, {"reasoning", cfg.aux.reasoning},
                                 {"dialogue", cfg.aux.dialogue}};
  settings["mixture_seed"] = cfg.seed;
  settings["draws"] = a.draws;
  settings["shard_size"] = a.shard_size;
  write_run_manifest(dir / "run.json", "mixture", settings, c);
  write_digests(dir);

  for (const auto& [b, p] : w.per_benchmark) {
    const double empirical = a.draws ? static_cast<double>(total[b]) / static_cast<double>(a.draws) : 0.0;
    out << b << "\tconfigured " << fmt(p) << "\tempirical " << fmt(empirical) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- pack

struct PackArgs {
  std::string registry;
  std::string stream;
  std::string tokenizer = "byte";
  std::size_t seq_len = kDefaultSequenceLength;
  bool metaicl = false;
  double zipf_a = 2.0;
  std::size_t cap_k = 5;
  std::string loss_variant = "standard";
};

struct ShardPackStats {
  std::size_t examples = 0;
  std::size_t sequences = 0;
  std::size_t dropped = 0;
  std::size_t tokens = 0;
  std::size_t pad = 0;
};

int cmd_pack(const PackArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const Registry reg = load_registry(a.registry);
  const auto tok = make_tokenizer(a.tokenizer);
  if (a.seq_len == 0) fail(ErrorKind::kInvalidArgument, "--seq-len must be positive");
  MetaICLConfig mcfg;
  mcfg.zipf_a = a.zipf_a;
  mcfg.cap_k = a.cap_k;
  mcfg.loss_variant = parse_loss_variant(a.loss_variant);
  if (a.metaicl) mcfg.validate();

  const fs::path stream_dir = fs::path(a.stream) / "shards";
  if (!fs::is_directory(stream_dir)) fail(ErrorKind::kIo, "stream shards not found under " + a.stream);
  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(stream_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") inputs.push_back(e.path());
  }
  std::sort(inputs.begin(), inputs.end());

  // Per-task lookup tables built once, read-only afterwards.
  struct TaskView {
    const Task* task = nullptr;
    std::map<std::string, std::size_t> by_record;
    std::vector<PromptAssignment> assignment;
  };
  std::map<std::string, TaskView> views;
  for (const auto& t : reg.tasks()) {
    if (t.spec.split != Split::kTrain || t.records.empty()) continue;
    TaskView v;
    v.task = &t;
    for (std::size_t i = 0; i < t.records.size(); ++i) v.by_record.emplace(t.records[i].record_id, i);
    v.assignment = merge_prompts(t.records, t.templates, derive_seed(c.seed, "merge/" + t.spec.task_id));
    views.emplace(t.spec.task_id, std::move(v));
  }

  const fs::path dir = c.out;
  prepare_dir(dir, c.force);
  std::vector<ShardPackStats> stats(inputs.size());
  std::vector<std::string> small_pools(inputs.size());
  parallel_for(inputs.size(), c.workers, [&](std::size_t s) {
    std::ifstream in(inputs[s]);
    if (!in) fail(ErrorKind::kIo, "cannot open " + inputs[s].string());
    const std::uint64_t shard_seed = derive_seed(c.seed, static_cast<std::uint64_t>(s));
    Packer packer(a.seq_len, tok->eos_id());
    std::vector<PackedSequence> seqs;
    auto& st = stats[s];
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::string ctx = inputs[s].string() + ":" + std::to_string(++line_no);
      std::string task_id, record_id;
      try {
        const auto j = nlohmann::json::parse(line);
        task_id = j.at("task_id").get<std::string>();
        record_id = j.at("record_id").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::kParse, ctx + ": " + e.what());
      }
      auto vit = views.find(task_id);
      if (vit == views.end()) fail(ErrorKind::kValidation, ctx + ": unknown training task '" + task_id + "'");
      const auto& view = vit->second;
      auto rit = view.by_record.find(record_id);
      if (rit == view.by_record.end()) fail(ErrorKind::kValidation, ctx + ": unknown record '" + record_id + "'");
      const std::size_t ri = rit->second;
      const auto& tmpl = view.task->templates[view.assignment[ri].template_index];
      Rng rng(derive_seed(shard_seed, static_cast<std::uint64_t>(st.examples)));
      RenderedExample rendered;
      const bool raw = tmpl.instruction_style == InstructionStyle::kRaw;
      if (a.metaicl && !raw && view.task->records.size() > mcfg.cap_k) {
        rendered = build_metaicl_example(view.task->records, ri, tmpl, mcfg, rng);
      } else {
        if (a.metaicl && !raw && small_pools[s].empty()) small_pools[s] = task_id;
        rendered = render_zero_shot(view.task->records[ri], tmpl, rng);
      }
      rendered.provenance.task_id = task_id;
      ++st.examples;
      auto truncated = left_truncate(tokenize_rendered(rendered, *tok), a.seq_len);
      if (!truncated) {
        ++st.dropped;
        continue;
      }
      st.tokens += truncated->tokens.size();
      if (auto closed = packer.push(*truncated)) seqs.push_back(std::move(*closed));
    }
    if (auto closed = packer.finish()) seqs.push_back(std::move(*closed));
    for (const auto& q : seqs) st.pad += q.pad_count;
    st.sequences = seqs.size();
    PackedShardHeader header;
    header.seq_len = static_cast<std::uint32_t>(a.seq_len);
    header.vocab_size = static_cast<std::uint32_t>(tok->vocab_size());
    header.eos_id = tok->eos_id();
    header.shard_seed = shard_seed;
    char name[64];
    std::snprintf(name, sizeof(name), "packed_%05zu.bin", s);
    write_packed_shard(dir / name, header, seqs);
  });

  ShardPackStats total;
  for (const auto& st : stats) {
    total.examples += st.examples;
    total.sequences += st.sequences;
    total.dropped += st.dropped;
    total.tokens += st.tokens;
    total.pad += st.pad;
  }
  for (const auto& t : small_pools) {
    if (!t.empty()) err << "warning: task '" << t << "' has too few records for MetaICL demonstrations; rendered zero-shot\n";
  }
  if (total.dropped) {
    err << "warning: " << total.dropped << " examples dropped because left truncation removed their whole target\n";
  }
  ordered_json js;
  js["examples"] = total.examples;
  js["sequences"] = total.sequences;
  js["dropped_truncated_targets"] = total.dropped;
  js["tokens"] = total.tokens;
  js["pad_tokens"] = total.pad;
  js["seq_len"] = a.seq_len;
  js["vocab_size"] = tok->vocab_size();
  write_text(dir / "pack_stats.json", js.dump(2) + "\n");

  ordered_json settings;
  settings["registry"] = a.registry;
  settings["stream"] = a.stream;
  settings["tokenizer"] = a.tokenizer;
  settings["seq_len"] = a.seq_len;
  settings["metaicl"] = a.metaicl;
  if (a.metaicl) {
    settings["zipf_a"] = a.zipf_a;
    settings["cap_k"] = a.cap_k;
    settings["loss_variant"] = a.loss_variant;
  }
  write_run_manifest(dir / "run.json", "pack", settings, c);
  write_digests(dir);
  out << "packed " << total.examples - total.dropped << " examples into " << total.sequences
      << " sequences of " << a.seq_len << " tokens (" << total.dropped << " dropped)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string registry;
  std::string scorer = "uniform";
  std::string shots = "0,5";
  std::size_t max_prompts = kDefaultMaxValidationPrompts;
  std::size_t max_gen_tokens = kDefaultMaxGenTokens;
  std::string separator{kInferenceDemoSeparator};
  std::string group_by = "category";
  std::string tokenizer = "byte";
};

std::unique_ptr<Scorer> build_scorer(const std::string& spec, const Tokenizer& tok,
                                     const std::vector<EvalItem>& items) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string param = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "uniform") {
    const std::size_t v = param.empty() ? tok.vocab_size() : parse_size_list(param).at(0);
    if (v < tok.vocab_size()) fail(ErrorKind::kConfiguration, "uniform scorer vocabulary smaller than tokenizer's");
    return make_uniform_scorer(v, tok.eos_id());
  }
  if (kind == "unigram") {
    std::ifstream in(param);
    if (!in) fail(ErrorKind::kIo, "cannot open unigram table " + param);
    std::vector<double> freq;
    try {
      freq = nlohmann::json::parse(in).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, param + ": " + e.what());
    }
    if (freq.size() < tok.vocab_size()) fail(ErrorKind::kConfiguration, "unigram table smaller than tokenizer vocabulary");
    return make_unigram_scorer(std::move(freq), tok.eos_id());
  }
  if (kind == "echo") return make_echo_scorer(oracle_scripts(items, tok), tok.vocab_size(), tok.eos_id());
  fail(ErrorKind::kConfiguration, "unknown scorer '" + spec + "' (uniform[:V], unigram:PATH, echo)");
}

int cmd_eval(const EvalArgs& a, const Common& c, std::ostream& out) {
  const Registry reg = load_registry(a.registry);
  const auto tok = make_tokenizer(a.tokenizer);
  EvalOptions opt;
  opt.shots = parse_size_list(a.shots);
  opt.max_prompts = a.max_prompts;
  opt.max_gen_tokens = a.max_gen_tokens;
  opt.separator = a.separator;
  opt.seed = c.seed;
  if (a.group_by != "category" && a.group_by != "benchmark") {
    fail(ErrorKind::kInvalidArgument, "--group-by must be category or benchmark");
  }
  const auto items = plan_eval(reg, opt);
  const auto scorer = build_scorer(a.scorer, *tok, items);
  const auto leaves = run_eval(reg, items, *scorer, *tok, c.workers);
  const auto report = aggregate(leaves, a.group_by == "benchmark" ? GroupBy::kBenchmark : GroupBy::kCategory);

  const fs::path dir = c.out;
  prepare_dir(dir, c.force);
  write_text(dir / "report.json", report_to_json(report));
  std::ostringstream table;
  write_leaf_table(table, report.leaves);
  write_text(dir / "leaves.tsv", table.str());
  ordered_json settings;
  settings["registry"] = a.registry;
  settings["scorer"] = a.scorer;
  settings["shots"] = opt.shots;
  settings["max_prompts"] = opt.max_prompts;
  settings["max_gen_tokens"] = opt.max_gen_tokens;
  settings["separator"] = opt.separator;
  settings["group_by"] = a.group_by;
  settings["tokenizer"] = a.tokenizer;
  write_run_manifest(dir / "run.json", "eval", settings, c);
  write_digests(dir);
  out << "evaluated " << items.size() << " prompts over " << leaves.size() << " task/shot cells; combined "
      << fmt(report.combined, 4) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::string& in_path, const Common& c, std::ostream& out) {
  std::ifstream in(in_path);
  if (!in) fail(ErrorKind::kIo, "cannot open report " + in_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const EvalReport report = report_from_json(buf.str());
  std::ostringstream text;
  print_report(text, report);
  if (c.out.empty()) {
    out << text.str();
  } else {
    prepare_file(c.out, c.force);
    write_text(c.out, text.str());
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool out_required, const char* out_help) {
  sub->add_option("--seed", c.seed, "Seed for every sampling step");
  sub->add_option("--workers", c.workers, "Parallel workers (output does not depend on this)")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--force", c.force, "Overwrite existing outputs");
  auto* o = sub->add_option("--out", c.out, out_help);
  if (out_required) o->required();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Instruction-tuning data pipeline and evaluation harness", "instructmix"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Validate a task manifest and write a registry");
  s_ingest->add_option("--manifest", ingest.manifest, "Task manifest (JSON)")->required();
  add_common(s_ingest, common, true, "Registry directory");

  SplitsArgs splits;
  auto* s_splits = app.add_subcommand("splits", "Assign train/eval splits and generalization levels");
  s_splits->add_option("--registry", splits.registry, "Registry directory")->required();
  s_splits->add_option("--plan", splits.plan, "Split plan (JSON)")->required();
  add_common(s_splits, common, true, "Annotated registry directory");

  StatsArgs stats;
  auto* s_stats = app.add_subcommand("stats", "Per-benchmark and per-category registry statistics");
  s_stats->add_option("--registry", stats.registry, "Registry directory")->required();
  s_stats->add_option("--tokenizer", stats.tokenizer, "Tokenizer spec")->capture_default_str();
  add_common(s_stats, common, false, "Write the table here instead of stdout");

  DedupArgs dedup;
  auto* s_dedup = app.add_subcommand("dedup", "13-gram overlap report between eval and train tasks");
  s_dedup->add_option("--registry", dedup.registry, "Split-annotated registry")->required();
  s_dedup->add_option("--threshold", dedup.threshold, "Flag pairs above this overlap fraction")
      ->capture_default_str();
  add_common(s_dedup, common, true, "Report file (JSONL)");

  MixtureArgs mix;
  auto* s_mix = app.add_subcommand("mixture", "Materialize a seeded training mixture stream");
  s_mix->add_option("--registry", mix.registry, "Registry directory")->required();
  s_mix->add_option("--config", mix.config, "Mixture config (JSON)");
  s_mix->add_option("--proportions", mix.proportions,
                    "Benchmark shares crossfit/exmix/flan/niv2/promptsource/t5/uskg, e.g. 4/2/20/25/45/2/2");
  s_mix->add_option("--eps", mix.eps, "Per-task size cap for example-proportional weights")->capture_default_str();
  s_mix->add_option("--aux-pretrain", mix.aux_pretrain, "Pre-training data share");
  s_mix->add_option("--aux-reasoning", mix.aux_reasoning, "Reasoning data share (taken from the largest benchmark)");
  s_mix->add_option("--aux-dialogue", mix.aux_dialogue, "Dialogue data share");
  s_mix->add_option("--draws", mix.draws, "Total draws")->capture_default_str();
  s_mix->add_option("--shard-size", mix.shard_size, "Draws per shard")->capture_default_str();
  add_common(s_mix, common, true, "Output directory");

  PackArgs pk;
  auto* s_pack = app.add_subcommand("pack", "Render, tokenize and pack a stream into fixed-length shards");
  s_pack->add_option("--registry", pk.registry, "Registry directory")->required();
  s_pack->add_option("--stream", pk.stream, "Output directory of `mixture`")->required();
  s_pack->add_option("--tokenizer", pk.tokenizer, "Tokenizer spec")->capture_default_str();
  s_pack->add_option("--seq-len", pk.seq_len, "Packed sequence length")->capture_default_str();
  s_pack->add_flag("--metaicl", pk.metaicl, "Prepend Zipf-sampled demonstrations");
  s_pack->add_option("--zipf-a", pk.zipf_a, "Zipf shape for the demonstration count")->capture_default_str();
  s_pack->add_option("--cap-k", pk.cap_k, "Maximum demonstrations")->capture_default_str();
  s_pack->add_option("--loss-variant", pk.loss_variant, "standard or suffix")->capture_default_str();
  add_common(s_pack, common, true, "Output directory");

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Evaluate a scorer on the registry's eval tasks");
  s_eval->add_option("--registry", ev.registry, "Split-annotated registry")->required();
  s_eval->add_option("--scorer", ev.scorer, "uniform[:V], unigram:PATH or echo")->capture_default_str();
  s_eval->add_option("--shots", ev.shots, "Comma-separated shot counts")->capture_default_str();
  s_eval->add_option("--max-prompts", ev.max_prompts, "Validation prompts per task")->capture_default_str();
  s_eval->add_option("--max-gen-tokens", ev.max_gen_tokens, "Greedy decoding limit")->capture_default_str();
  s_eval->add_option("--separator", ev.separator, "Demonstration separator");
  s_eval->add_option("--group-by", ev.group_by, "category or benchmark")->capture_default_str();
  s_eval->add_option("--tokenizer", ev.tokenizer, "Tokenizer spec")->capture_default_str();
  add_common(s_eval, common, true, "Output directory");

  std::string report_in;
  auto* s_report = app.add_subcommand("report", "Print the aggregation tree of an eval report");
  s_report->add_option("--in", report_in, "report.json from `eval`")->required();
  add_common(s_report, common, false, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*s_ingest) {
      require_seed(*s_ingest);
      return cmd_ingest(ingest, common, out);
    }
    if (*s_splits) return cmd_splits(splits, common, out);
    if (*s_stats) return cmd_stats(stats, common, out);
    if (*s_dedup) {
      require_seed(*s_dedup);
      return cmd_dedup(dedup, common, out);
    }
    if (*s_mix) {
      require_seed(*s_mix);
      return cmd_mixture(mix, common, *s_mix, out);
    }
    if (*s_pack) {
      require_seed(*s_pack);
      return cmd_pack(pk, common, out, err);
    }
    if (*s_eval) {
      require_seed(*s_eval);
      return cmd_eval(ev, common, out);
    }
    if (*s_report) return cmd_report(report_in, common, out);
  } catch (const RefusedOverwrite& e) {
    err << "error: " << e.what() << "\n";
    return kExitRefusedOverwrite;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kContract ? kExitInternal : kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace imix::cli
