#include "instructmix/registry_io.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "instructmix/error.hpp"
#include "instructmix/rng.hpp"

namespace imix {

using nlohmann::ordered_json;

namespace {

ordered_json template_to_json(const PromptTemplate& t) {
  ordered_json j;
  j["template_id"] = t.template_id;
  j["instruction_style"] = to_string(t.instruction_style);
  j["instruction_text"] = t.instruction_text;
  j["output_field"] = t.output_field;
  if (!t.task_description.empty()) j["task_description"] = t.task_description;
  return j;
}

PromptTemplate template_from_json(const ordered_json& j) {
  PromptTemplate t;
  t.template_id = j.at("template_id").get<std::string>();
  t.instruction_style = parse_instruction_style(j.at("instruction_style").get<std::string>());
  t.instruction_text = j.at("instruction_text").get<std::string>();
  t.output_field = j.at("output_field").get<std::string>();
  t.task_description = j.value("task_description", std::string());
  return t;
}

std::string records_file(std::size_t index, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "task_%05zu.%s.jsonl", index, kind);
  return buf;
}

void write_records(const std::filesystem::path& path, const std::vector<RawRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : records) write_record_line(out, r);
}

std::vector<RawRecord> read_records(const std::filesystem::path& path, bool require_target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return parse_records(in, path.string(), require_target);
}

}  // namespace

void write_record_line(std::ostream& out, const RawRecord& r) {
  ordered_json j;
  j["record_id"] = r.record_id;
  j["source"] = r.source;
  j["target"] = r.target;
  if (r.candidates) j["candidates"] = *r.candidates;
  if (r.template_id) j["template_id"] = *r.template_id;
  out << j.dump() << '\n';
}

void save_registry(const Registry& registry, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "records");
  ordered_json root;
  root["format"] = "instructmix-registry/1";
  ordered_json benchmarks = ordered_json::array();
  for (const auto& b : registry.benchmarks()) {
    benchmarks.push_back({{"name", b.name}, {"instruction_style", to_string(b.instruction_style)}});
  }
  root["benchmarks"] = benchmarks;
  ordered_json tasks = ordered_json::array();
  for (std::size_t i = 0; i < registry.tasks().size(); ++i) {
    const auto& t = registry.tasks()[i];
    const auto& s = t.spec;
    ordered_json j;
    j["task_id"] = s.task_id;
    j["benchmark"] = s.benchmark;
    j["category"] = s.category;
    j["data_source"] = s.data_source;
    j["logical_task"] = s.logical_task;
    j["split"] = to_string(s.split);
    j["generalization_level"] = to_string(s.generalization_level);
    j["evaluated"] = s.evaluated;
    j["example_cap"] = s.example_cap;
    j["num_examples"] = s.num_examples;
    if (s.metric) j["metric"] = to_string(*s.metric);
    if (s.declared_split) j["declared_split"] = to_string(*s.declared_split);
    ordered_json templates = ordered_json::array();
    for (const auto& tmpl : t.templates) templates.push_back(template_to_json(tmpl));
    j["templates"] = templates;
    j["train_records"] = records_file(i, "train");
    j["eval_records"] = records_file(i, "eval");
    tasks.push_back(j);
    write_records(dir / "records" / records_file(i, "train"), t.records);
    write_records(dir / "records" / records_file(i, "eval"), t.eval_records);
  }
  root["tasks"] = tasks;
  std::ofstream out(dir / "registry.json", std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "registry.json").string());
  out << root.dump(2) << '\n';
}

Registry load_registry(const std::filesystem::path& dir) {
  const auto path = dir / "registry.json";
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open registry " + path.string());
  Registry reg;
  try {
    const auto root = ordered_json::parse(in);
    for (const auto& b : root.at("benchmarks")) {
      reg.add_benchmark({b.at("name").get<std::string>(),
                         parse_instruction_style(b.at("instruction_style").get<std::string>())});
    }
    for (const auto& j : root.at("tasks")) {
      Task t;
      auto& s = t.spec;
      s.task_id = j.at("task_id").get<std::string>();
      s.benchmark = j.at("benchmark").get<std::string>();
      s.category = j.at("category").get<std::string>();
      s.data_source = j.at("data_source").get<std::string>();
      s.logical_task = j.at("logical_task").get<std::string>();
      s.split = parse_split(j.at("split").get<std::string>());
      s.generalization_level = parse_generalization_level(j.at("generalization_level").get<std::string>());
      s.evaluated = j.at("evaluated").get<bool>();
      s.example_cap = j.at("example_cap").get<std::size_t>();
      s.num_examples = j.at("num_examples").get<std::size_t>();
      if (j.contains("metric")) s.metric = parse_metric(j["metric"].get<std::string>());
      if (j.contains("declared_split")) s.declared_split = parse_split(j["declared_split"].get<std::string>());
      for (const auto& tj : j.at("templates")) t.templates.push_back(template_from_json(tj));
      t.records = read_records(dir / "records" / j.at("train_records").get<std::string>(), false);
      t.eval_records = read_records(dir / "records" / j.at("eval_records").get<std::string>(), false);
      reg.add_task(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return reg;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace imix
