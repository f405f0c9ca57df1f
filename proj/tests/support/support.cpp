#include "support.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <json.hpp>

#include "instructmix/rng.hpp"

namespace imix::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("imix_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RawRecord record(std::string id, std::string source, std::string target) {
  RawRecord r;
  r.record_id = std::move(id);
  r.source = std::move(source);
  r.target = std::move(target);
  return r;
}

std::string random_words(std::mt19937_64& gen, std::size_t count, std::size_t vocab) {
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (i) out += ' ';
    out += "w" + std::to_string(gen() % vocab);
  }
  return out;
}

std::filesystem::path write_demo_corpus(const std::filesystem::path& dir, std::size_t records_per_task,
                                        std::uint64_t seed, std::size_t max_source_words) {
  struct Entry {
    const char* id;
    const char* benchmark;
    const char* category;
  };
  static const Entry kEntries[] = {
      {"qa_a", "flan", "qa"},           {"qa_b", "niv2", "qa"},
      {"cls_a", "crossfit", "classification"}, {"gen_a", "promptsource", "generation"},
      {"gen_b", "t5", "generation"},    {"sum_a", "exmix", "summarization"},
      {"sum_b", "uskg", "summarization"},
  };
  std::filesystem::create_directories(dir);
  std::mt19937_64 gen(seed);
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& e : kEntries) {
    std::string jsonl;
    for (std::size_t i = 0; i < records_per_task; ++i) {
      nlohmann::json r;
      r["record_id"] = std::string(e.id) + "-" + std::to_string(i);
      r["source"] = random_words(gen, 1 + gen() % max_source_words);
      r["target"] = random_words(gen, 1 + gen() % 3);
      jsonl += r.dump() + "\n";
    }
    write_file(dir / (std::string(e.id) + ".jsonl"), jsonl);
    nlohmann::json t{{"task_id", e.id}, {"benchmark", e.benchmark}, {"category", e.category},
                     {"records_path", std::string(e.id) + ".jsonl"}};
    if (std::string(e.benchmark) == "niv2") {
      t["templates"] = nlohmann::json::array({{{"template_id", "t0"},
                                               {"instruction_style", "task_level"},
                                               {"instruction_text", "Question: {source}"},
                                               {"task_description", "Answer the question."}}});
    }
    tasks.push_back(t);
  }
  write_file(dir / "manifest.json", nlohmann::json{{"tasks", tasks}}.dump(1));
  write_file(dir / "plan.json",
             R"({"held_out_categories": ["summarization"], "supervised_eval_tasks": ["qa_a"]})");
  return dir / "manifest.json";
}

Task make_task(const std::string& id, const std::string& benchmark, const std::string& category,
               std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Task t;
  t.spec.task_id = id;
  t.spec.benchmark = benchmark;
  t.spec.category = category;
  t.spec.data_source = id;
  t.spec.logical_task = id;
  for (std::size_t i = 0; i < n; ++i) {
    t.records.push_back(record(id + "-" + std::to_string(i), random_words(gen, 4 + gen() % 12),
                               random_words(gen, 1 + gen() % 3)));
  }
  t.spec.num_examples = n;
  t.templates = {default_template(InstructionStyle::kInstanceLevel)};
  return t;
}

const TaskSpec& ingest_text(Registry& registry, const std::string& id, const std::string& benchmark,
                            const std::string& category, const std::string& jsonl) {
  TaskDescriptor d;
  d.task_id = id;
  d.benchmark = benchmark;
  d.category = category;
  d.records_path = id + ".jsonl";
  std::istringstream in(jsonl);
  return ingest_task(registry, d, in);
}

namespace {
void capture_sink(std::string_view message, void* user) {
  static_cast<std::vector<std::string>*>(user)->emplace_back(message);
}
}  // namespace

WarningCapture::WarningCapture() { set_warning_sink(capture_sink, &messages_); }
WarningCapture::~WarningCapture() { set_warning_sink(nullptr, nullptr); }

}  // namespace imix::testing
