#pragma once

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "instructmix/corpus.hpp"
#include "instructmix/error.hpp"
#include "instructmix/records.hpp"

namespace imix::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

RawRecord record(std::string id, std::string source, std::string target);

// Task with n records "<id>-<i>" whose sources are random word strings.
Task make_task(const std::string& id, const std::string& benchmark, const std::string& category,
               std::size_t n, std::uint64_t seed = 1);

// Ingests a task from in-memory JSONL into the registry.
const TaskSpec& ingest_text(Registry& registry, const std::string& id, const std::string& benchmark,
                            const std::string& category, const std::string& jsonl);

std::string random_words(std::mt19937_64& gen, std::size_t count, std::size_t vocab = 50);

// Seven tasks, one per built-in instruction benchmark, written as JSONL plus
// manifest.json and plan.json (summarization held out, qa_a supervised eval).
// Returns the manifest path.
std::filesystem::path write_demo_corpus(const std::filesystem::path& dir, std::size_t records_per_task,
                                        std::uint64_t seed, std::size_t max_source_words = 20);

// Collects warnings while alive.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
};

// Expects fn to throw imix::Error of the given kind; returns the message.
template <typename Fn>
std::string error_of(ErrorKind kind, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() != kind) return "wrong kind: " + std::string(to_string(e.kind())) + ": " + e.what();
    return e.what();
  }
  return "no error";
}

}  // namespace imix::testing
