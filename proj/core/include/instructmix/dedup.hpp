#pragma once

#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "instructmix/corpus.hpp"

namespace imix {

inline constexpr std::size_t kShingleSize = 13;
inline constexpr double kDefaultOverlapThreshold = 0.01;

struct ShingleSet {
  std::vector<std::uint64_t> hashes;  // sorted, unique
  std::size_t token_count = 0;
};

// Fingerprints every window of n lowercased whitespace tokens.
ShingleSet shingle(std::string_view text, std::size_t n = kShingleSize);

// Exact windows (tokens joined by a single space), for oracle checks.
std::set<std::string> exact_shingles(std::string_view text, std::size_t n = kShingleSize);

struct TaskFingerprints {
  std::string task_id;
  std::vector<std::vector<std::uint64_t>> examples;  // per example, sorted unique
  std::vector<std::uint64_t> pooled;                 // union, sorted unique
};

// Each example may have several instantiated sequences (one per template).
TaskFingerprints fingerprint_task(std::string task_id,
                                  const std::vector<std::vector<std::string>>& sequences);

// Share of eval examples with at least one fingerprint in the train pool.
double overlap_fraction(const TaskFingerprints& eval, const TaskFingerprints& train);

// source ‖ target of each record under every template of the task, with a
// delimiter stream derived from the seed.
std::vector<std::vector<std::string>> instantiate_sequences(const Task& task, bool eval_records,
                                                            std::uint64_t seed);

struct OverlapEntry {
  std::string eval_task;
  std::string train_task;
  double fraction = 0.0;
  bool flagged = false;
};

// Every (eval, train) pair, sorted by fraction descending then ids.
std::vector<OverlapEntry> dedup_report(const Registry& registry,
                                       double threshold = kDefaultOverlapThreshold,
                                       std::uint64_t seed = 0, std::size_t workers = 1);

void write_overlap_report(std::ostream& out, const std::vector<OverlapEntry>& entries);

}  // namespace imix
