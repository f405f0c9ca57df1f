#pragma once

#include <filesystem>
#include <string>

#include "instructmix/corpus.hpp"

namespace imix {

// On-disk layout: <dir>/registry.json plus <dir>/records/task_NNNNN.{train,eval}.jsonl.
void save_registry(const Registry& registry, const std::filesystem::path& dir);
Registry load_registry(const std::filesystem::path& dir);

void write_record_line(std::ostream& out, const RawRecord& record);

// FNV-1a 64 of the file bytes, as 16 lowercase hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace imix
