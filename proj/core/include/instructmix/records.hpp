#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace imix {

// How a benchmark phrases its instructions. Keywords-style benchmarks render
// at the instance level; raw streams (pre-training text, dialogue) carry no
// instructions and train on the whole sequence.
enum class InstructionStyle { kTaskLevel, kInstanceLevel, kKeywords, kRaw };

std::string_view to_string(InstructionStyle style);
InstructionStyle parse_instruction_style(std::string_view s);

// One stored example.
struct RawRecord {
  std::string record_id;
  std::string source;
  std::string target;
  std::optional<std::vector<std::string>> candidates;
  std::optional<std::string> template_id;

  friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

// Instruction template with "{field}" placeholders resolved against a
// RawRecord. "{{" and "}}" are literal braces.
struct PromptTemplate {
  std::string template_id;
  InstructionStyle instruction_style = InstructionStyle::kInstanceLevel;
  std::string instruction_text;
  std::string output_field = "target";
  // Task-level templates only: the task definition placed ahead of any
  // demonstrations.
  std::string task_description;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

// Template used when a task ships none: the record source verbatim.
PromptTemplate default_template(InstructionStyle style);

// Template for raw streams: empty instructions, no delimiter.
PromptTemplate raw_template();

// Dialogue turns joined by a single newline; the whole dialogue is the target.
RawRecord format_dialogue(std::string record_id, const std::vector<std::string>& turns);

}  // namespace imix
