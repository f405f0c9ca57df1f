#include "instructmix/records.hpp"

#include "instructmix/error.hpp"
#include "instructmix/text.hpp"

namespace imix {

std::string_view to_string(InstructionStyle style) {
  switch (style) {
    case InstructionStyle::kTaskLevel: return "task_level";
    case InstructionStyle::kInstanceLevel: return "instance_level";
    case InstructionStyle::kKeywords: return "keywords";
    case InstructionStyle::kRaw: return "raw";
  }
  return "?";
}

InstructionStyle parse_instruction_style(std::string_view s) {
  if (s == "task_level") return InstructionStyle::kTaskLevel;
  if (s == "instance_level") return InstructionStyle::kInstanceLevel;
  if (s == "keywords") return InstructionStyle::kKeywords;
  if (s == "raw") return InstructionStyle::kRaw;
  fail(ErrorKind::kParse, "unknown instruction_style '" + std::string(s) + "'");
}

PromptTemplate default_template(InstructionStyle style) {
  if (style == InstructionStyle::kRaw) return raw_template();
  PromptTemplate t;
  t.template_id = "default";
  t.instruction_style = style == InstructionStyle::kTaskLevel ? InstructionStyle::kTaskLevel
                                                              : InstructionStyle::kInstanceLevel;
  t.instruction_text = "{source}";
  return t;
}

PromptTemplate raw_template() {
  PromptTemplate t;
  t.template_id = "raw";
  t.instruction_style = InstructionStyle::kRaw;
  return t;
}

RawRecord format_dialogue(std::string record_id, const std::vector<std::string>& turns) {
  RawRecord r;
  r.record_id = std::move(record_id);
  r.target = text::join(turns, "\n");
  return r;
}

}  // namespace imix
