#include "instructmix/prompting.hpp"

#include <cmath>
#include <set>

#include "instructmix/error.hpp"
#include "instructmix/text.hpp"

namespace imix {

const DelimiterSet& DelimiterSet::standard() {
  static const DelimiterSet kStandard{{"\nAnswer:", " Answer:", "\nA:", " A:", "\nOutput:",
                                       " Output:", "\nanswer:", "\noutput:"}};
  return kStandard;
}

void DelimiterSet::validate() const {
  if (delimiters.empty()) fail(ErrorKind::kInvalidArgument, "delimiter set is empty");
  std::set<std::string> seen(delimiters.begin(), delimiters.end());
  if (seen.size() != delimiters.size()) {
    fail(ErrorKind::kInvalidArgument, "delimiter set has duplicate entries");
  }
}

std::string_view to_string(LossVariant v) {
  return v == LossVariant::kSuffix ? "suffix" : "standard";
}

LossVariant parse_loss_variant(std::string_view s) {
  if (s == "standard") return LossVariant::kStandard;
  if (s == "suffix") return LossVariant::kSuffix;
  fail(ErrorKind::kParse, "unknown loss variant '" + std::string(s) + "'");
}

void MetaICLConfig::validate() const {
  if (!(zipf_a > 1.0) || !std::isfinite(zipf_a)) {
    fail(ErrorKind::kInvalidArgument, "zipf shape must be a finite real > 1");
  }
  if (cap_k < 1) fail(ErrorKind::kInvalidArgument, "demonstration cap must be >= 1");
  if (separator.empty()) fail(ErrorKind::kInvalidArgument, "demonstration separator is empty");
}

namespace {

std::string candidates_block(const std::vector<std::string>& candidates) {
  std::string out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i) out += '\n';
    out += "- ";
    out += candidates[i];
  }
  return out;
}

std::optional<std::string> field_value(std::string_view name, const RawRecord& r) {
  if (name == "source") return r.source;
  if (name == "target") return r.target;
  if (name == "record_id") return r.record_id;
  if (name == "candidates" && r.candidates) return candidates_block(*r.candidates);
  if (name == "template_id" && r.template_id) return *r.template_id;
  return std::nullopt;
}

struct DemoOffsets {
  std::size_t begin = 0;
  std::size_t target_begin = 0;
  std::size_t end = 0;
};

struct Composed {
  RenderedExample example;
  std::vector<DemoOffsets> demos;
  std::size_t final_begin = 0;
};

Composed compose(const RawRecord& record, std::span<const RawRecord* const> demos,
                 const PromptTemplate& tmpl, Rng& rng, std::string_view separator,
                 const DelimiterSet& delimiters) {
  const bool raw = tmpl.instruction_style == InstructionStyle::kRaw;
  std::vector<std::string> instances;
  instances.reserve(demos.size() + 1);
  for (const RawRecord* d : demos) instances.push_back(instantiate(tmpl.instruction_text, *d));
  instances.push_back(instantiate(tmpl.instruction_text, record));

  bool need_delimiter = false;
  if (!raw) {
    for (const auto& inst : instances) need_delimiter |= !text::ends_with(inst, ":");
  }
  std::string delimiter;
  if (need_delimiter) {
    delimiters.validate();
    delimiter = delimiters.delimiters[rng.uniform_index(delimiters.delimiters.size())];
  }
  auto with_delimiter = [&](const std::string& inst) {
    return raw || text::ends_with(inst, ":") ? inst : inst + delimiter;
  };

  Composed c;
  std::string text;
  if (tmpl.instruction_style == InstructionStyle::kTaskLevel && !tmpl.task_description.empty()) {
    text += tmpl.task_description;
    text += '\n';
  }
  for (std::size_t i = 0; i < demos.size(); ++i) {
    DemoOffsets off;
    off.begin = text.size();
    text += with_delimiter(instances[i]);
    off.target_begin = text.size();
    text += output_value(tmpl, *demos[i]);
    off.end = text.size();
    text += separator;
    c.demos.push_back(off);
  }
  c.final_begin = text.size();
  text += with_delimiter(instances.back());

  c.example.source_text = std::move(text);
  c.example.target_text = output_value(tmpl, record);
  if (!c.example.target_text.empty()) {
    const std::size_t b = c.example.source_text.size();
    c.example.loss_spans.push_back({b, b + c.example.target_text.size()});
  }
  c.example.shots = demos.size();
  c.example.provenance = {"", record.record_id, tmpl.template_id};
  return c;
}

bool same_example(const RawRecord& a, const RawRecord& b) {
  return a.record_id == b.record_id || (a.source == b.source && a.target == b.target);
}

}  // namespace

std::string instantiate(std::string_view pattern, const RawRecord& record) {
  std::string out;
  out.reserve(pattern.size() + record.source.size());
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const char c = pattern[i];
    if (c == '{' && i + 1 < pattern.size() && pattern[i + 1] == '{') {
      out += '{';
      ++i;
    } else if (c == '}' && i + 1 < pattern.size() && pattern[i + 1] == '}') {
      out += '}';
      ++i;
    } else if (c == '{') {
      const auto close = pattern.find('}', i + 1);
      if (close == std::string_view::npos) {
        fail(ErrorKind::kRender, "unterminated placeholder in \"" + text::escape_visible(pattern) + "\"");
      }
      const auto name = pattern.substr(i + 1, close - i - 1);
      auto value = field_value(name, record);
      if (!value) {
        fail(ErrorKind::kRender, "unresolved placeholder {" + std::string(name) + "} for record '" +
                                     record.record_id + "'");
      }
      out += *value;
      i = close;
    } else {
      out += c;
    }
  }
  return out;
}

std::string output_value(const PromptTemplate& tmpl, const RawRecord& record) {
  auto v = field_value(tmpl.output_field, record);
  if (!v) {
    fail(ErrorKind::kRender, "unresolved output field {" + tmpl.output_field + "} in template '" +
                                 tmpl.template_id + "'");
  }
  return *v;
}

RenderedExample render_zero_shot(const RawRecord& record, const PromptTemplate& tmpl, Rng& rng,
                                 const DelimiterSet& delimiters) {
  return compose(record, {}, tmpl, rng, "", delimiters).example;
}

RenderedExample render_few_shot(const RawRecord& record, std::span<const RawRecord> demos,
                                const PromptTemplate& tmpl, Rng& rng, std::string_view separator,
                                const DelimiterSet& delimiters) {
  std::vector<const RawRecord*> ptrs;
  for (const auto& d : demos) {
    if (same_example(d, record)) {
      fail(ErrorKind::kInvalidArgument, "demonstration '" + d.record_id + "' is the target example");
    }
    ptrs.push_back(&d);
  }
  return compose(record, ptrs, tmpl, rng, separator, delimiters).example;
}

std::vector<double> demo_count_pmf(double zipf_a, std::size_t cap_k) {
  MetaICLConfig cfg;
  cfg.zipf_a = zipf_a;
  cfg.cap_k = cap_k;
  cfg.validate();
  std::vector<double> pmf(cap_k + 1);
  double z = 0.0;
  for (std::size_t k = 1; k <= cap_k + 1; ++k) {
    pmf[k - 1] = std::pow(static_cast<double>(k), -zipf_a);
    z += pmf[k - 1];
  }
  for (double& p : pmf) p /= z;
  return pmf;
}

std::size_t sample_num_demos(const MetaICLConfig& cfg, Rng& rng) {
  const auto pmf = demo_count_pmf(cfg.zipf_a, cfg.cap_k);
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t d = 0; d + 1 < pmf.size(); ++d) {
    acc += pmf[d];
    if (u < acc) return d;
  }
  return pmf.size() - 1;
}

namespace {

template <typename PoolAt>
RenderedExample metaicl_example(const RawRecord& record, std::size_t pool_size, PoolAt pool_at,
                                const PromptTemplate& tmpl, const MetaICLConfig& cfg, Rng& rng,
                                const DelimiterSet& delimiters) {
  if (pool_size < cfg.cap_k) {
    fail(ErrorKind::kInvalidArgument, "demonstration pool has " + std::to_string(pool_size) +
                                          " records, need at least " + std::to_string(cfg.cap_k));
  }
  const std::size_t d = sample_num_demos(cfg, rng);
  std::vector<const RawRecord*> demos;
  for (std::size_t i : rng.sample_without_replacement(pool_size, d)) demos.push_back(&pool_at(i));

  Composed c = compose(record, demos, tmpl, rng, cfg.separator, delimiters);
  if (cfg.loss_variant == LossVariant::kSuffix && d > 0) {
    const std::size_t end = c.example.source_text.size() + c.example.target_text.size();
    std::vector<Span> spans;
    const auto& first = c.demos.front();
    if (first.end > first.target_begin) spans.push_back({first.target_begin, first.end});
    const std::size_t rest = d > 1 ? c.demos[1].begin : c.final_begin;
    if (end > rest) spans.push_back({rest, end});
    c.example.loss_spans = std::move(spans);
  }
  return c.example;
}

}  // namespace

RenderedExample build_metaicl_example(const RawRecord& record, std::span<const RawRecord> pool,
                                      const PromptTemplate& tmpl, const MetaICLConfig& cfg,
                                      Rng& rng, const DelimiterSet& delimiters) {
  cfg.validate();
  for (const auto& p : pool) {
    if (same_example(p, record)) {
      fail(ErrorKind::kInvalidArgument, "demonstration pool contains the target example '" +
                                            record.record_id + "'");
    }
  }
  return metaicl_example(
      record, pool.size(), [&](std::size_t i) -> const RawRecord& { return pool[i]; }, tmpl, cfg, rng,
      delimiters);
}

RenderedExample build_metaicl_example(std::span<const RawRecord> records, std::size_t record_index,
                                      const PromptTemplate& tmpl, const MetaICLConfig& cfg,
                                      Rng& rng, const DelimiterSet& delimiters) {
  cfg.validate();
  if (record_index >= records.size()) fail(ErrorKind::kInvalidArgument, "record index out of range");
  return metaicl_example(
      records[record_index], records.size() - 1,
      [&](std::size_t i) -> const RawRecord& { return records[i < record_index ? i : i + 1]; }, tmpl,
      cfg, rng, delimiters);
}

std::vector<PromptAssignment> merge_prompts(std::span<const RawRecord> records,
                                            std::span<const PromptTemplate> templates,
                                            std::uint64_t seed) {
  if (templates.empty()) fail(ErrorKind::kInvalidArgument, "task has no templates");
  Rng rng(seed);
  std::vector<PromptAssignment> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::size_t t = rng.uniform_index(templates.size());
    if (const auto& pinned = records[i].template_id) {
      std::size_t j = 0;
      while (j < templates.size() && templates[j].template_id != *pinned) ++j;
      if (j == templates.size()) {
        fail(ErrorKind::kValidation, "record '" + records[i].record_id + "' names unknown template '" +
                                         *pinned + "'");
      }
      t = j;
    }
    out.push_back({i, t});
  }
  return out;
}

}  // namespace imix
