#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "instructmix/records.hpp"
#include "instructmix/rng.hpp"

namespace imix {

struct DelimiterSet {
  std::vector<std::string> delimiters;

  // "\nAnswer:", " Answer:", "\nA:", " A:", "\nOutput:", " Output:",
  // "\nanswer:", "\noutput:"
  static const DelimiterSet& standard();
  void validate() const;
};

// Half-open byte range into source_text + target_text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Provenance {
  std::string task_id;
  std::string record_id;
  std::string template_id;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct RenderedExample {
  std::string source_text;
  std::string target_text;
  std::vector<Span> loss_spans;
  std::size_t shots = 0;
  Provenance provenance;

  std::string full_text() const { return source_text + target_text; }
  friend bool operator==(const RenderedExample&, const RenderedExample&) = default;
};

enum class LossVariant { kStandard, kSuffix };
std::string_view to_string(LossVariant v);
LossVariant parse_loss_variant(std::string_view s);

inline constexpr std::string_view kTrainDemoSeparator = "\n\n\n";
inline constexpr std::string_view kInferenceDemoSeparator = "\n\n";

struct MetaICLConfig {
  double zipf_a = 2.0;
  std::size_t cap_k = 5;
  std::string separator{kTrainDemoSeparator};
  LossVariant loss_variant = LossVariant::kStandard;
  std::string inference_separator{kInferenceDemoSeparator};

  void validate() const;
};

// Substitutes "{field}" placeholders. Throws kRender naming the first
// unresolved placeholder.
std::string instantiate(std::string_view pattern, const RawRecord& record);

// Value of the template's output field for this record.
std::string output_value(const PromptTemplate& tmpl, const RawRecord& record);

RenderedExample render_zero_shot(const RawRecord& record, const PromptTemplate& tmpl, Rng& rng,
                                 const DelimiterSet& delimiters = DelimiterSet::standard());

// Demonstrations go between the task description and the target example
// for task-level templates, and ahead of the target example otherwise.
RenderedExample render_few_shot(const RawRecord& record, std::span<const RawRecord> demos,
                                const PromptTemplate& tmpl, Rng& rng,
                                std::string_view separator = kInferenceDemoSeparator,
                                const DelimiterSet& delimiters = DelimiterSet::standard());

// Truncated Zipf over k in {1..K+1}; entry d is P(k = d + 1), i.e. the
// probability of d demonstrations.
std::vector<double> demo_count_pmf(double zipf_a, std::size_t cap_k);

std::size_t sample_num_demos(const MetaICLConfig& cfg, Rng& rng);

RenderedExample build_metaicl_example(const RawRecord& record, std::span<const RawRecord> pool,
                                      const PromptTemplate& tmpl, const MetaICLConfig& cfg,
                                      Rng& rng,
                                      const DelimiterSet& delimiters = DelimiterSet::standard());

// Same, with the pool being every record except records[record_index].
RenderedExample build_metaicl_example(std::span<const RawRecord> records, std::size_t record_index,
                                      const PromptTemplate& tmpl, const MetaICLConfig& cfg,
                                      Rng& rng,
                                      const DelimiterSet& delimiters = DelimiterSet::standard());

struct PromptAssignment {
  std::size_t record_index = 0;
  std::size_t template_index = 0;
  friend bool operator==(const PromptAssignment&, const PromptAssignment&) = default;
};

// One prompt per record. A record with a template_id is pinned to that
// template; the rest get a seeded uniform template choice.
std::vector<PromptAssignment> merge_prompts(std::span<const RawRecord> records,
                                            std::span<const PromptTemplate> templates,
                                            std::uint64_t seed);

}  // namespace imix
