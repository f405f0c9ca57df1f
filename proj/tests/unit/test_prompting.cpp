#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "instructmix/prompting.hpp"
#include "instructmix/text.hpp"
#include "support.hpp"

using namespace imix;
using testing::error_of;
using testing::record;

namespace {

PromptTemplate instance_tmpl(std::string text = "{source}") {
  PromptTemplate t;
  t.template_id = "inst";
  t.instruction_style = InstructionStyle::kInstanceLevel;
  t.instruction_text = std::move(text);
  return t;
}

PromptTemplate task_tmpl(std::string description, std::string text = "{source}") {
  PromptTemplate t;
  t.template_id = "task";
  t.instruction_style = InstructionStyle::kTaskLevel;
  t.instruction_text = std::move(text);
  t.task_description = std::move(description);
  return t;
}

// Seed whose first uniform_index(8) draw is `index`.
std::uint64_t seed_selecting(std::size_t index) {
  for (std::uint64_t s = 0;; ++s) {
    Rng rng(s);
    if (rng.uniform_index(8) == index) return s;
  }
}

std::set<std::size_t> covered(const std::vector<Span>& spans) {
  std::set<std::size_t> out;
  for (const auto& s : spans) {
    for (std::size_t i = s.begin; i < s.end; ++i) out.insert(i);
  }
  return out;
}

double zipf_oracle(double a, int K, int d) {
  double z = 0;
  for (int k = 1; k <= K + 1; ++k) z += 1.0 / std::pow(k, a);
  return (1.0 / std::pow(d + 1, a)) / z;
}

}  // namespace

TEST_CASE("default delimiter set is exact and ordered") {
  const auto& d = DelimiterSet::standard().delimiters;
  const std::vector<std::string> expected{"\nAnswer:", " Answer:", "\nA:", " A:",
                                          "\nOutput:", " Output:", "\nanswer:", "\noutput:"};
  CHECK(d == expected);
  DelimiterSet::standard().validate();
  CHECK(error_of(ErrorKind::kInvalidArgument, [] { DelimiterSet{{}}.validate(); }) != "no error");
  CHECK(error_of(ErrorKind::kInvalidArgument, [] { DelimiterSet{{"a", "a"}}.validate(); }) != "no error");
}

TEST_CASE("render_zero_shot delimiter rule") {
  SUBCASE("instructions ending with ':' get no delimiter") {
    Rng rng(1);
    const auto r = render_zero_shot(record("1", "Classify the sentiment:", "positive"), instance_tmpl(), rng);
    CHECK(r.source_text == "Classify the sentiment:");
    CHECK(r.target_text == "positive");
    REQUIRE(r.loss_spans.size() == 1);
    CHECK(r.loss_spans[0] == Span{23, 31});
    CHECK(r.shots == 0);
  }
  SUBCASE("index 0 appends \\nAnswer:") {
    Rng rng(seed_selecting(0));
    const auto r = render_zero_shot(record("1", "What is the capital", "Paris"), instance_tmpl(), rng);
    CHECK(r.source_text == "What is the capital\nAnswer:");
  }
  SUBCASE("every index maps to its delimiter") {
    for (std::size_t i = 0; i < 8; ++i) {
      Rng rng(seed_selecting(i));
      const auto r = render_zero_shot(record("1", "q", "a"), instance_tmpl(), rng);
      CHECK(r.source_text == "q" + DelimiterSet::standard().delimiters[i]);
    }
  }
  SUBCASE("empty target gives no loss span") {
    Rng rng(1);
    const auto r = render_zero_shot(record("1", "q:", ""), instance_tmpl(), rng);
    CHECK(r.target_text.empty());
    CHECK(r.loss_spans.empty());
  }
  SUBCASE("raw style renders the target alone") {
    Rng rng(1);
    const auto r = render_zero_shot(record("1", "", "some pretraining text"), raw_template(), rng);
    CHECK(r.source_text.empty());
    CHECK(r.target_text == "some pretraining text");
    CHECK(r.loss_spans == std::vector<Span>{{0, 21}});
  }
  SUBCASE("provenance") {
    Rng rng(1);
    const auto r = render_zero_shot(record("rec7", "q:", "a"), instance_tmpl(), rng);
    CHECK(r.provenance.record_id == "rec7");
    CHECK(r.provenance.template_id == "inst");
  }
}

TEST_CASE("placeholders") {
  RawRecord r = record("id1", "the premise", "yes");
  r.candidates = std::vector<std::string>{"yes", "no"};
  CHECK(instantiate("P: {source} Options:\n{candidates} {{literal}}", r) ==
        "P: the premise Options:\n- yes\n- no {literal}");
  const auto msg = error_of(ErrorKind::kRender, [&] { instantiate("{hypothesis}", r); });
  CHECK(msg.find("{hypothesis}") != std::string::npos);
  CHECK(error_of(ErrorKind::kRender, [&] { instantiate("{source", r); }) != "no error");
  PromptTemplate t = instance_tmpl();
  t.output_field = "record_id";
  CHECK(output_value(t, r) == "id1");
  t.output_field = "missing";
  CHECK(error_of(ErrorKind::kRender, [&] { output_value(t, r); }) != "no error");
}

TEST_CASE("render_few_shot") {
  const auto target = record("t", "Is fire hot", "yes");
  const std::vector<RawRecord> demos{record("d1", "Is ice cold", "yes"), record("d2", "Is snow warm", "no")};

  SUBCASE("zero demos equals zero-shot byte for byte") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      for (const auto& tmpl : {instance_tmpl(), task_tmpl("Answer yes or no.")}) {
        Rng a(seed), b(seed);
        const auto z = render_zero_shot(target, tmpl, a);
        const auto f = render_few_shot(target, {}, tmpl, b);
        CHECK(z == f);
        CHECK(a.next_u64() == b.next_u64());
      }
    }
  }
  SUBCASE("task level: description, demos, target") {
    Rng rng(seed_selecting(2));
    const auto r = render_few_shot(target, demos, task_tmpl("Answer yes or no."), rng);
    CHECK(r.source_text == "Answer yes or no.\nIs ice cold\nA:yes\n\nIs snow warm\nA:no\n\nIs fire hot\nA:");
    CHECK(r.target_text == "yes");
    CHECK(r.shots == 2);
    REQUIRE(r.loss_spans.size() == 1);
    CHECK(r.loss_spans[0].begin == r.source_text.size());
    CHECK(r.loss_spans[0].end == r.full_text().size());
  }
  SUBCASE("instance level: demo then target, no description") {
    Rng rng(seed_selecting(0));
    auto tmpl = instance_tmpl();
    tmpl.task_description = "ignored";
    const auto r = render_few_shot(target, std::span(demos).first(1), tmpl, rng);
    CHECK(r.source_text == "Is ice cold\nAnswer:yes\n\nIs fire hot\nAnswer:");
    CHECK(r.shots == 1);
  }
  SUBCASE("custom separator") {
    Rng rng(seed_selecting(0));
    const auto r = render_few_shot(target, std::span(demos).first(1), instance_tmpl(), rng, "\n\n\n");
    CHECK(r.source_text == "Is ice cold\nAnswer:yes\n\n\nIs fire hot\nAnswer:");
  }
  SUBCASE("demo identical to the record is rejected") {
    Rng rng(1);
    const std::vector<RawRecord> bad{target};
    CHECK(error_of(ErrorKind::kInvalidArgument, [&] { render_few_shot(target, bad, instance_tmpl(), rng); }) !=
          "no error");
  }
}

TEST_CASE("demo count pmf matches the truncated Zipf oracle") {
  const auto p4 = demo_count_pmf(4.0, 5);
  CHECK(p4.size() == 6);
  CHECK(p4[0] == doctest::Approx(0.92497).epsilon(1e-5));
  const auto p2 = demo_count_pmf(2.0, 5);
  CHECK(std::abs(p2[0] - 0.67049) < 0.001);
  CHECK(p2[0] == doctest::Approx(zipf_oracle(2.0, 5, 0)).epsilon(1e-14));
  CHECK(p2[5] == doctest::Approx((1.0 / 36) / 1.491389).epsilon(1e-6));
  CHECK(std::abs(p2[5] - 0.018626) < 2e-6);
  for (double a : {1.5, 2.0, 3.0, 4.0}) {
    for (int K : {1, 3, 5, 9}) {
      const auto p = demo_count_pmf(a, K);
      double sum = 0;
      for (int d = 0; d <= K; ++d) {
        CHECK(p[d] == doctest::Approx(zipf_oracle(a, K, d)).epsilon(1e-12));
        sum += p[d];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(error_of(ErrorKind::kInvalidArgument, [] { demo_count_pmf(1.0, 5); }) != "no error");
  CHECK(error_of(ErrorKind::kInvalidArgument, [] { demo_count_pmf(2.0, 0); }) != "no error");
}

TEST_CASE("sample_num_demos frequencies") {
  MetaICLConfig cfg;
  Rng rng(2024);
  std::vector<int> hist(cfg.cap_k + 1, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto d = sample_num_demos(cfg, rng);
    REQUIRE(d <= cfg.cap_k);
    ++hist[d];
  }
  const auto pmf = demo_count_pmf(cfg.zipf_a, cfg.cap_k);
  for (std::size_t d = 0; d <= cfg.cap_k; ++d) {
    const double sd = std::sqrt(pmf[d] * (1 - pmf[d]) / n);
    CHECK(std::abs(hist[d] / double(n) - pmf[d]) < 5 * sd);
    CHECK(hist[d] > 0);
  }
}

TEST_CASE("MetaICL examples") {
  std::vector<RawRecord> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(record("p" + std::to_string(i), "question " + std::to_string(i), "ans" + std::to_string(i)));
  const auto target = record("t", "final question", "final");
  const auto tmpl = instance_tmpl();

  auto find_seed = [&](std::size_t want, MetaICLConfig cfg) {
    for (std::uint64_t s = 0;; ++s) {
      Rng rng(s);
      if (sample_num_demos(cfg, rng) == want) return s;
    }
  };

  SUBCASE("zero demos gives the final target span in both variants") {
    for (auto variant : {LossVariant::kStandard, LossVariant::kSuffix}) {
      MetaICLConfig cfg;
      cfg.loss_variant = variant;
      Rng rng(find_seed(0, cfg));
      const auto r = build_metaicl_example(target, pool, tmpl, cfg, rng);
      CHECK(r.shots == 0);
      REQUIRE(r.loss_spans.size() == 1);
      CHECK(r.loss_spans[0] == Span{r.source_text.size(), r.full_text().size()});
    }
  }
  SUBCASE("two demos: suffix starts at demo 1's target and runs to the end") {
    MetaICLConfig cfg;
    cfg.loss_variant = LossVariant::kSuffix;
    const auto seed = find_seed(2, cfg);
    Rng rng(seed);
    const auto r = build_metaicl_example(target, pool, tmpl, cfg, rng);
    REQUIRE(r.shots == 2);
    const std::string full = r.full_text();
    REQUIRE(r.loss_spans.size() == 2);
    const auto& first = r.loss_spans[0];
    const std::string demo1_target = full.substr(first.begin, first.size());
    CHECK(demo1_target.rfind("ans", 0) == 0);
    CHECK(full.substr(first.end, 3) == "\n\n\n");
    CHECK(r.loss_spans[1].end == full.size());
    CHECK(full.substr(r.loss_spans[1].begin, 8) == "question");
    CHECK(r.loss_spans[1].begin == first.end + 3);

    MetaICLConfig std_cfg = cfg;
    std_cfg.loss_variant = LossVariant::kStandard;
    Rng rng2(seed);
    const auto s = build_metaicl_example(target, pool, tmpl, std_cfg, rng2);
    CHECK(s.full_text() == full);
    const auto a = covered(s.loss_spans);
    const auto b = covered(r.loss_spans);
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    CHECK(b.size() > a.size());
  }
  SUBCASE("one demo: suffix second span is the final example") {
    MetaICLConfig cfg;
    cfg.loss_variant = LossVariant::kSuffix;
    Rng rng(find_seed(1, cfg));
    const auto r = build_metaicl_example(target, pool, tmpl, cfg, rng);
    REQUIRE(r.shots == 1);
    REQUIRE(r.loss_spans.size() == 2);
    CHECK(r.full_text().substr(r.loss_spans[1].begin) == r.full_text().substr(r.full_text().find("final question")));
  }
  SUBCASE("demos are distinct pool members and the separator is three newlines") {
    MetaICLConfig cfg;
    cfg.zipf_a = 1.01;
    for (std::uint64_t s = 0; s < 200; ++s) {
      Rng rng(s);
      const auto r = build_metaicl_example(target, pool, tmpl, cfg, rng);
      std::set<std::string> seen;
      std::size_t count = 0;
      for (const auto& p : pool) {
        if (r.source_text.find(p.source + "\n") != std::string::npos ||
            r.source_text.find(p.source + " ") != std::string::npos) {
          ++count;
        }
      }
      CHECK(count == r.shots);
      if (r.shots > 0) CHECK(r.source_text.find("\n\n\n") != std::string::npos);
    }
  }
  SUBCASE("standard spans never cover instruction text") {
    MetaICLConfig cfg;
    cfg.zipf_a = 1.2;
    for (std::uint64_t s = 0; s < 100; ++s) {
      Rng rng(s);
      const auto r = build_metaicl_example(target, pool, tmpl, cfg, rng);
      REQUIRE(r.loss_spans.size() == 1);
      CHECK(r.loss_spans[0].begin >= r.source_text.size());
    }
  }
  SUBCASE("pool errors") {
    MetaICLConfig cfg;
    Rng rng(1);
    CHECK(error_of(ErrorKind::kInvalidArgument,
                   [&] { build_metaicl_example(target, std::span(pool).first(4), tmpl, cfg, rng); }) != "no error");
    std::vector<RawRecord> with_target = pool;
    with_target.push_back(target);
    CHECK(error_of(ErrorKind::kInvalidArgument,
                   [&] { build_metaicl_example(target, with_target, tmpl, cfg, rng); }) != "no error");
  }
  SUBCASE("index overload matches the explicit pool") {
    std::vector<RawRecord> all = pool;
    all.insert(all.begin() + 3, target);
    std::vector<RawRecord> rest = all;
    rest.erase(rest.begin() + 3);
    MetaICLConfig cfg;
    cfg.zipf_a = 1.3;
    for (std::uint64_t s = 0; s < 50; ++s) {
      Rng a(s), b(s);
      CHECK(build_metaicl_example(all, 3, tmpl, cfg, a) == build_metaicl_example(target, rest, tmpl, cfg, b));
    }
  }
  SUBCASE("config validation") {
    MetaICLConfig cfg;
    cfg.separator.clear();
    CHECK(error_of(ErrorKind::kInvalidArgument, [&] { cfg.validate(); }) != "no error");
    CHECK(parse_loss_variant("suffix") == LossVariant::kSuffix);
    CHECK(error_of(ErrorKind::kParse, [] { parse_loss_variant("dense"); }) != "no error");
  }
}

TEST_CASE("merge_prompts") {
  std::vector<RawRecord> recs;
  for (int i = 0; i < 10000; ++i) recs.push_back(record(std::to_string(i), "s", "t"));
  std::vector<PromptTemplate> two{instance_tmpl("{source}"), instance_tmpl("Q: {source}")};
  two[1].template_id = "q";

  SUBCASE("single template") {
    const auto m = merge_prompts(std::span(recs).first(20), std::span(two).first(1), 1);
    CHECK(m.size() == 20);
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(m[i].record_index == i);
      CHECK(m[i].template_index == 0);
    }
  }
  SUBCASE("deterministic") {
    CHECK(merge_prompts(std::span(recs).first(4), two, 9) == merge_prompts(std::span(recs).first(4), two, 9));
  }
  SUBCASE("balanced within the binomial bound") {
    const auto m = merge_prompts(recs, two, 5);
    CHECK(m.size() == 10000);
    std::size_t first = 0;
    for (const auto& a : m) first += a.template_index == 0;
    CHECK(std::abs(static_cast<long>(first) - 5000) <= 300);
  }
  SUBCASE("pinned templates") {
    auto pinned = recs[0];
    pinned.template_id = "q";
    std::vector<RawRecord> rs(50, pinned);
    for (const auto& a : merge_prompts(rs, two, 1)) CHECK(a.template_index == 1);
    pinned.template_id = "nope";
    std::vector<RawRecord> bad{pinned};
    CHECK(error_of(ErrorKind::kValidation, [&] { merge_prompts(bad, two, 1); }) != "no error");
  }
  SUBCASE("no templates") {
    CHECK(error_of(ErrorKind::kInvalidArgument, [&] { merge_prompts(recs, {}, 1); }) != "no error");
  }
}
