#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "instructmix/eval.hpp"
#include "instructmix/scorer.hpp"
#include "instructmix/text.hpp"
#include "instructmix/tokenizer.hpp"
#include "support.hpp"

using namespace imix;
using testing::error_of;

namespace {

// Candidate i is scored by a fixed table keyed on its first token.
class TableScorer final : public Scorer {
 public:
  explicit TableScorer(std::vector<double> scores) : scores_(std::move(scores)) {}
  std::vector<double> next_token_distribution(std::span<const TokenId>) const override {
    return std::vector<double>(vocab_size(), 1.0 / static_cast<double>(vocab_size()));
  }
  double logprob(std::span<const TokenId>, std::span<const TokenId> cont) const override {
    return scores_.at(cont.front());
  }
  std::size_t vocab_size() const override { return 8; }
  TokenId eos_id() const override { return 7; }

 private:
  std::vector<double> scores_;
};

// Always prefers token 3; eos never wins.
class NeverEos final : public Scorer {
 public:
  std::vector<double> next_token_distribution(std::span<const TokenId>) const override {
    return {0.1, 0.1, 0.1, 0.6, 0.1};
  }
  std::size_t vocab_size() const override { return 5; }
  TokenId eos_id() const override { return 4; }
};

class AlwaysEos final : public Scorer {
 public:
  std::vector<double> next_token_distribution(std::span<const TokenId>) const override { return {0.0, 0.0, 1.0}; }
  std::size_t vocab_size() const override { return 3; }
  TokenId eos_id() const override { return 2; }
};

std::size_t dp_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

double dp_rouge(const std::string& hyp, const std::string& ref) {
  const auto h = text::lower_tokens(hyp), r = text::lower_tokens(ref);
  if (h.empty() && r.empty()) return 1.0;
  if (h.empty() || r.empty()) return 0.0;
  const double l = static_cast<double>(dp_lcs(h, r));
  const double p = l / h.size(), rc = l / r.size();
  return p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
}

LeafScore leaf(std::string sub, std::string task, std::string bench, std::string cat, std::size_t shots, double s) {
  return {std::move(sub), std::move(task), std::move(bench), std::move(cat), shots, s, 1};
}

}  // namespace

TEST_CASE("rank_classify") {
  const std::vector<std::vector<TokenId>> cands{{0}, {1}};
  const std::vector<TokenId> ctx{5};
  CHECK(rank_classify(ctx, cands, TableScorer({-3.2, -1.1})) == 1);
  CHECK(rank_classify(ctx, cands, TableScorer({-2.0, -2.0})) == 0);
  CHECK(rank_classify(ctx, {{0}, {1}, {2}}, TableScorer({-5.0, -1.0, -1.0})) == 1);
  CHECK(error_of(ErrorKind::kInvalidArgument, [&] { rank_classify(ctx, {}, TableScorer({})); }) != "no error");

  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(5);
    for (auto& v : s) v = -static_cast<double>(gen() % 1000) / 100.0;
    std::vector<std::vector<TokenId>> c5{{0}, {1}, {2}, {3}, {4}};
    const auto base = rank_classify(ctx, c5, TableScorer(s));
    auto shifted = s, scaled = s;
    for (auto& v : shifted) v += 7.25;
    for (auto& v : scaled) v = std::exp(v);
    CHECK(rank_classify(ctx, c5, TableScorer(shifted)) == base);
    CHECK(rank_classify(ctx, c5, TableScorer(scaled)) == base);
    CHECK(s[base] == *std::max_element(s.begin(), s.end()));
  }
}

TEST_CASE("greedy_generate") {
  const std::vector<TokenId> ctx{0};
  CHECK(greedy_generate(ctx, AlwaysEos{}).empty());
  const auto g = greedy_generate(ctx, NeverEos{});
  CHECK(g.size() == 256);
  CHECK(std::all_of(g.begin(), g.end(), [](TokenId t) { return t == 3; }));
  CHECK(greedy_generate(ctx, NeverEos{}, 7).size() == 7);
  CHECK(greedy_generate(ctx, NeverEos{}) == g);
}

TEST_CASE("rouge_l_f1") {
  CHECK(rouge_l_f1("the cat on mat", {"the cat sat on the mat"}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(dp_rouge("the cat on mat", "the cat sat on the mat") == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(rouge_l_f1("a b c", {"a b c"}) == 1.0);
  CHECK(rouge_l_f1("A B c", {"a b C"}) == 1.0);
  CHECK(rouge_l_f1("x y", {"a b"}) == 0.0);
  CHECK(rouge_l_f1("", {"a"}) == 0.0);
  CHECK(rouge_l_f1("x y", {"a b", "x y"}) == 1.0);

  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto hyp = testing::random_words(gen, gen() % 51, 2 + gen() % 10);
    const auto ref = testing::random_words(gen, gen() % 51, 2 + gen() % 10);
    const double r = rouge_l_f1(hyp, {ref});
    REQUIRE(r == dp_rouge(hyp, ref));
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("lcs_length matches the DP oracle past one machine word") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> a, b;
    for (std::size_t i = 0, n = gen() % 300; i < n; ++i) a.push_back("w" + std::to_string(gen() % 5));
    for (std::size_t i = 0, n = gen() % 300; i < n; ++i) b.push_back("w" + std::to_string(gen() % 5));
    REQUIRE(lcs_length(a, b) == dp_lcs(a, b));
  }
}

TEST_CASE("exact_match") {
  CHECK(exact_match("Paris ", {"paris"}) == 1);
  CHECK(exact_match("Paris", {"Paris, France"}) == 0);
  CHECK(exact_match("rome", {"Paris", "Rome"}) == 1);
  CHECK(exact_match("new   york", {" New York\n"}) == 1);
}

TEST_CASE("sample_validation") {
  const auto all = sample_validation(100, 250, 1);
  CHECK(all.size() == 100);
  CHECK(all.front() == 0);
  CHECK(all.back() == 99);
  const auto some = sample_validation(1000, 250, 1);
  CHECK(some.size() == 250);
  CHECK(std::is_sorted(some.begin(), some.end()));
  CHECK(std::adjacent_find(some.begin(), some.end()) == some.end());
  CHECK(some.back() < 1000);
  CHECK(sample_validation(1000, 250, 1) == some);
  CHECK(sample_validation(1000, 250, 2) != some);
  CHECK(error_of(ErrorKind::kInvalidArgument, [] { sample_validation(0, 250, 1); }) != "no error");
}

TEST_CASE("EvalTaskConfig validation") {
  EvalTaskConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.metric = Metric::kAccuracy;
  CHECK(error_of(ErrorKind::kValidation, [&] { cfg.validate(); }) != "no error");
  cfg.has_candidates = true;
  CHECK_NOTHROW(cfg.validate());
  cfg.max_gen_tokens = 0;
  CHECK(error_of(ErrorKind::kValidation, [&] { cfg.validate(); }) != "no error");
}

TEST_CASE("aggregate") {
  SUBCASE("category means and combined") {
    const std::vector<LeafScore> leaves{
        leaf("t1", "t1", "flan", "qa", 0, 60), leaf("t2", "t2", "flan", "qa", 0, 40),
        leaf("t1", "t1", "flan", "qa", 5, 70), leaf("t2", "t2", "flan", "qa", 5, 50)};
    const auto r = aggregate(leaves);
    CHECK(r.groups.at("qa").at(0) == 50.0);
    CHECK(r.groups.at("qa").at(5) == 60.0);
    CHECK(r.combined == 55.0);
  }
  SUBCASE("single leaf") {
    const auto r = aggregate({leaf("s", "t", "flan", "qa", 0, 42.5)});
    CHECK(r.task_benchmark.at({"t", "flan"}).at(0) == 42.5);
    CHECK(r.tasks.at("t").at(0) == 42.5);
    CHECK(r.groups.at("qa").at(0) == 42.5);
    CHECK(r.combined == 42.5);
  }
  SUBCASE("same task in two benchmarks") {
    const auto r = aggregate({leaf("a", "t", "flan", "qa", 0, 80), leaf("b", "t", "niv2", "qa", 0, 60)});
    CHECK(r.tasks.at("t").at(0) == 70.0);
    CHECK(r.combined == 70.0);
  }
  SUBCASE("subtasks average first") {
    const auto r = aggregate({leaf("a1", "t", "flan", "qa", 0, 10), leaf("a2", "t", "flan", "qa", 0, 30),
                              leaf("b", "u", "flan", "qa", 0, 80)});
    CHECK(r.tasks.at("t").at(0) == 20.0);
    CHECK(r.groups.at("qa").at(0) == 50.0);
  }
  SUBCASE("group by benchmark") {
    const auto r = aggregate({leaf("a", "t", "flan", "qa", 0, 80), leaf("b", "u", "niv2", "nli", 0, 60)},
                             GroupBy::kBenchmark);
    CHECK(r.groups.at("flan").at(0) == 80.0);
    CHECK(r.groups.at("niv2").at(0) == 60.0);
  }
  SUBCASE("missing metadata") {
    CHECK(error_of(ErrorKind::kValidation, [] { aggregate({leaf("a", "t", "flan", "", 0, 1)}); }) != "no error");
    CHECK(error_of(ErrorKind::kValidation, [] { aggregate({leaf("a", "", "flan", "qa", 0, 1)}); }) != "no error");
  }
  SUBCASE("permutation invariance") {
    std::mt19937_64 gen(11);
    std::vector<LeafScore> leaves;
    for (int i = 0; i < 40; ++i) {
      const int t = static_cast<int>(gen() % 8);
      leaves.push_back(leaf("s" + std::to_string(i), "t" + std::to_string(t), gen() % 2 ? "flan" : "niv2",
                            "c" + std::to_string(t % 3), gen() % 2 ? 0 : 5,
                            static_cast<double>(gen() % 10000) / 97.0));
    }
    const auto base = aggregate(leaves);
    for (int k = 0; k < 10; ++k) {
      std::shuffle(leaves.begin(), leaves.end(), gen);
      const auto r = aggregate(leaves);
      CHECK(r.combined == base.combined);
      CHECK(r.groups == base.groups);
      CHECK(r.tasks == base.tasks);
    }
  }
}

TEST_CASE("reference scorers") {
  auto uniform = make_uniform_scorer(16, 15);
  const std::vector<TokenId> ctx{1, 2}, one{4};
  CHECK(uniform->logprob(ctx, one) == doctest::Approx(-2.772589).epsilon(1e-7));
  CHECK(error_of(ErrorKind::kInvalidArgument, [] { make_uniform_scorer(4, 4); }) != "no error");

  std::vector<double> freq{0.1, 0.2, 0.3, 0.4};
  auto unigram = make_unigram_scorer(freq, 3);
  const std::vector<TokenId> a{0, 1}, b{2, 2, 3};
  std::vector<TokenId> ab = a, ca = ctx;
  ab.insert(ab.end(), b.begin(), b.end());
  ca.insert(ca.end(), a.begin(), a.end());
  CHECK(std::abs(unigram->logprob(ctx, ab) - (unigram->logprob(ctx, a) + unigram->logprob(ca, b))) < 1e-9);
  CHECK(unigram->logprob(ctx, b) == doctest::Approx(2 * std::log(0.3) + std::log(0.4)));
  CHECK(unigram->greedy_step(ctx) == 3);
  CHECK(error_of(ErrorKind::kValidation, [] { make_unigram_scorer({0.5, 0.4}, 1); }) != "no error");
  CHECK(error_of(ErrorKind::kValidation, [] { make_unigram_scorer({1.5, -0.5}, 1); }) != "no error");

  ByteTokenizer tok;
  auto echo = make_echo_scorer({"a", "b"}, tok);
  const auto prompt = tok.encode("Question: x\nAnswer:").ids;
  CHECK(tok.decode(greedy_generate(prompt, *echo)) == "a b");
  CHECK(std::abs(echo->logprob(prompt, tok.encode("a b").ids) -
                 (echo->logprob(prompt, tok.encode("a").ids) +
                  echo->logprob(tok.encode("Question: x\nAnswer:a").ids, tok.encode(" b").ids))) < 1e-9);

  auto keyed = make_echo_scorer({{tok.encode("p1").ids, tok.encode("one").ids},
                                 {tok.encode("p2").ids, tok.encode("two").ids}},
                                tok.vocab_size(), tok.eos_id());
  CHECK(tok.decode(greedy_generate(tok.encode("p2").ids, *keyed)) == "two");
  CHECK(greedy_generate(tok.encode("p2 and more").ids, *keyed).empty());
  CHECK(tok.decode(greedy_generate(tok.encode("p1").ids, *keyed)) == "one");
  CHECK(greedy_generate(tok.encode("zz").ids, *keyed).empty());
}

TEST_CASE("end-to-end echo evaluation scores 1") {
  Registry reg;
  reg.add_benchmark({"flan", InstructionStyle::kInstanceLevel});
  for (int i = 0; i < 3; ++i) {
    Task t = testing::make_task("ev" + std::to_string(i), "flan", i == 2 ? "nli" : "qa", 30, 40 + i);
    t.spec.evaluated = true;
    t.spec.split = Split::kValidation;
    t.spec.metric = i == 1 ? Metric::kExactMatch : Metric::kRougeLF1;
    t.eval_records = t.records;
    t.records.resize(10);
    reg.add_task(t);
  }
  EvalOptions opt;
  opt.seed = 5;
  opt.max_prompts = 12;
  const auto items = plan_eval(reg, opt);
  CHECK(items.size() == 3 * 2 * 12);
  ByteTokenizer tok;
  auto echo = make_echo_scorer(oracle_scripts(items, tok), tok.vocab_size(), tok.eos_id());
  const auto leaves = run_eval(reg, items, *echo, tok, 3);
  CHECK(leaves.size() == 6);
  for (const auto& l : leaves) {
    CHECK(l.score == 1.0);
    CHECK(l.count == 12);
  }
  CHECK(aggregate(leaves).combined == 1.0);
  CHECK(run_eval(reg, items, *echo, tok, 1).size() == leaves.size());

  // 5-shot prompts carry demonstrations ahead of the query.
  for (const auto& it : items) {
    if (it.shots == 5) CHECK(it.example.source_text.size() > it.references.front().size());
  }
  CHECK(plan_eval(reg, opt).size() == items.size());

  auto uniform = make_uniform_scorer(tok.vocab_size(), tok.eos_id());
  for (const auto& l : run_eval(reg, items, *uniform, tok, 2)) CHECK(l.score < 1.0);
}

TEST_CASE("report serialization") {
  const auto r = aggregate({leaf("a", "t", "flan", "qa", 0, 0.25), leaf("b", "t", "niv2", "qa", 5, 0.5),
                            leaf("c", "u", "flan", "nli", 0, 1.0 / 3.0)});
  const auto back = report_from_json(report_to_json(r));
  CHECK(back.combined == r.combined);
  CHECK(back.groups == r.groups);
  CHECK(back.tasks == r.tasks);
  CHECK(back.task_benchmark == r.task_benchmark);
  CHECK(back.group_by == r.group_by);
  REQUIRE(back.leaves.size() == 3);
  CHECK(back.leaves[2].score == r.leaves[2].score);
  CHECK(error_of(ErrorKind::kParse, [] { report_from_json("{not json"); }) != "no error");

  std::ostringstream table;
  write_leaf_table(table, r.leaves);
  const auto lines = table.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') >= 3);
  CHECK(lines.find("a\tt\tflan\tqa\t0\t") != std::string::npos);

  std::ostringstream tree;
  print_report(tree, r);
  CHECK(tree.str().find("combined") != std::string::npos);
  CHECK(tree.str().find("qa") != std::string::npos);
}
