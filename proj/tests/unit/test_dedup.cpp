#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "instructmix/dedup.hpp"
#include "instructmix/text.hpp"
#include "support.hpp"

using namespace imix;
using testing::error_of;

namespace {

std::string numbered(std::size_t n, const std::string& prefix = "tok") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + prefix + std::to_string(i);
  return out;
}

// Brute force: an eval example overlaps iff any of its exact windows appears
// among the train task's exact windows.
double brute_force_fraction(const std::vector<std::vector<std::string>>& eval,
                            const std::vector<std::vector<std::string>>& train) {
  std::set<std::string> pool;
  for (const auto& ex : train) {
    for (const auto& text : ex) {
      for (auto& w : exact_shingles(text)) pool.insert(w);
    }
  }
  std::size_t hits = 0;
  for (const auto& ex : eval) {
    bool hit = false;
    for (const auto& text : ex) {
      for (const auto& w : exact_shingles(text)) hit |= pool.count(w) > 0;
    }
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(eval.size());
}

Task eval_task(const std::string& id, std::size_t n, std::uint64_t seed) {
  Task t = testing::make_task(id, "flan", "held", n, seed);
  t.spec.evaluated = true;
  t.spec.split = Split::kValidation;
  t.spec.generalization_level = GeneralizationLevel::kFullyHeldOut;
  t.eval_records = std::move(t.records);
  t.records.clear();
  return t;
}

}  // namespace

TEST_CASE("shingle window counts") {
  CHECK(shingle(numbered(12)).hashes.empty());
  CHECK(shingle(numbered(12)).token_count == 12);
  CHECK(shingle(numbered(13)).hashes.size() == 1);
  CHECK(shingle(numbered(15)).hashes.size() == 3);
  CHECK(shingle("").hashes.empty());
  // Repeated windows collapse.
  std::string rep;
  for (int i = 0; i < 30; ++i) rep += "a ";
  const auto s = shingle(rep);
  CHECK(s.hashes.size() == 1);
  CHECK(s.token_count == 30);
}

TEST_CASE("shingle bound, case and whitespace invariance") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen() % 40;
    const std::string text = testing::random_words(gen, n, 6);
    const auto s = shingle(text);
    CHECK(s.hashes.size() <= (n >= 12 ? n - 12 : 0));
    CHECK(s.hashes.size() == exact_shingles(text).size());
    CHECK(shingle("  \n" + text + " \t ").hashes == s.hashes);
    std::string upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    CHECK(shingle(upper).hashes == s.hashes);
  }
  CHECK(shingle("a b c d e f g h i j k l m").hashes != shingle("a b c d e f g h i j k l n").hashes);
  CHECK(shingle("a b c d e f g h i j k l m").hashes != shingle("m l k j i h g f e d c b a").hashes);
  // Punctuation stays attached.
  CHECK(shingle(numbered(13) + ".").hashes != shingle(numbered(13)).hashes);
}

TEST_CASE("overlap_fraction") {
  SUBCASE("disjoint vocabularies") {
    const auto e = fingerprint_task("e", {{numbered(20, "x")}, {numbered(30, "y")}});
    const auto t = fingerprint_task("t", {{numbered(20, "p")}});
    CHECK(overlap_fraction(e, t) == 0.0);
  }
  SUBCASE("copy of the train task") {
    std::vector<std::vector<std::string>> seqs;
    std::mt19937_64 gen(1);
    for (int i = 0; i < 20; ++i) seqs.push_back({testing::random_words(gen, 13 + gen() % 10, 1000)});
    CHECK(overlap_fraction(fingerprint_task("e", seqs), fingerprint_task("t", seqs)) == 1.0);
  }
  SUBCASE("100 eval examples, 2 sharing a 13-gram") {
    std::vector<std::vector<std::string>> eval, train;
    for (int i = 0; i < 100; ++i) eval.push_back({numbered(20, "e" + std::to_string(i) + "_")});
    for (int i = 0; i < 10; ++i) train.push_back({numbered(25, "t" + std::to_string(i) + "_")});
    // Plant a shared 13-gram inside two eval examples.
    const std::string shared = numbered(13, "shared");
    eval[17][0] += " " + shared + " tail";
    eval[63][0] = "head " + shared;
    train[4][0] += " " + shared;
    const double f = overlap_fraction(fingerprint_task("e", eval), fingerprint_task("t", train));
    CHECK(f == 0.02);
    CHECK(f == brute_force_fraction(eval, train));
  }
  SUBCASE("any template variant counts") {
    const std::vector<std::vector<std::string>> eval{{"short", numbered(13)}};
    const std::vector<std::vector<std::string>> train{{numbered(14)}};
    CHECK(overlap_fraction(fingerprint_task("e", eval), fingerprint_task("t", train)) == 1.0);
  }
  SUBCASE("directional") {
    std::vector<std::vector<std::string>> a{{numbered(13)}, {numbered(13, "z")}};
    std::vector<std::vector<std::string>> b{{numbered(13)}};
    CHECK(overlap_fraction(fingerprint_task("a", a), fingerprint_task("b", b)) == 0.5);
    CHECK(overlap_fraction(fingerprint_task("b", b), fingerprint_task("a", a)) == 1.0);
  }
  SUBCASE("empty eval task") {
    const auto t = fingerprint_task("t", {{numbered(13)}});
    CHECK(error_of(ErrorKind::kInvalidArgument, [&] { overlap_fraction(fingerprint_task("e", {}), t); }) !=
          "no error");
  }
}

TEST_CASE("fingerprints agree with the brute-force oracle on random corpora") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::string>> eval, train;
    // Small vocabulary so that overlaps actually happen.
    const std::size_t vocab = 3 + gen() % 4;
    for (std::size_t i = 0, n = 1 + gen() % 60; i < n; ++i) eval.push_back({testing::random_words(gen, gen() % 30, vocab)});
    for (std::size_t i = 0, n = gen() % 60; i < n; ++i) train.push_back({testing::random_words(gen, gen() % 30, vocab)});
    const auto fe = fingerprint_task("e", eval);
    const auto ft = fingerprint_task("t", train);
    CHECK(overlap_fraction(fe, ft) == brute_force_fraction(eval, train));
  }
}

TEST_CASE("adding train examples never decreases overlap") {
  std::mt19937_64 gen(5);
  std::vector<std::vector<std::string>> eval, train;
  for (int i = 0; i < 40; ++i) eval.push_back({testing::random_words(gen, 20, 4)});
  double prev = 0.0;
  for (int i = 0; i < 30; ++i) {
    train.push_back({testing::random_words(gen, 20, 4)});
    const double f = overlap_fraction(fingerprint_task("e", eval), fingerprint_task("t", train));
    CHECK(f >= prev);
    prev = f;
  }
}

TEST_CASE("instantiate_sequences renders every template") {
  Task t = testing::make_task("t", "flan", "qa", 3);
  PromptTemplate second = t.templates[0];
  second.template_id = "q";
  second.instruction_text = "Question: {source}";
  t.templates.push_back(second);
  const auto seqs = instantiate_sequences(t, false, 1);
  REQUIRE(seqs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(seqs[i].size() == 2);
    CHECK(seqs[i][0].rfind(t.records[i].source, 0) == 0);
    CHECK(seqs[i][1].rfind("Question: " + t.records[i].source, 0) == 0);
    CHECK(text::ends_with(seqs[i][0], t.records[i].target));
  }
  CHECK(instantiate_sequences(t, false, 1) == seqs);
  CHECK(instantiate_sequences(t, true, 1).empty());
}

TEST_CASE("dedup_report") {
  Registry reg;
  reg.add_benchmark({"flan", InstructionStyle::kInstanceLevel});
  SUBCASE("no eval tasks gives an empty report") {
    reg.add_task(testing::make_task("a", "flan", "qa", 5));
    CHECK(dedup_report(reg).empty());
  }
  SUBCASE("2 eval x 3 train") {
    for (int i = 0; i < 3; ++i) reg.add_task(testing::make_task("train" + std::to_string(i), "flan", "qa", 10, 10 + i));
    reg.add_task(eval_task("eval0", 10, 20));
    reg.add_task(eval_task("eval1", 10, 21));
    const auto report = dedup_report(reg, kDefaultOverlapThreshold, 1, 3);
    CHECK(report.size() == 6);
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : report) pairs.insert({e.eval_task, e.train_task});
    CHECK(pairs.size() == 6);
    for (const auto& e : report) CHECK(e.flagged == (e.fraction > 0.01));
    CHECK(dedup_report(reg, kDefaultOverlapThreshold, 1, 1).size() == 6);
  }
  SUBCASE("threshold semantics and ordering") {
    // 200 eval examples; 1 overlaps train A (0.005), 4 overlap train B (0.02).
    Task ev = eval_task("ev", 200, 30);
    Task a = testing::make_task("trainA", "flan", "qa", 1, 31);
    Task b = testing::make_task("trainB", "flan", "qa", 1, 32);
    const std::string ga = numbered(13, "alpha"), gb = numbered(13, "beta");
    ev.eval_records[0].source += " " + ga;
    for (int i = 1; i <= 4; ++i) ev.eval_records[i].source += " " + gb;
    a.records[0].source = ga;
    b.records[0].source = gb;
    reg.add_task(a);
    reg.add_task(b);
    reg.add_task(ev);
    const auto report = dedup_report(reg);
    REQUIRE(report.size() == 2);
    CHECK(report[0].train_task == "trainB");
    CHECK(report[0].fraction == 0.02);
    CHECK(report[0].flagged);
    CHECK(report[1].fraction == 0.005);
    CHECK_FALSE(report[1].flagged);

    std::ostringstream out;
    write_overlap_report(out, report);
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.rfind("{\"eval_task\":\"ev\",\"train_task\":\"trainB\",\"fraction\":0.02,\"flagged\":true}", 0) == 0);
  }
  SUBCASE("all zero means no flags") {
    reg.add_task(testing::make_task("tr", "flan", "qa", 5, 1));
    Task ev = eval_task("ev", 5, 2);
    for (auto& r : ev.eval_records) r.source = "zzz";
    reg.add_task(ev);
    for (const auto& e : dedup_report(reg)) {
      CHECK(e.fraction == 0.0);
      CHECK_FALSE(e.flagged);
    }
  }
}
