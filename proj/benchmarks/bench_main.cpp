#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "instructmix/corpus.hpp"
#include "instructmix/dedup.hpp"
#include "instructmix/eval.hpp"
#include "instructmix/mixture.hpp"
#include "instructmix/packing.hpp"
#include "instructmix/prompting.hpp"

using namespace imix;

namespace {

std::string words(std::mt19937_64& gen, std::size_t n, std::size_t vocab) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " w" : "w") + std::to_string(gen() % vocab);
  return out;
}

std::vector<TokenizedExample> examples(std::size_t count, std::size_t max_len) {
  std::mt19937_64 gen(1);
  std::vector<TokenizedExample> xs(count);
  for (auto& e : xs) {
    const std::size_t n = 1 + gen() % max_len;
    e.tokens.assign(n, 1);
    e.tokens.back() = 256;
    e.target_token_spans.push_back({n / 2, n});
  }
  return xs;
}

void BM_Pack(benchmark::State& state) {
  const auto xs = examples(static_cast<std::size_t>(state.range(0)), 1024);
  for (auto _ : state) benchmark::DoNotOptimize(pack(xs, 2048, 256));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Pack)->Arg(1000)->Arg(10000);

void BM_DocMask(benchmark::State& state) {
  const auto seqs = pack(examples(64, 512), 2048, 256);
  for (auto _ : state) benchmark::DoNotOptimize(build_doc_mask(seqs[0]));
}
BENCHMARK(BM_DocMask);

void BM_Fingerprint(benchmark::State& state) {
  std::mt19937_64 gen(2);
  std::vector<std::vector<std::string>> seqs;
  for (int i = 0; i < state.range(0); ++i) seqs.push_back({words(gen, 60, 1000)});
  for (auto _ : state) benchmark::DoNotOptimize(fingerprint_task("t", seqs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Fingerprint)->Arg(1000);

void BM_Overlap(benchmark::State& state) {
  std::mt19937_64 gen(3);
  std::vector<std::vector<std::string>> a, b;
  for (int i = 0; i < 1000; ++i) a.push_back({words(gen, 60, 50)});
  for (int i = 0; i < 10000; ++i) b.push_back({words(gen, 60, 50)});
  const auto fa = fingerprint_task("a", a), fb = fingerprint_task("b", b);
  for (auto _ : state) benchmark::DoNotOptimize(overlap_fraction(fa, fb));
}
BENCHMARK(BM_Overlap);

void BM_RougeL(benchmark::State& state) {
  std::mt19937_64 gen(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::string h = words(gen, n, 20), r = words(gen, n, 20);
  for (auto _ : state) benchmark::DoNotOptimize(rouge_l_f1(h, {r}));
}
BENCHMARK(BM_RougeL)->Arg(50)->Arg(256)->Arg(2048);

void BM_Stream(benchmark::State& state) {
  Registry reg;
  for (const auto& b : builtin_benchmarks()) reg.add_benchmark(b);
  std::mt19937_64 gen(5);
  for (auto bench : kShorthandOrder) {
    for (int t = 0; t < 20; ++t) {
      Task task;
      task.spec.task_id = std::string(bench) + std::to_string(t);
      task.spec.benchmark = std::string(bench);
      task.spec.category = "c";
      for (std::size_t i = 0, n = 1 + gen() % 500; i < n; ++i) {
        task.records.push_back({"r" + std::to_string(i), "s", "t", std::nullopt, std::nullopt});
      }
      task.spec.num_examples = task.records.size();
      task.templates = {default_template(InstructionStyle::kInstanceLevel)};
      reg.add_task(std::move(task));
    }
  }
  MixtureConfig cfg;
  cfg.benchmark_proportions = parse_proportions("4/2/20/25/45/2/2");
  const auto w = mixture_weights(reg, cfg);
  auto stream = sample_stream(w, reg, 7);
  for (auto _ : state) benchmark::DoNotOptimize(stream.next());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Stream);

}  // namespace

BENCHMARK_MAIN();
