#include "instructmix/scorer.hpp"

#include <cmath>

#include "instructmix/error.hpp"
#include "instructmix/text.hpp"

namespace imix {

double Scorer::logprob(std::span<const TokenId> context, std::span<const TokenId> continuation) const {
  std::vector<TokenId> ctx(context.begin(), context.end());
  ctx.reserve(context.size() + continuation.size());
  double total = 0.0;
  for (TokenId t : continuation) {
    const auto dist = next_token_distribution(ctx);
    if (t >= dist.size()) fail(ErrorKind::kContract, "token id outside scorer vocabulary");
    total += std::log(dist[t]);
    ctx.push_back(t);
  }
  return total;
}

TokenId Scorer::greedy_step(std::span<const TokenId> context) const {
  const auto dist = next_token_distribution(context);
  TokenId best = 0;
  for (TokenId i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return best;
}

void check_distribution(std::span<const double> dist, std::size_t vocab_size) {
  if (dist.size() != vocab_size) {
    fail(ErrorKind::kContract, "scorer returned " + std::to_string(dist.size()) +
                                   " probabilities for vocabulary of " + std::to_string(vocab_size));
  }
  double sum = 0.0;
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) fail(ErrorKind::kContract, "scorer returned a negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    fail(ErrorKind::kContract, "scorer distribution sums to " + std::to_string(sum));
  }
}

namespace {

class UniformScorer final : public Scorer {
 public:
  UniformScorer(std::size_t v, TokenId eos) : v_(v), eos_(eos) {}
  std::vector<double> next_token_distribution(std::span<const TokenId>) const override {
    return std::vector<double>(v_, 1.0 / static_cast<double>(v_));
  }
  double logprob(std::span<const TokenId>, std::span<const TokenId> continuation) const override {
    for (TokenId t : continuation) {
      if (t >= v_) fail(ErrorKind::kContract, "token id outside scorer vocabulary");
    }
    return -static_cast<double>(continuation.size()) * std::log(static_cast<double>(v_));
  }
  std::size_t vocab_size() const override { return v_; }
  TokenId eos_id() const override { return eos_; }

 private:
  std::size_t v_;
  TokenId eos_;
};

class UnigramScorer final : public Scorer {
 public:
  UnigramScorer(std::vector<double> freq, TokenId eos) : freq_(std::move(freq)), eos_(eos) {}
  std::vector<double> next_token_distribution(std::span<const TokenId>) const override { return freq_; }
  std::size_t vocab_size() const override { return freq_.size(); }
  TokenId eos_id() const override { return eos_; }

 private:
  std::vector<double> freq_;
  TokenId eos_;
};

constexpr double kEchoMiss = 1e-6;

class EchoScorer final : public Scorer {
 public:
  EchoScorer(std::vector<EchoScript> scripts, std::size_t v, TokenId eos)
      : scripts_(std::move(scripts)), v_(v), eos_(eos) {}

  std::vector<double> next_token_distribution(std::span<const TokenId> context) const override {
    std::vector<double> dist(v_, kEchoMiss / static_cast<double>(v_ - 1));
    dist[scripted_next(context)] = 1.0 - kEchoMiss;
    return dist;
  }
  std::size_t vocab_size() const override { return v_; }
  TokenId eos_id() const override { return eos_; }

 private:
  static bool starts_with(std::span<const TokenId> s, const std::vector<TokenId>& prefix) {
    return s.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), s.begin());
  }

  TokenId scripted_next(std::span<const TokenId> context) const {
    const EchoScript* best = nullptr;
    for (const auto& s : scripts_) {
      if (s.prompt.empty() || !starts_with(context, s.prompt)) continue;
      const auto generated = context.subspan(s.prompt.size());
      if (generated.size() > s.answer.size()) continue;
      if (!std::equal(generated.begin(), generated.end(), s.answer.begin())) continue;
      if (!best || s.prompt.size() > best->prompt.size()) best = &s;
    }
    if (best) {
      const std::size_t k = context.size() - best->prompt.size();
      return k < best->answer.size() ? best->answer[k] : eos_;
    }
    for (const auto& s : scripts_) {
      if (!s.prompt.empty()) continue;
      // Longest already-emitted prefix of the answer sitting at the tail.
      for (std::size_t k = std::min(s.answer.size(), context.size()) + 1; k-- > 0;) {
        if (std::equal(s.answer.begin(), s.answer.begin() + static_cast<std::ptrdiff_t>(k),
                       context.end() - static_cast<std::ptrdiff_t>(k))) {
          return k < s.answer.size() ? s.answer[k] : eos_;
        }
      }
    }
    return eos_;
  }

  std::vector<EchoScript> scripts_;
  std::size_t v_;
  TokenId eos_;
};

}  // namespace

std::unique_ptr<Scorer> make_uniform_scorer(std::size_t vocab_size, TokenId eos_id) {
  if (vocab_size == 0 || eos_id >= vocab_size) {
    fail(ErrorKind::kValidation, "uniform scorer needs vocab_size > eos_id");
  }
  return std::make_unique<UniformScorer>(vocab_size, eos_id);
}

std::unique_ptr<Scorer> make_unigram_scorer(std::vector<double> frequencies, TokenId eos_id) {
  if (frequencies.empty() || eos_id >= frequencies.size()) {
    fail(ErrorKind::kValidation, "unigram table must cover eos_id");
  }
  double sum = 0.0;
  for (double p : frequencies) {
    if (!std::isfinite(p) || p < 0.0) fail(ErrorKind::kValidation, "unigram frequency must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    fail(ErrorKind::kValidation, "unigram frequencies sum to " + std::to_string(sum) + ", expected 1");
  }
  return std::make_unique<UnigramScorer>(std::move(frequencies), eos_id);
}

std::unique_ptr<Scorer> make_echo_scorer(std::vector<EchoScript> scripts, std::size_t vocab_size,
                                         TokenId eos_id) {
  if (vocab_size < 2 || eos_id >= vocab_size) fail(ErrorKind::kValidation, "echo scorer needs vocab_size >= 2 and eos_id < vocab_size");
  for (const auto& s : scripts) {
    for (TokenId t : s.answer) {
      if (t >= vocab_size) fail(ErrorKind::kValidation, "echo script token outside vocabulary");
    }
  }
  return std::make_unique<EchoScorer>(std::move(scripts), vocab_size, eos_id);
}

std::unique_ptr<Scorer> make_echo_scorer(const std::vector<std::string>& words, const Tokenizer& tokenizer) {
  EchoScript s;
  s.answer = tokenizer.encode(text::join(words, " ")).ids;
  return make_echo_scorer({std::move(s)}, tokenizer.vocab_size(), tokenizer.eos_id());
}

}  // namespace imix
