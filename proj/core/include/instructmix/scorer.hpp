#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "instructmix/tokenizer.hpp"

namespace imix {

// Opaque next-token model. Implementations supply the next-token
// distribution; log-likelihood and greedy decoding derive from it, which
// keeps logprob additive over continuation splits.
class Scorer {
 public:
  virtual ~Scorer() = default;

  // Probability of every vocabulary entry after `context` (may be empty).
  virtual std::vector<double> next_token_distribution(std::span<const TokenId> context) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos_id() const = 0;
  // False means the harness serializes calls.
  virtual bool concurrent_safe() const { return true; }

  virtual double logprob(std::span<const TokenId> context,
                         std::span<const TokenId> continuation) const;
  // Argmax of the distribution, lowest id on ties.
  virtual TokenId greedy_step(std::span<const TokenId> context) const;
};

// Throws kContract unless dist has vocab_size entries, all finite and
// non-negative, summing to 1 within 1e-6.
void check_distribution(std::span<const double> dist, std::size_t vocab_size);

std::unique_ptr<Scorer> make_uniform_scorer(std::size_t vocab_size, TokenId eos_id);

// Frequencies must sum to 1 within 1e-6 (kValidation otherwise).
std::unique_ptr<Scorer> make_unigram_scorer(std::vector<double> frequencies, TokenId eos_id);

struct EchoScript {
  // Empty prompt: the script continues whatever tail of the context already
  // matches it. Non-empty: applies to contexts made of prompt followed by a
  // prefix of answer.
  std::vector<TokenId> prompt;
  std::vector<TokenId> answer;
};

// Greedy decoding replays the matching script then emits eos. Contexts that
// match no script get eos. The scripted token carries 1 - 1e-6 of the mass.
std::unique_ptr<Scorer> make_echo_scorer(std::vector<EchoScript> scripts, std::size_t vocab_size,
                                         TokenId eos_id);

// Convenience form: one unkeyed script made of words joined by spaces.
std::unique_ptr<Scorer> make_echo_scorer(const std::vector<std::string>& words,
                                         const Tokenizer& tokenizer);

}  // namespace imix
