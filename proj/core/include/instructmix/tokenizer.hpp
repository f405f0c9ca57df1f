#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imix {

using TokenId = std::uint32_t;

struct Encoding {
  std::vector<TokenId> ids;
  // offsets[i] is the byte offset where token i starts; offsets.back() is the
  // text length, so token i covers [offsets[i], offsets[i + 1]).
  std::vector<std::size_t> offsets;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual Encoding encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual TokenId eos_id() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::string name() const = 0;
};

// One token per UTF-8 byte (ids 0..255), eos = 256. Lossless on any input.
class ByteTokenizer final : public Tokenizer {
 public:
  Encoding encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  TokenId eos_id() const override { return 256; }
  std::size_t vocab_size() const override { return 257; }
  std::string name() const override { return "byte"; }
};

// "byte" is the only built-in spec today.
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view spec);

}  // namespace imix
