#include "instructmix/tokenizer.hpp"

#include "instructmix/error.hpp"

namespace imix {

Encoding ByteTokenizer::encode(std::string_view text) const {
  Encoding e;
  e.ids.reserve(text.size());
  e.offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    e.ids.push_back(static_cast<unsigned char>(text[i]));
    e.offsets.push_back(i);
  }
  e.offsets.push_back(text.size());
  return e;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id == eos_id()) continue;
    if (id > 255) fail(ErrorKind::kInvalidArgument, "token id " + std::to_string(id) + " outside byte vocabulary");
    out.push_back(static_cast<char>(id));
  }
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view spec) {
  if (spec == "byte") return std::make_unique<ByteTokenizer>();
  fail(ErrorKind::kConfiguration, "unknown tokenizer '" + std::string(spec) + "'");
}

}  // namespace imix
