#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instructmix/prompting.hpp"
#include "instructmix/tokenizer.hpp"

namespace imix {

class Scorer;

inline constexpr std::size_t kDefaultSequenceLength = 2048;
inline constexpr std::int32_t kPadDocId = -1;

// Half-open token range.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct TokenizedExample {
  std::vector<TokenId> tokens;  // ends with eos
  std::vector<TokenSpan> target_token_spans;
  Provenance provenance;
};

// tokens = encode(source ‖ target) + eos. A token is in a target span iff its
// byte range intersects a loss span; the trailing eos joins the final span.
TokenizedExample tokenize_rendered(const RenderedExample& example, const Tokenizer& tokenizer);

// Keeps the last max_len tokens and shifts spans. Returns nullopt when the
// example had target tokens and none survive (the caller counts the drop).
std::optional<TokenizedExample> left_truncate(const TokenizedExample& example,
                                              std::size_t max_len = kDefaultSequenceLength);

struct PackedSequence {
  std::vector<TokenId> tokens;
  std::vector<std::int32_t> doc_ids;   // kPadDocId on padding
  std::vector<std::uint8_t> loss_mask;
  std::size_t pad_count = 0;

  std::size_t length() const { return tokens.size(); }
};

// Greedy packer: examples are appended in order and never split. An example
// that does not fit closes the current sequence, which is padded with eos.
class Packer {
 public:
  Packer(std::size_t seq_len, TokenId eos_id);

  // Returns the sequence closed by this push, if any. Throws kInvalidArgument
  // when the example is longer than the sequence length.
  std::optional<PackedSequence> push(const TokenizedExample& example);
  std::optional<PackedSequence> finish();

  std::size_t seq_len() const { return seq_len_; }

 private:
  PackedSequence close();

  std::size_t seq_len_;
  TokenId eos_id_;
  PackedSequence current_;
  std::int32_t next_doc_ = 0;
};

std::vector<PackedSequence> pack(std::span<const TokenizedExample> examples,
                                 std::size_t seq_len, TokenId eos_id);

struct UnpackedDocument {
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> loss_mask;
};

std::vector<UnpackedDocument> unpack(std::span<const PackedSequence> sequences);

// Interval form of the document mask: start index of each position's
// document, or -1 on padding. Position i attends to j iff
// doc_start[i] >= 0 && doc_start[i] <= j <= i.
std::vector<std::int32_t> doc_starts(const PackedSequence& seq);

bool attends(std::span<const std::int32_t> doc_start, std::size_t i, std::size_t j);

// Dense L x L reference form, row-major.
class DocMask {
 public:
  explicit DocMask(std::size_t n) : n_(n), bits_(n * n, 0) {}
  std::size_t size() const { return n_; }
  bool at(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }
  std::size_t count_true() const;

 private:
  std::size_t n_;
  std::vector<std::uint8_t> bits_;
};

DocMask build_doc_mask(const PackedSequence& seq);

std::vector<std::uint8_t> build_loss_mask(const PackedSequence& seq);

// -Σ log p(token | same-document prefix) over loss-masked positions.
double label_loss(const PackedSequence& seq, const Scorer& scorer);

struct PackedShardHeader {
  std::uint32_t seq_len = kDefaultSequenceLength;
  std::uint32_t vocab_size = 0;
  std::uint32_t eos_id = 0;
  std::uint64_t shard_seed = 0;
  std::uint64_t num_sequences = 0;
};

// Binary little-endian shard: "IMXPACK1", u32 version, u32 seq_len,
// u32 vocab_size, u32 eos_id, u64 shard_seed, u64 num_sequences, then per
// sequence tokens[L] u32, doc_ids[L] i32, loss_mask bit-packed LSB-first.
void write_packed_shard(const std::filesystem::path& path, PackedShardHeader header,
                        std::span<const PackedSequence> sequences);

struct PackedShard {
  PackedShardHeader header;
  std::vector<PackedSequence> sequences;
};

PackedShard read_packed_shard(const std::filesystem::path& path);

}  // namespace imix
