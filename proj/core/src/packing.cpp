#include "instructmix/packing.hpp"

#include <cmath>
#include <fstream>

#include "instructmix/error.hpp"
#include "instructmix/scorer.hpp"

namespace imix {

TokenizedExample tokenize_rendered(const RenderedExample& example, const Tokenizer& tokenizer) {
  const std::string full = example.full_text();
  std::size_t prev_end = 0;
  for (const auto& s : example.loss_spans) {
    if (s.begin > s.end || s.end > full.size() || s.begin < prev_end) {
      fail(ErrorKind::kInvalidArgument, "invalid loss spans on record '" + example.provenance.record_id + "'");
    }
    prev_end = s.end;
  }
  Encoding enc;
  try {
    enc = tokenizer.encode(full);
  } catch (const Error& e) {
    fail(e.kind(), std::string(e.what()) + " (task '" + example.provenance.task_id + "', record '" +
                       example.provenance.record_id + "')");
  }
  TokenizedExample out;
  out.provenance = example.provenance;
  out.tokens = std::move(enc.ids);
  const std::size_t n = out.tokens.size();

  // Both token ranges and loss spans are sorted; sweep them together.
  std::size_t t = 0;
  for (const auto& s : example.loss_spans) {
    if (s.begin == s.end) continue;
    while (t < n && enc.offsets[t + 1] <= s.begin) ++t;
    std::size_t first = t;
    std::size_t last = t;
    while (last < n && enc.offsets[last] < s.end) ++last;
    if (first >= last) continue;
    if (!out.target_token_spans.empty() && out.target_token_spans.back().end >= first) {
      out.target_token_spans.back().end = std::max(out.target_token_spans.back().end, last);
    } else {
      out.target_token_spans.push_back({first, last});
    }
    t = last > 0 ? last - 1 : 0;
  }
  out.tokens.push_back(tokenizer.eos_id());
  if (!out.target_token_spans.empty()) {
    if (out.target_token_spans.back().end == n) {
      out.target_token_spans.back().end = n + 1;
    } else {
      out.target_token_spans.push_back({n, n + 1});
    }
  }
  return out;
}

std::optional<TokenizedExample> left_truncate(const TokenizedExample& example, std::size_t max_len) {
  if (max_len == 0) fail(ErrorKind::kInvalidArgument, "max_len must be >= 1");
  if (example.tokens.size() <= max_len) return example;
  const std::size_t cut = example.tokens.size() - max_len;
  TokenizedExample out;
  out.provenance = example.provenance;
  out.tokens.assign(example.tokens.begin() + static_cast<std::ptrdiff_t>(cut), example.tokens.end());
  for (const auto& s : example.target_token_spans) {
    if (s.end <= cut) continue;
    out.target_token_spans.push_back({s.begin > cut ? s.begin - cut : 0, s.end - cut});
  }
  if (!example.target_token_spans.empty() && out.target_token_spans.empty()) return std::nullopt;
  return out;
}

Packer::Packer(std::size_t seq_len, TokenId eos_id) : seq_len_(seq_len), eos_id_(eos_id) {
  if (seq_len == 0) fail(ErrorKind::kInvalidArgument, "sequence length must be >= 1");
}

std::optional<PackedSequence> Packer::push(const TokenizedExample& example) {
  const std::size_t n = example.tokens.size();
  if (n > seq_len_) {
    fail(ErrorKind::kInvalidArgument, "example of " + std::to_string(n) +
                                          " tokens exceeds sequence length " + std::to_string(seq_len_));
  }
  std::optional<PackedSequence> closed;
  if (current_.tokens.size() + n > seq_len_) closed = close();
  const std::int32_t doc = next_doc_++;
  const std::size_t base = current_.tokens.size();
  current_.tokens.insert(current_.tokens.end(), example.tokens.begin(), example.tokens.end());
  current_.doc_ids.insert(current_.doc_ids.end(), n, doc);
  current_.loss_mask.insert(current_.loss_mask.end(), n, 0);
  for (const auto& s : example.target_token_spans) {
    if (s.begin > s.end || s.end > n) {
      fail(ErrorKind::kInvalidArgument, "target span out of bounds for record '" +
                                            example.provenance.record_id + "'");
    }
    for (std::size_t i = s.begin; i < s.end; ++i) current_.loss_mask[base + i] = 1;
  }
  return closed;
}

std::optional<PackedSequence> Packer::finish() {
  if (current_.tokens.empty()) return std::nullopt;
  return close();
}

PackedSequence Packer::close() {
  PackedSequence seq = std::move(current_);
  current_ = {};
  next_doc_ = 0;
  seq.pad_count = seq_len_ - seq.tokens.size();
  seq.tokens.resize(seq_len_, eos_id_);
  seq.doc_ids.resize(seq_len_, kPadDocId);
  seq.loss_mask.resize(seq_len_, 0);
  return seq;
}

std::vector<PackedSequence> pack(std::span<const TokenizedExample> examples, std::size_t seq_len,
                                 TokenId eos_id) {
  Packer packer(seq_len, eos_id);
  std::vector<PackedSequence> out;
  for (const auto& ex : examples) {
    if (auto s = packer.push(ex)) out.push_back(std::move(*s));
  }
  if (auto s = packer.finish()) out.push_back(std::move(*s));
  return out;
}

std::vector<UnpackedDocument> unpack(std::span<const PackedSequence> sequences) {
  std::vector<UnpackedDocument> docs;
  for (const auto& seq : sequences) {
    std::int32_t current = kPadDocId;
    for (std::size_t i = 0; i < seq.length(); ++i) {
      const std::int32_t d = seq.doc_ids[i];
      if (d == kPadDocId) continue;
      if (d != current) {
        docs.emplace_back();
        current = d;
      }
      docs.back().tokens.push_back(seq.tokens[i]);
      docs.back().loss_mask.push_back(seq.loss_mask[i]);
    }
  }
  return docs;
}

std::vector<std::int32_t> doc_starts(const PackedSequence& seq) {
  std::vector<std::int32_t> start(seq.length(), -1);
  for (std::size_t i = 0; i < seq.length(); ++i) {
    if (seq.doc_ids[i] == kPadDocId) continue;
    start[i] = (i > 0 && seq.doc_ids[i - 1] == seq.doc_ids[i]) ? start[i - 1]
                                                                 : static_cast<std::int32_t>(i);
  }
  return start;
}

bool attends(std::span<const std::int32_t> doc_start, std::size_t i, std::size_t j) {
  const std::int32_t s = doc_start[i];
  return s >= 0 && static_cast<std::size_t>(s) <= j && j <= i;
}

std::size_t DocMask::count_true() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

DocMask build_doc_mask(const PackedSequence& seq) {
  const std::size_t n = seq.length();
  DocMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto di = seq.doc_ids[i];
    if (di == kPadDocId) continue;
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, seq.doc_ids[j] == di);
  }
  return m;
}

std::vector<std::uint8_t> build_loss_mask(const PackedSequence& seq) {
  std::vector<std::uint8_t> mask(seq.length(), 0);
  for (std::size_t i = 0; i < seq.length(); ++i) {
    mask[i] = seq.doc_ids[i] != kPadDocId && seq.loss_mask[i] ? 1 : 0;
  }
  return mask;
}

double label_loss(const PackedSequence& seq, const Scorer& scorer) {
  const auto start = doc_starts(seq);
  const auto mask = build_loss_mask(seq);
  double loss = 0.0;
  for (std::size_t i = 0; i < seq.length(); ++i) {
    if (!mask[i]) continue;
    std::span<const TokenId> prefix(seq.tokens.data() + start[i], i - static_cast<std::size_t>(start[i]));
    const auto dist = scorer.next_token_distribution(prefix);
    check_distribution(dist, scorer.vocab_size());
    if (seq.tokens[i] >= dist.size()) {
      fail(ErrorKind::kContract, "token id " + std::to_string(seq.tokens[i]) + " outside scorer vocabulary");
    }
    loss -= std::log(dist[seq.tokens[i]]);
  }
  return loss;
}

namespace {

constexpr char kMagic[8] = {'I', 'M', 'X', 'P', 'A', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = std::string_view(data_).substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) fail(ErrorKind::kParse, origin_ + ": truncated packed shard");
  }
  std::uint64_t take(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_packed_shard(const std::filesystem::path& path, PackedShardHeader header,
                        std::span<const PackedSequence> sequences) {
  header.num_sequences = sequences.size();
  std::string buf(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  put_u32(buf, header.seq_len);
  put_u32(buf, header.vocab_size);
  put_u32(buf, header.eos_id);
  put_u64(buf, header.shard_seed);
  put_u64(buf, header.num_sequences);
  for (const auto& seq : sequences) {
    if (seq.length() != header.seq_len) {
      fail(ErrorKind::kInvalidArgument, "sequence length does not match shard header");
    }
    for (TokenId t : seq.tokens) put_u32(buf, t);
    for (std::int32_t d : seq.doc_ids) put_u32(buf, static_cast<std::uint32_t>(d));
    const std::size_t nbytes = (seq.length() + 7) / 8;
    const std::size_t at = buf.size();
    buf.append(nbytes, '\0');
    for (std::size_t i = 0; i < seq.length(); ++i) {
      if (seq.loss_mask[i]) buf[at + i / 8] = static_cast<char>(buf[at + i / 8] | (1u << (i % 8)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

PackedShard read_packed_shard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(8) != std::string_view(kMagic, 8)) fail(ErrorKind::kParse, path.string() + ": bad magic");
  if (r.u32() != kVersion) fail(ErrorKind::kParse, path.string() + ": unsupported version");
  PackedShard shard;
  shard.header.seq_len = r.u32();
  shard.header.vocab_size = r.u32();
  shard.header.eos_id = r.u32();
  shard.header.shard_seed = r.u64();
  shard.header.num_sequences = r.u64();
  const std::size_t L = shard.header.seq_len;
  for (std::uint64_t s = 0; s < shard.header.num_sequences; ++s) {
    PackedSequence seq;
    seq.tokens.resize(L);
    seq.doc_ids.resize(L);
    seq.loss_mask.resize(L);
    for (auto& t : seq.tokens) t = r.u32();
    for (auto& d : seq.doc_ids) d = static_cast<std::int32_t>(r.u32());
    const auto bits = r.bytes((L + 7) / 8);
    for (std::size_t i = 0; i < L; ++i) {
      seq.loss_mask[i] = (static_cast<unsigned char>(bits[i / 8]) >> (i % 8)) & 1u;
      if (seq.doc_ids[i] == kPadDocId) ++seq.pad_count;
    }
    shard.sequences.push_back(std::move(seq));
  }
  if (!r.done()) fail(ErrorKind::kParse, path.string() + ": trailing bytes");
  return shard;
}

}  // namespace imix
