// Checkpoint layout (all integers little-endian):
//
//   "ESCICKPT"            8-byte magic
//   u32                   format version
//   u64 + bytes           header text: "key=value" lines for the model and
//                         tokenizer configuration
//   u32                   tensor count
//   per tensor: u64 name length, name bytes, u64 value count, f64 values
//
// Doubles are stored as their IEEE-754 bit patterns, so loading restores
// every parameter bit for bit.

#include <bit>
#include <cstring>
#include <map>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/io.h"
#include "esci/model.h"

namespace esci {
namespace {

constexpr std::string_view kMagic = "ESCICKPT";

class Writer {
 public:
  void bytes(std::string_view b) { out_.append(b); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string_view source) : data_(data), source_(source) {}

  std::string_view bytes(std::size_t n) {
    if (n > data_.size() - pos_) {
      throw ParseError(fmt::format("{}: truncated checkpoint at byte {}", source_, pos_));
    }
    const auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t uint(int width) {
    const auto b = bytes(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view str() { return bytes(u64()); }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

template <typename T>
std::string join(const std::vector<T>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out.push_back(sep);
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += fmt::format("{}", values[i]);
    }
  }
  return out;
}

std::string header_text(const Checkpoint& c) {
  const ModelConfig& m = c.params.config;
  const TokenizerConfig& t = c.tokenizer;
  std::string out;
  out += fmt::format("vocab_size={}\n", m.vocab_size);
  out += fmt::format("embed_dim={}\n", m.embed_dim);
  out += fmt::format("hidden_dims={}\n", join(m.hidden_dims, ','));
  out += fmt::format("dropout_ratios={}\n", join(m.dropout_ratios, ','));
  out += fmt::format("seed={}\n", m.seed);
  out += fmt::format("tokenizer.vocab_size={}\n", t.vocab_size);
  out += fmt::format("tokenizer.ngram_orders={}\n", join(t.ngram_orders, ','));
  out += fmt::format("tokenizer.max_len={}\n", t.max_len);
  out += fmt::format("tokenizer.reserved={}\n", join(t.reserved, ' '));
  return out;
}

std::uint64_t to_uint(std::string_view s, std::string_view key) {
  const double v = parse_double(s, key);
  if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
    throw ParseError(fmt::format("checkpoint header: {} is not a count", key));
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<std::size_t> to_counts(std::string_view s, std::string_view key) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  for (auto part : split(s, ',')) out.push_back(to_uint(part, key));
  return out;
}

Checkpoint parse_header(std::string_view text, std::string_view source) {
  std::map<std::string, std::string, std::less<>> kv;
  for (auto line : split_lines(text)) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(fmt::format("{}: malformed checkpoint header line '{}'", source, line));
    }
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  const auto get = [&](std::string_view key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      throw ParseError(fmt::format("{}: checkpoint header lacks '{}'", source, key));
    }
    return it->second;
  };
  Checkpoint c;
  ModelConfig& m = c.params.config;
  m.vocab_size = to_uint(get("vocab_size"), "vocab_size");
  m.embed_dim = to_uint(get("embed_dim"), "embed_dim");
  m.hidden_dims = to_counts(get("hidden_dims"), "hidden_dims");
  m.dropout_ratios.clear();
  if (!get("dropout_ratios").empty()) {
    for (auto part : split(get("dropout_ratios"), ',')) {
      m.dropout_ratios.push_back(parse_double(part, "dropout_ratios"));
    }
  }
  m.seed = std::stoull(get("seed"));
  TokenizerConfig& t = c.tokenizer;
  t.vocab_size = to_uint(get("tokenizer.vocab_size"), "tokenizer.vocab_size");
  t.ngram_orders = to_counts(get("tokenizer.ngram_orders"), "tokenizer.ngram_orders");
  t.max_len = to_uint(get("tokenizer.max_len"), "tokenizer.max_len");
  t.reserved.clear();
  for (auto part : split(get("tokenizer.reserved"), ' ')) t.reserved.emplace_back(part);
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.str(header_text(checkpoint));
  const auto tensors = checkpoint.params.tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u64(t.values.size());
    for (double v : t.values) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes, std::string_view source_name) {
  Reader r(bytes, source_name);
  if (r.bytes(kMagic.size()) != kMagic) {
    throw ParseError(fmt::format("{}: not a checkpoint file", source_name));
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError(fmt::format("{}: unsupported checkpoint version {} (expected {})",
                                 source_name, version, kCheckpointVersion));
  }
  Checkpoint c = parse_header(r.str(), source_name);
  c.params.config.validate();
  c.tokenizer.validate();

  c.params = zero_params(c.params.config);

  auto tensors = c.params.tensors();
  const std::uint32_t count = r.u32();
  if (count != tensors.size()) {
    throw ParseError(fmt::format("{}: checkpoint has {} tensors, expected {}", source_name, count,
                                 tensors.size()));
  }
  for (auto& t : tensors) {
    const auto name = r.str();
    const std::uint64_t n = r.u64();
    if (name != t.name || n != t.values.size()) {
      throw ParseError(fmt::format("{}: tensor '{}' ({} values) does not match expected '{}' ({})",
                                   source_name, name, n, t.name, t.values.size()));
    }
    for (double& v : t.values) v = r.f64();
  }
  if (!r.done()) throw ParseError(fmt::format("{}: trailing bytes after checkpoint", source_name));
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), path.string());
}

}  // namespace esci
