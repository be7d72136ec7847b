// Checkpoint byte layout. Integers are little-endian; a string is a u32 byte
// count followed by UTF-8 bytes; f64 values are IEEE-754 binary64,
// little-endian.
//
//   magic        4 bytes  "SLUJ"
//   version      u32      1
//   vocabularies 4 x { u8 reserved, u32 count, count x string }
//                in the order words, chars, slots, intents
//   settings     u32 count, count x { string key, string value }
//                (ModelConfig fields; doubles printed with 17 digits)
//   tensors      u32 count, count x { string name, u32 rank,
//                rank x u64 extent, product(extents) x f64 }
//
// The prior mask is stored as the tensor "prior_mask".

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "sluj/errors.h"
#include "sluj/model.h"

namespace sluj {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'U', 'J'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxString = 1u << 20;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      throw IoError("checkpoint is truncated");
    }
  }
  uint8_t u8() {
    char c;
    bytes(&c, 1);
    return static_cast<uint8_t>(c);
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    uint32_t n = u32();
    if (n > kMaxString) throw FormatError("checkpoint string length out of range");
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
};

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, std::string> settings_of(const ModelConfig& c) {
  return {
      {"word_dim", std::to_string(c.word_dim)},
      {"char_embedding_dim", std::to_string(c.char_embedding_dim)},
      {"char_hidden_dim", std::to_string(c.char_hidden_dim)},
      {"attention_dim", std::to_string(c.attention_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"intent_hidden_dim", std::to_string(c.intent_hidden_dim)},
      {"heads", std::to_string(c.heads)},
      {"window", std::to_string(c.window)},
      {"mask_eps", exact(c.mask_eps)},
      {"attention_init_scale", exact(c.attention_init_scale)},
  };
}

void write_vocab(Writer& w, const Vocabulary& v) {
  w.u8(v.has_reserved() ? 1 : 0);
  w.u32(static_cast<uint32_t>(v.size()));
  for (const auto& e : v.entries()) w.str(e);
}

Vocabulary read_vocab(Reader& r) {
  const bool reserved = r.u8() != 0;
  const uint32_t n = r.u32();
  std::vector<std::string> entries;
  for (uint32_t i = 0; i < n; ++i) entries.push_back(r.str());
  try {
    return Vocabulary::from_entries(std::move(entries), reserved);
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint vocabulary: ") + e.what());
  }
}

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(2);
  w.u64(t.rows());
  w.u64(t.cols());
  for (double v : t.values()) w.f64(v);
}

}  // namespace

void JointModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, 4);
  w.u32(kVersion);
  write_vocab(w, vocab_.words);
  write_vocab(w, vocab_.chars);
  write_vocab(w, vocab_.slots);
  write_vocab(w, vocab_.intents);
  auto settings = settings_of(config_);
  w.u32(static_cast<uint32_t>(settings.size()));
  for (const auto& [k, v] : settings) {
    w.str(k);
    w.str(v);
  }
  auto params = named_parameters();
  w.u32(static_cast<uint32_t>(params.size() + 1));
  for (const auto& [name, t] : params) write_tensor(w, name, t);
  write_tensor(w, "prior_mask", mask_.matrix);
  out.flush();
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

JointModel JointModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + ")");
  }
  Vocabularies vocab;
  vocab.words = read_vocab(r);
  vocab.chars = read_vocab(r);
  vocab.slots = read_vocab(r);
  vocab.intents = read_vocab(r);

  TrainConfig holder;
  const uint32_t n_settings = r.u32();
  for (uint32_t i = 0; i < n_settings; ++i) {
    std::string key = r.str();
    std::string value = r.str();
    try {
      apply_config_entry(holder, key, value);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint settings: ") + e.what());
    }
  }
  const ModelConfig& cfg = holder.model;

  std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;
  const uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const uint32_t rank = r.u32();
    if (rank != 2) throw FormatError("tensor " + name + " has rank " + std::to_string(rank));
    Shape shape{static_cast<size_t>(r.u64()), static_cast<size_t>(r.u64())};
    if (shape.rows == 0 || shape.cols == 0 || shape.size() > (size_t{1} << 32)) {
      throw FormatError("tensor " + name + " has invalid shape " + shape.str());
    }
    // Grow as values arrive so a corrupt shape fails on truncation, not
    // on allocation.
    std::vector<double> data;
    data.reserve(std::min<size_t>(shape.size(), size_t{1} << 16));
    for (size_t k = 0; k < shape.size(); ++k) data.push_back(r.f64());
    tensors[name] = {shape, std::move(data)};
  }

  auto take = [&](const std::string& name, const Shape& want) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor " + name);
    if (it->second.first != want) {
      throw FormatError("tensor " + name + " has shape " + it->second.first.str() +
                        ", expected " + want.str());
    }
    return it->second.second;
  };

  const size_t S = vocab.slots.size(), C = vocab.intents.size();
  PriorMask mask{Tensor::constant(S, C, take("prior_mask", {S, C})), cfg.mask_eps};
  JointModel model;
  try {
    model = init(std::move(vocab), std::move(mask), cfg, 0);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint settings: ") + e.what());
  }
  for (auto& [name, t] : model.named_parameters()) {
    auto data = take(name, t.shape());
    auto dst = t.mutable_values();
    std::copy(data.begin(), data.end(), dst.begin());
  }
  return model;
}

}  // namespace sluj
