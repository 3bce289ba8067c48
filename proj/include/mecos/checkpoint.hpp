#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mecos/adam.hpp"
#include "mecos/config.hpp"
#include "mecos/params.hpp"

namespace mecos {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Everything needed to resume or evaluate a training run. Tensors are
/// stored as 64-bit floats regardless of the training precision.
///
/// Binary layout (all integers and floats little-endian):
///   "MECOSCKP"  u32 version
///   str hyperparams (key = value text)
///   u64 n, then n tensor records: str name, u32 rank, u64 dims[rank], f64 values
///   str "adam", u64 step, f64 lr, beta1, beta2, epsilon,
///     u64 n + records (first moments), u64 n + records (second moments)
///   str "rng", str engine state
///   f64 best validation HR@10 (negative: never validated), u64 epochs run
/// where `str` is a u64 byte length followed by the bytes.
struct Checkpoint {
  static constexpr char kMagic[9] = "MECOSCKP";
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  Hyperparams hyper;
  std::vector<NamedTensor> tensors;
  AdamConfig adam_config;
  std::uint64_t adam_step = 0;
  std::vector<NamedTensor> adam_first;
  std::vector<NamedTensor> adam_second;
  std::string rng_state;
  double best_valid = -1.0;
  std::uint64_t epochs_run = 0;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put(bits, 8);
  }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* s, std::size_t n) { out_.append(s, n); }
  void tensor(const NamedTensor& t) {
    str(t.name);
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) u64(d);
    for (double v : t.values) f64(v);
  }
  void tensors(const std::vector<NamedTensor>& ts) {
    u64(ts.size());
    for (const auto& t : ts) tensor(t);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() {
    const std::uint64_t bits = get(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = str();
    const std::uint32_t rank = u32();
    if (rank > 8) throw CheckpointError("tensor '" + t.name + "' has implausible rank");
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(u64());
    const std::size_t n = shape_count(t.shape);
    need(8 * n);
    t.values.resize(n);
    for (auto& v : t.values) v = f64();
    return t;
  }
  std::vector<NamedTensor> tensors() {
    const std::uint64_t n = u64();
    if (n > 4096) throw CheckpointError("implausible tensor count");
    std::vector<NamedTensor> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  void expect_tag(const char* tag) {
    if (str() != tag) throw CheckpointError(std::string("missing '") + tag + "' block");
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw CheckpointError("truncated checkpoint");
  }
  std::uint64_t get(int bytes) {
    need(static_cast<std::uint64_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw(Checkpoint::kMagic, 8);
  w.u32(ck.version);
  w.str(to_config_text(ck.hyper));
  w.tensors(ck.tensors);
  w.str("adam");
  w.u64(ck.adam_step);
  w.f64(ck.adam_config.learning_rate);
  w.f64(ck.adam_config.beta1);
  w.f64(ck.adam_config.beta2);
  w.f64(ck.adam_config.epsilon);
  w.tensors(ck.adam_first);
  w.tensors(ck.adam_second);
  w.str("rng");
  w.str(ck.rng_state);
  w.f64(ck.best_valid);
  w.u64(ck.epochs_run);
  return w.take();
}

inline Checkpoint deserialize(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 8 || r.raw(8) != std::string(Checkpoint::kMagic, 8)) throw CheckpointError("not a checkpoint file");
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != Checkpoint::kVersion) {
    throw CheckpointError("incompatible checkpoint format version " + std::to_string(ck.version) + " (this build reads " +
                          std::to_string(Checkpoint::kVersion) + ")");
  }
  ck.hyper = hyperparams_from_text(r.str());
  ck.tensors = r.tensors();
  r.expect_tag("adam");
  ck.adam_step = r.u64();
  ck.adam_config.learning_rate = r.f64();
  ck.adam_config.beta1 = r.f64();
  ck.adam_config.beta2 = r.f64();
  ck.adam_config.epsilon = r.f64();
  ck.adam_first = r.tensors();
  ck.adam_second = r.tensors();
  r.expect_tag("rng");
  ck.rng_state = r.str();
  ck.best_valid = r.f64();
  ck.epochs_run = r.u64();
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template <typename T>
std::vector<NamedTensor> to_named(const std::vector<const Tensor<T>*>& tensors, const std::vector<std::string>& names,
                                  const std::string& prefix = "") {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    out.push_back({prefix + names[i], tensors[i]->shape(),
                   std::vector<double>(tensors[i]->values().begin(), tensors[i]->values().end())});
  }
  return out;
}

template <typename T>
void from_named(const std::vector<NamedTensor>& stored, const std::vector<Tensor<T>*>& into,
                const std::vector<std::string>& names, const std::string& prefix = "") {
  if (stored.size() != into.size()) throw CheckpointError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " + std::to_string(into.size()));
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (stored[i].name != prefix + names[i]) throw CheckpointError("expected tensor '" + prefix + names[i] + "', found '" + stored[i].name + "'");
    if (stored[i].shape != into[i]->shape()) {
      throw CheckpointError("tensor '" + stored[i].name + "' has shape " + shape_str(stored[i].shape) + ", model expects " + shape_str(into[i]->shape()));
    }
    for (std::size_t j = 0; j < stored[i].values.size(); ++j) (*into[i])[j] = static_cast<T>(stored[i].values[j]);
  }
}

/// Model parameters stored in a checkpoint, at precision T.
template <typename T>
ModelParams<T> params_from(const Checkpoint& ck) {
  if (ck.tensors.empty()) throw CheckpointError("checkpoint has no tensors");
  const auto& emb = ck.tensors.front();
  if (emb.shape.size() != 2) throw CheckpointError("malformed embedding tensor");
  auto params = ModelParams<T>::shaped(emb.shape[0], emb.shape[1], ck.hyper.ffn_depth);
  from_named(ck.tensors, params.tensors(), params.names());
  return params;
}

}  // namespace mecos
