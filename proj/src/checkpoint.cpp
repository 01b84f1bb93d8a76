#include "spurious/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "spurious/errors.hpp"

namespace spurious {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr std::array<char, 8> kMagic = {'S', 'P', 'X', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_matrix(const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(m(r, c));
    }
  }
  void put_vector(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put(v(i));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot read " + path.string());
  }
  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw DataError(path_.string() + ": truncated checkpoint");
    return value;
  }
  Matrix get_matrix(std::uint64_t rows, std::uint64_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>();
    }
    return m;
  }
  Vector get_vector(std::uint64_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = get<double>();
    return v;
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw DataError(path_.string() + ": trailing bytes after checkpoint");
    }
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

constexpr std::uint64_t kMaxDim = 1u << 24;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.raw(kMagic.data(), kMagic.size());
  w.put(kVersion);
  w.put(static_cast<std::uint8_t>(ckpt.params.activation()));
  const auto dims = ckpt.params.dims();
  w.put(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.put(static_cast<std::uint64_t>(d));
  for (const auto& l : ckpt.params.layers()) {
    w.put_matrix(l.weight);
    w.put_vector(l.bias);
  }
  w.put(ckpt.tau);
  w.put(static_cast<std::int32_t>(ckpt.epoch));
  w.put(static_cast<std::uint8_t>(ckpt.head ? 1 : 0));
  if (ckpt.head) {
    w.put(static_cast<std::uint8_t>(ckpt.head_mode));
    w.put(static_cast<std::uint64_t>(ckpt.head->weight.rows()));
    w.put(static_cast<std::uint64_t>(ckpt.head->weight.cols()));
    w.put_matrix(ckpt.head->weight);
    w.put_vector(ckpt.head->bias);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  for (char& c : magic) c = r.get<char>();
  if (magic != kMagic) throw DataError(path.string() + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto activation = r.get<std::uint8_t>();
  if (activation > static_cast<std::uint8_t>(Activation::kLinear)) {
    throw DataError(path.string() + ": bad activation code");
  }
  const auto n_dims = r.get<std::uint32_t>();
  if (n_dims < 2 || n_dims > 64) throw DataError(path.string() + ": bad layer count");
  std::vector<std::uint64_t> dims(n_dims);
  for (auto& d : dims) {
    d = r.get<std::uint64_t>();
    if (d == 0 || d > kMaxDim) throw DataError(path.string() + ": bad layer dimension");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.weight = r.get_matrix(dims[i + 1], dims[i]);
    l.bias = r.get_vector(dims[i + 1]);
    layers.push_back(std::move(l));
  }
  Checkpoint ckpt;
  ckpt.params = ExtractorParams(std::move(layers), static_cast<Activation>(activation));
  ckpt.tau = r.get<double>();
  ckpt.epoch = r.get<std::int32_t>();
  if (r.get<std::uint8_t>() != 0) {
    const auto mode = r.get<std::uint8_t>();
    if (mode > static_cast<std::uint8_t>(HeadMode::kCosine)) {
      throw DataError(path.string() + ": bad head mode");
    }
    ckpt.head_mode = static_cast<HeadMode>(mode);
    const auto k = r.get<std::uint64_t>();
    const auto d = r.get<std::uint64_t>();
    if (k == 0 || k > kMaxDim || d != ckpt.params.output_dim()) {
      throw DataError(path.string() + ": head shape does not match the extractor");
    }
    LinearHead head;
    head.weight = r.get_matrix(k, d);
    head.bias = r.get_vector(k);
    ckpt.head = std::move(head);
  }
  r.expect_end();
  return ckpt;
}

}  // namespace spurious
