#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wmplanlab/errors.hpp"

namespace wmplan {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array of doubles. Immutable once built; share freely.
class Tensor {
 public:
  Tensor() = default;

  /// Validating constructor for external inputs: rejects size mismatch and non-finite entries.
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw ContractError("tensor shape " + shape_str(shape_) + " does not match " +
                          std::to_string(data_.size()) + " values");
    for (double x : data_)
      if (!std::isfinite(x)) throw ContractError("tensor input contains a non-finite value");
  }

  /// Non-validating constructor for values produced by internal kernels.
  static Tensor raw(Shape shape, std::vector<double> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  static Tensor zeros(Shape shape) {
    const auto n = shape_size(shape);
    return raw(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor filled(Shape shape, double v) {
    const auto n = shape_size(shape);
    return raw(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  /// Row vector [1, n].
  static Tensor row(std::span<const double> v) {
    return Tensor({1, v.size()}, std::vector<double>(v.begin(), v.end()));
  }

  /// Stack equal-length vectors into a [rows, n] matrix.
  static Tensor stack(std::span<const std::vector<double>> rows) {
    require(!rows.empty(), "stack: no rows");
    const auto n = rows.front().size();
    std::vector<double> out;
    out.reserve(rows.size() * n);
    for (const auto& r : rows) {
      require(r.size() == n, "stack: ragged rows");
      out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), n}, std::move(out));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::vector<double> row_vec(std::size_t r) const {
    const auto c = cols();
    return {data_.begin() + static_cast<std::ptrdiff_t>(r * c),
            data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
  }

  double item() const {
    if (data_.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), "reshape size mismatch");
    return raw(std::move(shape), data_);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// WMT1 binary format: "WMT1", u64 rank, u64 dims..., f64 data (little-endian).

static_assert(std::endian::native == std::endian::little, "WMT1 I/O assumes a little-endian host");

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("WMT1", 4);
  const std::uint64_t rank = t.rank();
  os.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (auto d : t.shape()) {
    const std::uint64_t dim = d;
    os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  }
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw std::runtime_error("failed writing WMT1 tensor");
}

inline Tensor read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "WMT1", 4) != 0)
    throw DatasetError("bad WMT1 magic");
  std::uint64_t rank = 0;
  if (!is.read(reinterpret_cast<char*>(&rank), sizeof rank) || rank > 8)
    throw DatasetError("bad WMT1 rank");
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint64_t dim = 0;
    if (!is.read(reinterpret_cast<char*>(&dim), sizeof dim)) throw DatasetError("truncated WMT1 header");
    d = dim;
  }
  std::vector<double> data(shape_size(shape));
  if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double))))
    throw DatasetError("truncated WMT1 payload");
  return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open " + path);
  return read_tensor(is);
}

// FNV-1a over the raw bytes of shapes and values; used for frozen-parameter checks.
inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h = 1469598103934665603ULL) {
  for (auto d : t.shape()) {
    const std::uint64_t dim = d;
    h = fnv1a(&dim, sizeof dim, h);
  }
  return fnv1a(t.data().data(), t.size() * sizeof(double), h);
}

inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

}  // namespace wmplan
