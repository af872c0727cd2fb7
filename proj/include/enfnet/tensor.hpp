#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace enfnet {

/// Raised when an input violates an operation's contract (bad shapes,
/// malformed files, invalid configuration). Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a computation goes numerically wrong (non-finite loss,
/// gradient-check exceedance). Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense 4-D value grid [batch, channels, height, width], row-major doubles.
/// The single carrier for images, feature maps, parameters and gradients.
class Tensor {
 public:
  Tensor() : shape_{0, 0, 0, 0} {}

  Tensor(int n, int c, int h, int w) : shape_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw ValidationError("Tensor: negative dimension in shape [" + shape_str() + "]");
    data_.assign(static_cast<size_t>(n) * c * h * w, 0.0);
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }

  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return data_.size() == 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int n, int c, int y, int x) {
    return data_[idx(n, c, y, x)];
  }
  double at(int n, int c, int y, int x) const {
    return data_[idx(n, c, y, x)];
  }

  /// Offset of the first element of row (n, c, y).
  int64_t row_offset(int n, int c, int y) const {
    return ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double min() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
  }
  double max() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << shape_[0] << "," << shape_[1] << "," << shape_[2] << "," << shape_[3];
    return os.str();
  }

 private:
  int64_t idx(int n, int c, int y, int x) const {
    return ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  std::array<int, 4> shape_;
  std::vector<double> data_;
};

inline void fill_gaussian(Tensor& t, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

inline void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace enfnet
