#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "layerforge/error.hpp"

namespace layerforge {

#ifdef LAYERFORGE_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major n-d array. Images are (H, W, C), conv kernels are
// (k, k, Cin, Cout), code fields are (h, w, c).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<real> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, real value);
  static Tensor scalar(real value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  std::vector<real>& storage() { return data_; }
  const std::vector<real>& storage() const { return data_; }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  real& at2(int y, int x) {
    return data_[static_cast<std::size_t>(y) * shape_[1] + x];
  }
  real at2(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * shape_[1] + x];
  }
  real& at3(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  real at3(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  real& at4(int a, int b, int c, int d) {
    return data_[((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  real at4(int a, int b, int c, int d) const {
    return data_[((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<int> shape) const;

 private:
  std::vector<int> shape_;
  std::vector<real> data_;
};

bool all_finite(const Tensor& t);
void require_finite(const Tensor& t, const char* context);
void require_shape(const Tensor& t, const std::vector<int>& shape, const char* context);
void require_rank(const Tensor& t, int rank, const char* context);

// Elementwise helpers shared by non-graph code paths.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
real sum(const Tensor& a);
real mean(const Tensor& a);
real max_abs(const Tensor& a);
real dot(const Tensor& a, const Tensor& b);

}  // namespace layerforge
