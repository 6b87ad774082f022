#include "layerforge/tensor.hpp"

#include <cmath>
#include <sstream>

namespace layerforge {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), real(0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("data size " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, real value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = value;
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  return Tensor(std::move(shape), data_);
}

bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const char* context) {
  if (!all_finite(t)) {
    throw NumericError(std::string(context) + ": non-finite value in tensor " +
                       shape_str(t.shape()));
  }
}

void require_shape(const Tensor& t, const std::vector<int>& shape, const char* context) {
  if (t.shape() != shape) {
    throw DimensionError(std::string(context) + ": expected shape " + shape_str(shape) +
                         ", got " + shape_str(t.shape()));
  }
}

void require_rank(const Tensor& t, int rank, const char* context) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(context) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor scale(const Tensor& a, real s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

real sum(const Tensor& a) {
  real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

real mean(const Tensor& a) {
  if (a.empty()) throw DimensionError("mean of empty tensor");
  return sum(a) / static_cast<real>(a.size());
}

real max_abs(const Tensor& a) {
  real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

real dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
  real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace layerforge
