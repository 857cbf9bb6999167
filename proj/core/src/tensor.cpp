#include "heatsmooth/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t d : shape) p *= d;
  return p;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor axes must be positive");
  }
  if (shape_product(shape_) != values_.size()) {
    std::ostringstream os;
    os << "tensor value count " << values_.size() << " does not match shape " << shape_str(*this);
    throw ShapeError(os.str());
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::basis(std::size_t n, std::size_t k) {
  Tensor t = Tensor::zeros({n});
  t[k] = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() requires a rank-2 tensor, got " + shape_str(*this));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() requires a rank-2 tensor, got " + shape_str(*this));
  return shape_[1];
}

double Tensor::at2(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }
double& Tensor::at2(std::size_t i, std::size_t j) { return values_[i * cols() + j]; }

Tensor Tensor::row(std::size_t i) const {
  const std::size_t c = cols();
  if (i >= rows()) throw ShapeError("row index out of range");
  std::vector<double> out(values_.begin() + static_cast<std::ptrdiff_t>(i * c),
                          values_.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  return Tensor({c}, std::move(out));
}

double Tensor::scalar_value() const {
  if (size() != 1) throw ShapeError("scalar_value() on non-scalar tensor " + shape_str(*this));
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::ensure_finite(const std::string& context) const {
  if (!all_finite()) throw NumericError("non-finite values in " + context);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) os << ",";
    os << t.shape()[i];
  }
  os << "]";
  return os.str();
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

int argmax_lowest_tie(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<double> softmax_stable(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double logsumexp_stable(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

}  // namespace heatsmooth
