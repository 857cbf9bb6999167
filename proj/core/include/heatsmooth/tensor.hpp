#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace heatsmooth {

// Dense row-major tensor of 64-bit reals. Scalars are rank-1 tensors of
// length 1. Values coming from external data are validated finite.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor basis(std::size_t n, std::size_t k);  // e_k in R^n

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool is_scalar() const { return rank() == 1 && values_.size() == 1; }

  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at2(std::size_t i, std::size_t j) const;
  double& at2(std::size_t i, std::size_t j);

  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  Tensor row(std::size_t i) const;  // rank-2 -> rank-1 copy
  double scalar_value() const;

  bool all_finite() const;
  void ensure_finite(const std::string& context) const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_str(const Tensor& t);

// Small numeric helpers shared by model evaluation, attacks and certification.
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
int argmax_lowest_tie(std::span<const double> v);
std::vector<double> softmax_stable(std::span<const double> logits);
double logsumexp_stable(std::span<const double> v);

}  // namespace heatsmooth
