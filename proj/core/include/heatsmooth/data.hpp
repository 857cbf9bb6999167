#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

// Label-free carrier accepted by the smoothing trainers. Trainers that need
// labels take a full Dataset instead.
struct InputSet {
  Tensor inputs;  // [N, d]
  std::size_t size() const { return inputs.rows(); }
  std::size_t input_dim() const { return inputs.cols(); }
};

struct DatasetMeta {
  std::string name;
  std::uint64_t seed = 0;
  std::string params;
};

struct Dataset {
  Tensor inputs;            // [N, d]
  std::vector<int> labels;  // empty when unlabeled
  int num_classes = 0;
  DatasetMeta meta;

  bool labeled() const { return !labels.empty(); }
  std::size_t size() const { return inputs.rows(); }
  std::size_t input_dim() const { return inputs.cols(); }
  InputSet inputs_only() const { return InputSet{inputs}; }
  void validate() const;
};

// 1D binary toy set: one class band on [-1,-0.2], the other on [0.2,1], and a
// single opposite-class outlier planted at outlier_x inside the first band.
Dataset gen_1d_outlier(std::size_t n_points, double outlier_x, std::uint64_t seed);

// Two 2D Gaussian blobs separated by `margin` along the first axis, plus one
// planted opposite-class outlier inside the first blob.
Dataset gen_2d_clusters(std::size_t n_points, double margin, std::uint64_t seed);

// CSV schema: header x_0,...,x_{d-1}[,label]. A missing label column loads as
// an unlabeled dataset.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

struct NormalizeParams {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::size_t> clamped_features;  // zero-variance, clamped to 1

  Tensor apply(const Tensor& x) const;    // works on [d] or [N, d]
  Tensor invert(const Tensor& x) const;
};

// Per-feature zero mean, unit variance. Zero-variance features are clamped
// and reported in NormalizeParams::clamped_features.
std::pair<Dataset, NormalizeParams> normalize(const Dataset& ds);

}  // namespace heatsmooth
