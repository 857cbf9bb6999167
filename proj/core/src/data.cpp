#include "heatsmooth/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "heatsmooth/errors.hpp"
#include "heatsmooth/rng.hpp"

namespace heatsmooth {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void Dataset::validate() const {
  inputs.ensure_finite("dataset inputs");
  if (labeled()) {
    if (labels.size() != size()) throw DataError("label count does not match input count");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
}

Dataset gen_1d_outlier(std::size_t n_points, double outlier_x, std::uint64_t seed) {
  if (n_points < 10) throw ConfigError("data.n_points must be >= 10");
  Rng rng = Rng::stream(seed, {0x31645F6F75ULL});

  const std::size_t n_band = n_points - 1;
  const std::size_t n_lo = n_band / 2;
  const std::size_t n_hi = n_band - n_lo;

  std::vector<double> xs;
  std::vector<int> ys;
  xs.reserve(n_points);
  ys.reserve(n_points);
  for (std::size_t i = 0; i < n_lo; ++i) {
    xs.push_back(rng.uniform(-1.0, -0.2));
    ys.push_back(0);
  }
  for (std::size_t i = 0; i < n_hi; ++i) {
    xs.push_back(rng.uniform(0.2, 1.0));
    ys.push_back(1);
  }
  xs.push_back(outlier_x);
  ys.push_back(1);

  Dataset ds;
  ds.inputs = Tensor::matrix(n_points, 1, std::move(xs));
  ds.labels = std::move(ys);
  ds.num_classes = 2;
  ds.meta = {"1d_outlier", seed,
             "n_points=" + std::to_string(n_points) + ",outlier_x=" + fmt_g17(outlier_x)};
  ds.validate();
  return ds;
}

Dataset gen_2d_clusters(std::size_t n_points, double margin, std::uint64_t seed) {
  if (n_points < 10) throw ConfigError("data.n_points must be >= 10");
  if (margin < 0.0) throw ConfigError("data.margin must be nonnegative");
  Rng rng = Rng::stream(seed, {0x32645F636CULL});

  const double blob_std = 0.25;
  // Centers placed so the gap between 3-sigma blob edges equals `margin`.
  const double cx = margin / 2.0 + 3.0 * blob_std;

  const std::size_t n_band = n_points - 1;
  const std::size_t n0 = n_band / 2;
  const std::size_t n1 = n_band - n0;

  std::vector<double> xs;
  std::vector<int> ys;
  xs.reserve(2 * n_points);
  ys.reserve(n_points);
  for (std::size_t i = 0; i < n0; ++i) {
    xs.push_back(-cx + blob_std * rng.normal());
    xs.push_back(blob_std * rng.normal());
    ys.push_back(0);
  }
  for (std::size_t i = 0; i < n1; ++i) {
    xs.push_back(cx + blob_std * rng.normal());
    xs.push_back(blob_std * rng.normal());
    ys.push_back(1);
  }
  // Planted outlier: class-1 point inside the class-0 blob.
  xs.push_back(-cx + 0.1);
  xs.push_back(0.1);
  ys.push_back(1);

  Dataset ds;
  ds.inputs = Tensor::matrix(n_points, 2, std::move(xs));
  ds.labels = std::move(ys);
  ds.num_classes = 2;
  ds.meta = {"2d_clusters", seed,
             "n_points=" + std::to_string(n_points) + ",margin=" + fmt_g17(margin)};
  ds.validate();
  return ds;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv_line(line);
  bool has_label = !header.empty() && header.back() == "label";
  const std::size_t d = has_label ? header.size() - 1 : header.size();
  if (d == 0) throw DataError(path + ": no feature columns in header");
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x_" + std::to_string(j)) {
      throw DataError(path + ": header column " + std::to_string(j) + " is '" + header[j] +
                      "', expected 'x_" + std::to_string(j) + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(fields[j], &pos);
        if (pos != fields[j].size()) throw std::invalid_argument("trailing characters");
        values.push_back(v);
      } catch (const std::exception&) {
        throw DataError(path + ": line " + std::to_string(line_no) + ": bad numeric field '" +
                        fields[j] + "'");
      }
    }
    if (has_label) {
      try {
        const int y = std::stoi(fields[d]);
        labels.push_back(y);
        max_label = std::max(max_label, y);
      } catch (const std::exception&) {
        throw DataError(path + ": line " + std::to_string(line_no) + ": bad label '" + fields[d] +
                        "'");
      }
    }
  }
  if (values.empty()) throw DataError(path + ": no data rows");

  Dataset ds;
  const std::size_t n = values.size() / d;
  ds.inputs = Tensor::matrix(n, d, std::move(values));
  ds.labels = std::move(labels);
  ds.num_classes = has_label ? max_label + 1 : 0;
  ds.meta = {path, 0, ""};
  if (!ds.inputs.all_finite()) throw DataError(path + ": non-finite input values");
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::size_t d = ds.input_dim();
  for (std::size_t j = 0; j < d; ++j) {
    if (j) out << ",";
    out << "x_" << j;
  }
  if (ds.labeled()) out << ",label";
  out << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) out << ",";
      out << fmt_g17(ds.inputs.at2(i, j));
    }
    if (ds.labeled()) out << "," << ds.labels[i];
    out << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

Tensor NormalizeParams::apply(const Tensor& x) const {
  Tensor out = x;
  const std::size_t d = mean.size();
  if (x.rank() == 1) {
    if (x.size() != d) throw ShapeError("normalize: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) out[j] = (out[j] - mean[j]) / stddev[j];
  } else {
    if (x.cols() != d) throw ShapeError("normalize: dimension mismatch");
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) out.at2(i, j) = (out.at2(i, j) - mean[j]) / stddev[j];
  }
  return out;
}

Tensor NormalizeParams::invert(const Tensor& x) const {
  Tensor out = x;
  const std::size_t d = mean.size();
  if (x.rank() == 1) {
    if (x.size() != d) throw ShapeError("normalize: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) out[j] = out[j] * stddev[j] + mean[j];
  } else {
    if (x.cols() != d) throw ShapeError("normalize: dimension mismatch");
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) out.at2(i, j) = out.at2(i, j) * stddev[j] + mean[j];
  }
  return out;
}

std::pair<Dataset, NormalizeParams> normalize(const Dataset& ds) {
  if (ds.size() == 0) throw DataError("normalize: empty dataset");
  const std::size_t n = ds.size(), d = ds.input_dim();
  NormalizeParams params;
  params.mean.assign(d, 0.0);
  params.stddev.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += ds.inputs.at2(i, j);
    m /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlt = ds.inputs.at2(i, j) - m;
      var += dlt * dlt;
    }
    var /= static_cast<double>(n);
    params.mean[j] = m;
    if (var <= 0.0) {
      params.stddev[j] = 1.0;
      params.clamped_features.push_back(j);
    } else {
      params.stddev[j] = std::sqrt(var);
    }
  }
  Dataset out = ds;
  out.inputs = params.apply(ds.inputs);
  return {std::move(out), std::move(params)};
}

}  // namespace heatsmooth
