#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "heatsmooth/data.hpp"
#include "heatsmooth/errors.hpp"
#include "heatsmooth/io.hpp"

using namespace heatsmooth;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / "heatsmooth_data_tests";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("1d outlier set: one planted opposite-class point, balanced bands") {
  const Dataset ds = gen_1d_outlier(201, -0.5, 9);
  REQUIRE(ds.size() == 201);
  CHECK(ds.num_classes == 2);

  std::size_t outliers = 0;
  std::size_t lo_band = 0, hi_band = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.inputs.at2(i, 0);
    if (ds.labels[i] == 1 && x < 0.0) {
      ++outliers;
      CHECK(x == -0.5);
    } else if (ds.labels[i] == 0) {
      CHECK(x >= -1.0);
      CHECK(x <= -0.2);
      ++lo_band;
    } else {
      CHECK(x >= 0.2);
      CHECK(x <= 1.0);
      ++hi_band;
    }
  }
  CHECK(outliers == 1);
  CHECK(std::llabs(static_cast<long long>(lo_band) - static_cast<long long>(hi_band)) <= 1);

  const Dataset again = gen_1d_outlier(201, -0.5, 9);
  CHECK(again.inputs == ds.inputs);
  CHECK(again.labels == ds.labels);
}

TEST_CASE("2d clusters: counts, separability at a large margin, determinism") {
  const Dataset ds = gen_2d_clusters(101, 2.0, 4);
  REQUIRE(ds.size() == 101);
  std::size_t n0 = 0, n1 = 0;
  for (int y : ds.labels) (y == 0 ? n0 : n1)++;
  CHECK(n0 == 50);
  CHECK(n1 == 51);  // planted outlier carries label 1

  // With margin 2 everything except the planted outlier is x-separable.
  std::size_t misplaced = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.inputs.at2(i, 0);
    if ((ds.labels[i] == 0 && x > 0.0) || (ds.labels[i] == 1 && x < 0.0)) ++misplaced;
  }
  CHECK(misplaced == 1);

  const Dataset again = gen_2d_clusters(101, 2.0, 4);
  CHECK(again.inputs == ds.inputs);
}

TEST_CASE("csv round-trip preserves values and labels") {
  const Dataset ds = gen_2d_clusters(40, 0.5, 11);
  const auto path = (scratch_dir() / "roundtrip.csv").string();
  save_csv(ds, path);
  const Dataset back = load_csv(path);
  CHECK(back.inputs == ds.inputs);
  CHECK(back.labels == ds.labels);
  CHECK(back.num_classes == ds.num_classes);
}

TEST_CASE("csv without a label column loads unlabeled") {
  const auto path = (scratch_dir() / "unlabeled.csv").string();
  write_file(path, "x_0,x_1\n0.5,1.5\n-0.25,2.0\n");
  const Dataset ds = load_csv(path);
  CHECK_FALSE(ds.labeled());
  CHECK(ds.size() == 2);
  CHECK(ds.inputs.at2(1, 1) == 2.0);
}

TEST_CASE("csv errors carry line numbers") {
  const auto path = (scratch_dir() / "bad.csv").string();
  std::string content = "x_0,label\n";
  for (int i = 0; i < 5; ++i) content += "0.5,0\n";
  content += "oops,1\n";
  write_file(path, content);
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 7"), DataError);

  write_file(path, "x_0,label\n0.1,0\n0.2,-3\n");
  CHECK_THROWS_AS(load_csv(path), DataError);  // label out of range

  write_file(path, "y_0,label\n0.1,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("x_0"), DataError);
}

TEST_CASE("normalize: zero mean, unit variance, invertible") {
  const Dataset ds = gen_2d_clusters(60, 0.5, 21);
  const auto [normed, params] = normalize(ds);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < normed.size(); ++i) m += normed.inputs.at2(i, j);
    m /= normed.size();
    for (std::size_t i = 0; i < normed.size(); ++i) {
      const double d = normed.inputs.at2(i, j) - m;
      v += d * d;
    }
    v /= normed.size();
    CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }

  const Tensor restored = params.invert(normed.inputs);
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) {
    CHECK(restored[i] == doctest::Approx(ds.inputs[i]).epsilon(1e-10));
  }

  // Re-normalizing is the identity transform.
  const auto [renormed, params2] = normalize(normed);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(params2.mean[j] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(params2.stddev[j] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("normalize clamps zero-variance features and reports them") {
  Dataset ds;
  ds.inputs = Tensor::matrix(3, 2, {1.0, 5.0, 2.0, 5.0, 3.0, 5.0});
  ds.num_classes = 0;
  const auto [normed, params] = normalize(ds);
  REQUIRE(params.clamped_features.size() == 1);
  CHECK(params.clamped_features[0] == 1);
  CHECK(params.stddev[1] == 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(normed.inputs.at2(i, 1) == 0.0);
}

TEST_CASE("generators reject tiny and invalid requests") {
  CHECK_THROWS_AS(gen_1d_outlier(5, -0.5, 0), ConfigError);
  CHECK_THROWS_AS(gen_2d_clusters(5, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(gen_2d_clusters(50, -1.0, 0), ConfigError);
}
