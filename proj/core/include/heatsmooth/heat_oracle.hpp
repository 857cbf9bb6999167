#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"
#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

// Function sampled on a uniform 1D or 2D grid.
struct GridFunction {
  int dim = 1;
  std::array<std::array<double, 2>, 2> bounds{{{0.0, 1.0}, {0.0, 1.0}}};
  std::array<std::size_t, 2> resolution{3, 1};
  Tensor values;  // [n] or [nx, ny]

  static GridFunction sample_1d(double lo, double hi, std::size_t n,
                                const std::function<double(double)>& f);
  static GridFunction sample_2d(std::array<double, 2> xb, std::array<double, 2> yb,
                                std::size_t nx, std::size_t ny,
                                const std::function<double(double, double)>& f);

  double spacing(int axis) const;
  double coord(int axis, std::size_t i) const;
  void validate() const;

  // Indices at least `margin` away from every boundary.
  std::vector<std::size_t> interior_flat_indices(double margin) const;
};

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte Carlo Gaussian average E[f(x + eta)], eta ~ N(0, sigma^2 I).
McEstimate gaussian_convolve_mc(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, double sigma, std::size_t n_samples,
                                Rng& rng);
McEstimate gaussian_convolve_mc_1d(const std::function<double(double)>& f, double x, double sigma,
                                   std::size_t n_samples, Rng& rng);

// Discrete convolution with a sampled Gaussian kernel, trapezoid weights,
// kernel renormalized to unit discrete mass. The grid must extend at least
// 6 sigma past the region of interest; outputs near the boundary use edge
// clamping and are only trustworthy on the interior.
GridFunction gaussian_convolve_quadrature(const GridFunction& f, double sigma);

enum class BoundaryRule { kClampEnds, kPeriodic };

// Smallest step count satisfying the explicit-scheme stability bound.
std::size_t heat_min_stable_steps(const GridFunction& f0, double sigma, double t_final);

// Explicit finite-difference solution of u_t = (sigma^2/2) Lap u at t_final.
// n_steps = 0 picks the minimal stable count.
GridFunction heat_solve_fd(const GridFunction& f0, double sigma, double t_final,
                           std::size_t n_steps, BoundaryRule boundary = BoundaryRule::kClampEnds);

struct OracleCheckConfig {
  std::size_t mc_samples = 100000;
  std::size_t mc_points = 10;
  double sup_tol = 1e-3;
  double mc_gate_sigmas = 3.0;
  std::uint64_t seed = 0;
};

struct EquivalenceReport {
  std::string label;
  double sup_fd_vs_quad = 0.0;
  double mean_fd_vs_quad = 0.0;
  double sup_fd_vs_analytic = -1.0;    // negative when no reference given
  double sup_quad_vs_analytic = -1.0;
  std::size_t mc_points_checked = 0;
  std::size_t mc_points_within_gate = 0;
  bool pass = false;

  std::string to_text() const;
};

// Three-way agreement on the interior: finite-difference solution at t = 1,
// quadrature convolution, Monte Carlo averages (gated by standard error),
// plus an optional analytic reference.
EquivalenceReport equivalence_report(const GridFunction& f0, double sigma,
                                     const std::function<double(double)>& f_callable,
                                     const std::function<double(double)>& analytic,
                                     const OracleCheckConfig& cfg, const std::string& label);

// Ground-truth smoothed classifier: per-class quadrature convolution of a
// densely sampled probability-valued function, evaluated (with analytic
// derivative) at arbitrary interior points.
class SmoothedProbFunction1d {
 public:
  SmoothedProbFunction1d(double lo, double hi, std::size_t resolution, double sigma,
                         std::vector<std::function<double(double)>> class_probs);

  static SmoothedProbFunction1d from_model(const MlpModel& model, double lo, double hi,
                                           std::size_t resolution, double sigma);

  std::size_t num_classes() const { return samples_.size(); }
  double sigma() const { return sigma_; }
  double interior_lo() const { return lo_ + 6.0 * sigma_; }
  double interior_hi() const { return hi_ - 6.0 * sigma_; }

  std::vector<double> probs(double x) const;
  std::vector<double> probs_grad(double x) const;
  int predict(double x) const;

 private:
  double lo_ = 0.0, hi_ = 1.0, dx_ = 1.0, sigma_ = 0.1;
  std::vector<std::vector<double>> samples_;  // per class, on the grid
};

}  // namespace heatsmooth
