#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"
#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

enum class CertifyMode { kStochasticMc, kDeterministicFixedClass, kLBound };

std::string certify_mode_name(CertifyMode m);
CertifyMode certify_mode_from_name(const std::string& name);

struct CertifyConfig {
  double sigma = 0.25;
  int n0 = 25;           // selection samples
  int n = 1000;          // estimation samples
  double alpha = 0.001;  // confidence level
  CertifyMode mode = CertifyMode::kStochasticMc;
  int lbound_rank = 1;   // k in the ranked-output gap
  std::uint64_t seed = 0;

  void validate() const;
};

struct CertificationRecord {
  std::size_t example_id = 0;
  bool abstain = false;
  int predicted = 0;  // meaningful only when !abstain
  double radius = 0.0;
  CertifyMode mode = CertifyMode::kStochasticMc;
  std::optional<double> pa_lower;
};

// Exact one-sided binomial lower confidence bound (regularized incomplete
// beta inverted by bisection). successes = 0 gives 0; successes = n gives
// alpha^(1/n).
double clopper_pearson_lower(int successes, int n, double alpha);

// Standard normal CDF (erfc-based) and its inverse by bisection to 1e-13.
double normal_cdf(double x);
double normal_quantile(double q);

// Regularized incomplete beta I_x(a, b); exposed for tests.
double incomplete_beta(double a, double b, double x);

// Ranked-gap radius sigma * sqrt(pi/2) * (p_(k) - p_(k+1)) for outputs
// already in [0,1]^Nc.
double lbound_radius_from_probs(std::span<const double> probs, double sigma, int rank);

// Same bound with softmax applied to the model's logits first.
double lbound_radius(const MlpModel& model, const Tensor& x, double sigma, int rank);

// Monte Carlo certification: n0 noisy votes select the candidate class, n
// fresh votes bound its probability, radius = sigma * quantile(p_lower).
CertificationRecord certify_stochastic(const MlpModel& model, const Tensor& x,
                                       std::size_t example_id, const CertifyConfig& cfg, Rng& rng);

// Deterministic-model certification: the candidate class comes from a single
// clean forward pass; the probability bound still uses n noisy votes.
CertificationRecord certify_deterministic(const MlpModel& model, const Tensor& x,
                                          std::size_t example_id, const CertifyConfig& cfg,
                                          Rng& rng);

// Fully sample-free record from the ranked-gap bound.
CertificationRecord certify_lbound(const MlpModel& model, const Tensor& x, std::size_t example_id,
                                   const CertifyConfig& cfg);

struct CurvePoint {
  double radius = 0.0;
  double accuracy = 0.0;
};

// Fraction of examples certified at radius >= r AND predicted correctly;
// abstentions never count. Monotone non-increasing by construction, asserted.
std::vector<CurvePoint> certified_accuracy_curve(const std::vector<CertificationRecord>& records,
                                                 const std::vector<int>& labels,
                                                 std::span<const double> radii);

// CSV row format: example_id,mode,predicted,abstain,pA_lower,radius.
std::string certification_records_csv(const std::vector<CertificationRecord>& records);
std::vector<CertificationRecord> certification_records_from_csv(const std::string& text);
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace heatsmooth
