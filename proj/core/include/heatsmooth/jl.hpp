#pragma once

#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"
#include "heatsmooth/tape.hpp"
#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

// Randomized estimate of the squared Frobenius norm of the input Jacobian:
// Gaussian projections of the output followed by a finite difference along
// the normalized projected gradient.
struct JlConfig {
  int kappa = 10;         // number of probe replications
  double delta_fd = 0.1;  // finite-difference step
  int proj_dim = 0;       // 0 means the model's class count

  int resolved_proj_dim(std::size_t num_classes) const;
  void validate() const;
};

// Probe vector with i.i.d. N(0,1) entries scaled by 1/sqrt(K), so that
// E||w||^2 = 1.
Tensor sample_w(int proj_dim, Rng& rng);

// Unit vector along grad_x(w . f(x)); the zero vector when that gradient
// vanishes (norm below 1e-12).
Tensor hatg(const MlpModel& model, const Tensor& x, const Tensor& w);

// (K/kappa) * sum_i ((w_i . f(x + delta*g_i) - w_i . f(x)) / delta)^2.
// The K/kappa factor makes the estimator unbiased for linear maps at any
// kappa; the probe directions g_i are recomputed per draw and never carry
// gradients.
double grad_norm_sq_estimate(const MlpModel& model, const Tensor& x, const JlConfig& cfg,
                             Rng& rng);

// Same estimator recorded against live student weights. The probe direction
// and the perturbed input enter as constants, so only first-order paths
// through the weights survive. `clean_forward` is the already-recorded f(x).
Tape::Id jl_penalty_on_tape(Tape& tape, const MlpModel& student, const MlpModel::OnTape& params,
                            const Tensor& x, Tape::Id clean_forward, const JlConfig& cfg,
                            Rng& rng);

}  // namespace heatsmooth
