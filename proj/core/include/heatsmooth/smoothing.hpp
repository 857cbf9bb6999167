#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatsmooth/data.hpp"
#include "heatsmooth/jl.hpp"
#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"

namespace heatsmooth {

enum class SmoothVariant {
  kHeatIterative,   // timestep-iterated distillation with gradient penalty
  kNoisyDistill,    // single-pass distillation with noisy student inputs
  kNoiseBaseline,   // cross-entropy on noise-augmented inputs
};

enum class LrSchedule { kFixed, kStep };

std::string variant_name(SmoothVariant v);
SmoothVariant variant_from_name(const std::string& name);

struct SmoothingConfig {
  double sigma = 0.25;
  int n_timesteps = 5;
  double timestep_h = 0.0;  // 0 resolves to 1/n_timesteps
  int epochs_per_timestep = 200;
  double lr = 0.01;
  LrSchedule lr_schedule = LrSchedule::kFixed;
  int lr_step_every = 50;
  double lr_step_factor = 0.5;
  int batch_size = 32;
  JlConfig jl;
  SmoothVariant variant = SmoothVariant::kHeatIterative;
  double noise_fraction = 0.5;   // noisy-input share for the noisy variant
  bool softmax_distance = true;  // raw-logit mode available for ablation
  double divergence_threshold = 1e6;
  std::uint64_t seed = 0;

  double resolved_h() const;
  void validate() const;
};

struct TimestepStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::vector<TimestepStats> timesteps;
  std::vector<double> epoch_wall_seconds;  // kept out of hashed artifacts
  std::string config_echo;

  // Deterministic payload; timing goes to a separate document.
  std::string to_json() const;
  std::string timing_json() const;
};

// One minibatch of the distillation objective as a differentiable scalar:
//   (1/Nb) sum_i [ 1/2 ||S(v(x_i)) - S(f(x_i))||^2
//                  + (sigma^2/2) * JL-estimate of ||grad_x v(x_i)||^2 ]
// with S = softmax (or identity in raw-logit mode), the teacher f frozen and
// the probe directions held constant. The gradient-penalty weight here is
// sigma^2/2; the timestep trainer scales it by h.
struct MinibatchLoss {
  Tape tape;
  Tape::Id loss = -1;
  Tape::Id distance_term = -1;
  Tape::Id penalty_term = -1;
  MlpModel::OnTape student_params;
};

MinibatchLoss heatsmoothing_minibatch_loss(const MlpModel& student, const MlpModel& teacher,
                                           const Tensor& batch, const SmoothingConfig& cfg,
                                           Rng& rng);

// One variational round: minimize over v of
//   E_x[ 1/2 ||v(x) - f_k(x)||^2 + (h sigma^2 / 2) ||grad_x v(x)||^2 ]
// by minibatch SGD for cfg.epochs_per_timestep epochs, starting from f_k.
MlpModel train_timestep(const MlpModel& f_k, const InputSet& data, const SmoothingConfig& cfg,
                        double h, TrainReport* report);

// Chains n_timesteps rounds, re-freezing the teacher each round.
MlpModel train_heatsmooth(const MlpModel& f0, const InputSet& data, const SmoothingConfig& cfg,
                          TrainReport* report);

// Single-pass variant: a noise_fraction share of every batch is evaluated
// (and penalized) at x + eta, eta ~ N(0, sigma^2 I); the teacher always sees
// clean x. Labels are never read.
MlpModel train_noisy_distill(const MlpModel& f0, const InputSet& data, const SmoothingConfig& cfg,
                             TrainReport* report);

// Comparison arm: plain cross-entropy with eta ~ N(0, sigma^2 I) added to
// every input. sigma = 0 is plain training. Requires labels.
MlpModel train_noise_baseline(const MlpModel& f0, const Dataset& data, const SmoothingConfig& cfg,
                              TrainReport* report);

}  // namespace heatsmooth
