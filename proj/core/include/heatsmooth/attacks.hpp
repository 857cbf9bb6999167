#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heatsmooth/data.hpp"
#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"
#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

enum class SuccessCriterion { kTop1, kTopK };

struct AttackConfig {
  double alpha_step = 0.5;  // l2 step size
  double epsilon = 4.0;     // max l2 perturbation
  int max_steps = 20;
  int n_noise = 0;          // ensemble samples; 0 = deterministic step
  double sigma = 0.0;       // ensemble noise scale
  SuccessCriterion success = SuccessCriterion::kTop1;
  int top_k = 1;
  double ddn_gamma = 0.05;       // multiplicative radius adjustment
  double ddn_init_radius = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AttackRecord {
  std::size_t example_id = 0;
  std::string attack;  // "pgd" or "ddn"
  bool success = false;
  double norm = 0.0;   // smallest successful l2 norm; final norm on failure
  int steps = 0;
  bool stationary = false;  // a zero-gradient iterate was hit
};

// Attack surface: logits plus the input gradient of the cross-entropy loss.
// MlpModel gets exact gradients; oracle-smoothed models can plug in too.
class AttackTarget {
 public:
  virtual ~AttackTarget() = default;
  virtual std::size_t num_classes() const = 0;
  virtual Tensor logits(const Tensor& x) const = 0;
  virtual Tensor loss_input_grad(const Tensor& x, int y) const = 0;
};

class MlpTarget : public AttackTarget {
 public:
  explicit MlpTarget(const MlpModel& model) : model_(model) {}
  std::size_t num_classes() const override { return model_.num_classes(); }
  Tensor logits(const Tensor& x) const override { return model_.forward(x); }
  Tensor loss_input_grad(const Tensor& x, int y) const override;

 private:
  const MlpModel& model_;
};

// True when y is pushed out of the top-k ranked logits (ties rank by lower
// index first).
bool misclassified(std::span<const double> logits, int y, const AttackConfig& cfg);

// One l2 step: alpha times the normalized loss gradient (summed over n_noise
// noisy replicas when n_noise > 0), then projection onto the epsilon-ball.
// A vanishing gradient leaves delta unchanged and sets *stationary.
Tensor pgd_step(const AttackTarget& target, const Tensor& x, const Tensor& delta, int y,
                const AttackConfig& cfg, Rng& rng, bool* stationary);

// Iterates pgd_step until misclassification or max_steps; returns the first
// successful norm (norms only grow along the PGD path).
AttackRecord pgd_attack(const AttackTarget& target, const Tensor& x, int y,
                        std::size_t example_id, const AttackConfig& cfg, Rng& rng);

// Decoupled direction and norm: gradient steps set the direction, the radius
// shrinks by (1 - gamma) on adversarial iterates and grows by (1 + gamma)
// otherwise; the smallest successful norm is kept.
AttackRecord ddn_attack(const AttackTarget& target, const Tensor& x, int y,
                        std::size_t example_id, const AttackConfig& cfg, Rng& rng);

struct SummaryStats {
  double median = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};

SummaryStats summarize(std::vector<double> values);

// Ranked-gap radii over a dataset, reduced to median/mean.
SummaryStats lbound_table(const MlpModel& model, const Dataset& data, double sigma, int rank);

// Fraction of records successfully attacked at norm <= threshold. Monotone
// non-decreasing, asserted.
std::vector<std::pair<double, double>> attack_curve(const std::vector<AttackRecord>& records,
                                                    std::span<const double> norms);

// CSV row format: example_id,attack,success,norm,steps.
std::string attack_records_csv(const std::vector<AttackRecord>& records);
std::vector<AttackRecord> attack_records_from_csv(const std::string& text);
std::string attack_curve_csv(const std::vector<std::pair<double, double>>& curve);

}  // namespace heatsmooth
