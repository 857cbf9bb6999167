#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatsmooth/rng.hpp"
#include "heatsmooth/tape.hpp"
#include "heatsmooth/tensor.hpp"

namespace heatsmooth {

enum class Activation { kRelu, kTanh };
enum class Mode { kTrain, kEval };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

// Feed-forward classifier. Hidden layers apply the activation, the output
// layer is affine. Frozen (eval-mode) models are immutable and safe for
// concurrent evaluation.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(std::vector<std::size_t> layer_dims, Activation activation,
           std::vector<LayerParams> layers);

  // Seeded Glorot-uniform initialization: U(+-sqrt(6/(n_in+n_out))).
  static MlpModel init(std::vector<std::size_t> layer_dims, Activation activation,
                       std::uint64_t seed);

  Tensor forward(const Tensor& x) const;
  int predict(const Tensor& x) const;

  // Gradient of the scalar projection w . f(x) with respect to x, one
  // reverse pass.
  Tensor input_grad_projected(const Tensor& x, const Tensor& w) const;

  // Full input Jacobian [Nc, d_in], stacked basis projections.
  Tensor input_jacobian(const Tensor& x) const;
  double jacobian_frob_sq(const Tensor& x) const;

  // Parameters recorded as tape leaves, in layer order (W0, b0, W1, b1, ...).
  struct OnTape {
    std::vector<Tape::Id> weights;
    std::vector<Tape::Id> biases;
  };
  OnTape attach(Tape& tape) const;
  Tape::Id forward_on(Tape& tape, const OnTape& params, Tape::Id x) const;

  // SGD step from a backward() result. Requires train mode.
  void apply_gradient_update(const OnTape& params, const Tape::GradientMap& grads, double lr);

  std::string serialize() const;
  static MlpModel deserialize(const std::string& text);
  void save(const std::string& path) const;
  static MlpModel load(const std::string& path);

  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  std::size_t input_dim() const { return layer_dims_.front(); }
  std::size_t num_classes() const { return layer_dims_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<LayerParams>& layers() const { return layers_; }
  Activation activation() const { return activation_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  // Smoothing scale the model was trained with; 0 means none.
  double sigma() const { return sigma_; }
  void set_sigma(double s) { sigma_ = s; }

 private:
  void check_input(const Tensor& x) const;

  std::vector<std::size_t> layer_dims_;
  std::vector<LayerParams> layers_;
  Activation activation_ = Activation::kRelu;
  Mode mode_ = Mode::kEval;
  double sigma_ = 0.0;
};

}  // namespace heatsmooth
