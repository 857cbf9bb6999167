#include "heatsmooth/jl.hpp"

#include <cmath>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

namespace {
constexpr double kZeroGradTol = 1e-12;
}

int JlConfig::resolved_proj_dim(std::size_t num_classes) const {
  return proj_dim > 0 ? proj_dim : static_cast<int>(num_classes);
}

void JlConfig::validate() const {
  if (kappa < 1) throw ConfigError("jl.kappa must be >= 1");
  if (!(delta_fd > 0.0)) throw ConfigError("jl.delta_fd must be > 0");
  if (proj_dim < 0) throw ConfigError("jl.proj_dim must be >= 0");
}

Tensor sample_w(int proj_dim, Rng& rng) {
  if (proj_dim < 1) throw ConfigError("jl.proj_dim must be >= 1");
  const double scale = 1.0 / std::sqrt(static_cast<double>(proj_dim));
  std::vector<double> w(static_cast<std::size_t>(proj_dim));
  for (auto& v : w) v = scale * rng.normal();
  return Tensor::vector(std::move(w));
}

Tensor hatg(const MlpModel& model, const Tensor& x, const Tensor& w) {
  Tensor g = model.input_grad_projected(x, w);
  const double norm = l2_norm(g.values());
  if (norm < kZeroGradTol) return Tensor::zeros({g.size()});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] /= norm;
  return g;
}

double grad_norm_sq_estimate(const MlpModel& model, const Tensor& x, const JlConfig& cfg,
                             Rng& rng) {
  cfg.validate();
  const int K = cfg.resolved_proj_dim(model.num_classes());
  if (static_cast<std::size_t>(K) != model.num_classes()) {
    throw ConfigError("jl.proj_dim must match the model's class count");
  }
  const Tensor fx = model.forward(x);
  double acc = 0.0;
  for (int j = 0; j < cfg.kappa; ++j) {
    const Tensor w = sample_w(K, rng);
    const Tensor g = hatg(model, x, w);
    Tensor xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) xp[i] += cfg.delta_fd * g[i];
    const Tensor fxp = model.forward(xp);
    const double fd = (dot(w.values(), fxp.values()) - dot(w.values(), fx.values())) / cfg.delta_fd;
    acc += fd * fd;
  }
  return acc * static_cast<double>(K) / static_cast<double>(cfg.kappa);
}

Tape::Id jl_penalty_on_tape(Tape& tape, const MlpModel& student, const MlpModel::OnTape& params,
                            const Tensor& x, Tape::Id clean_forward, const JlConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  const int K = cfg.resolved_proj_dim(student.num_classes());
  if (static_cast<std::size_t>(K) != student.num_classes()) {
    throw ConfigError("jl.proj_dim must match the model's class count");
  }
  Tape::Id acc = -1;
  for (int j = 0; j < cfg.kappa; ++j) {
    const Tensor w = sample_w(K, rng);
    const Tensor g = hatg(student, x, w);  // frozen probe direction
    Tensor xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) xp[i] += cfg.delta_fd * g[i];

    const Tape::Id wid = tape.leaf(w);
    const Tape::Id xpid = tape.leaf(xp);
    const Tape::Id pert_forward = student.forward_on(tape, params, xpid);
    const Tape::Id fd = tape.sub(tape.dot(wid, pert_forward), tape.dot(wid, clean_forward));
    const Tape::Id sq = tape.dot(fd, fd);
    acc = (acc < 0) ? sq : tape.add(acc, sq);
  }
  const double norm = static_cast<double>(K) /
                      (static_cast<double>(cfg.kappa) * cfg.delta_fd * cfg.delta_fd);
  return tape.scale(acc, norm);
}

}  // namespace heatsmooth
