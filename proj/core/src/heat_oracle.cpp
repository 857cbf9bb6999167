#include "heatsmooth/heat_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

namespace {
constexpr double kPadSigmas = 6.0;
}

GridFunction GridFunction::sample_1d(double lo, double hi, std::size_t n,
                                     const std::function<double(double)>& f) {
  if (n < 3) throw ConfigError("grid resolution must be >= 3");
  if (!(hi > lo)) throw ConfigError("grid bounds must satisfy lo < hi");
  GridFunction g;
  g.dim = 1;
  g.bounds[0] = {lo, hi};
  g.resolution = {n, 1};
  std::vector<double> v(n);
  const double dx = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(lo + dx * static_cast<double>(i));
  g.values = Tensor::vector(std::move(v));
  g.validate();
  return g;
}

GridFunction GridFunction::sample_2d(std::array<double, 2> xb, std::array<double, 2> yb,
                                     std::size_t nx, std::size_t ny,
                                     const std::function<double(double, double)>& f) {
  if (nx < 3 || ny < 3) throw ConfigError("grid resolution must be >= 3");
  if (!(xb[1] > xb[0]) || !(yb[1] > yb[0])) throw ConfigError("grid bounds must satisfy lo < hi");
  GridFunction g;
  g.dim = 2;
  g.bounds[0] = xb;
  g.bounds[1] = yb;
  g.resolution = {nx, ny};
  std::vector<double> v(nx * ny);
  const double dx = (xb[1] - xb[0]) / static_cast<double>(nx - 1);
  const double dy = (yb[1] - yb[0]) / static_cast<double>(ny - 1);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      v[i * ny + j] = f(xb[0] + dx * static_cast<double>(i), yb[0] + dy * static_cast<double>(j));
    }
  }
  g.values = Tensor::matrix(nx, ny, std::move(v));
  g.validate();
  return g;
}

double GridFunction::spacing(int axis) const {
  return (bounds[static_cast<std::size_t>(axis)][1] - bounds[static_cast<std::size_t>(axis)][0]) /
         static_cast<double>(resolution[static_cast<std::size_t>(axis)] - 1);
}

double GridFunction::coord(int axis, std::size_t i) const {
  return bounds[static_cast<std::size_t>(axis)][0] + spacing(axis) * static_cast<double>(i);
}

void GridFunction::validate() const {
  if (dim != 1 && dim != 2) throw ConfigError("grid dim must be 1 or 2");
  for (int a = 0; a < dim; ++a) {
    if (resolution[static_cast<std::size_t>(a)] < 3) {
      throw ConfigError("grid resolution must be >= 3 on every axis");
    }
  }
  values.ensure_finite("grid values");
}

std::vector<std::size_t> GridFunction::interior_flat_indices(double margin) const {
  std::vector<std::size_t> out;
  if (dim == 1) {
    for (std::size_t i = 0; i < resolution[0]; ++i) {
      const double x = coord(0, i);
      if (x >= bounds[0][0] + margin && x <= bounds[0][1] - margin) out.push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < resolution[0]; ++i) {
      const double x = coord(0, i);
      const bool xin = x >= bounds[0][0] + margin && x <= bounds[0][1] - margin;
      for (std::size_t j = 0; j < resolution[1]; ++j) {
        const double y = coord(1, j);
        if (xin && y >= bounds[1][0] + margin && y <= bounds[1][1] - margin) {
          out.push_back(i * resolution[1] + j);
        }
      }
    }
  }
  return out;
}

McEstimate gaussian_convolve_mc(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, double sigma, std::size_t n_samples,
                                Rng& rng) {
  if (n_samples < 1) throw ConfigError("mc samples must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  std::vector<double> point(x.begin(), x.end());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t j = 0; j < point.size(); ++j) point[j] = x[j] + sigma * rng.normal();
    const double v = f(point);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  McEstimate out;
  out.estimate = mean;
  out.std_error = n_samples > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return out;
}

McEstimate gaussian_convolve_mc_1d(const std::function<double(double)>& f, double x, double sigma,
                                   std::size_t n_samples, Rng& rng) {
  return gaussian_convolve_mc(
      [&f](std::span<const double> p) { return f(p[0]); }, std::span<const double>(&x, 1), sigma,
      n_samples, rng);
}

namespace {

// Sampled Gaussian kernel with trapezoid weights, normalized to unit mass.
std::vector<double> discrete_kernel(double sigma, double dx, std::size_t half) {
  std::vector<double> k(2 * half + 1);
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double u = (static_cast<double>(i) - static_cast<double>(half)) * dx;
    k[i] = std::exp(-u * u / (2.0 * sigma * sigma));
  }
  k.front() *= 0.5;
  k.back() *= 0.5;
  double mass = 0.0;
  for (double v : k) mass += v;
  for (double& v : k) v /= mass;
  return k;
}

std::vector<double> convolve_axis(const std::vector<double>& v, const std::vector<double>& k,
                                  std::size_t half) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(v.size());
  std::vector<double> out(v.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::ptrdiff_t m = -static_cast<std::ptrdiff_t>(half);
         m <= static_cast<std::ptrdiff_t>(half); ++m) {
      std::ptrdiff_t j = i + m;
      j = std::clamp<std::ptrdiff_t>(j, 0, n - 1);  // edge clamp; interior unaffected
      s += k[static_cast<std::size_t>(m + static_cast<std::ptrdiff_t>(half))] *
           v[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

}  // namespace

GridFunction gaussian_convolve_quadrature(const GridFunction& f, double sigma) {
  f.validate();
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  for (int a = 0; a < f.dim; ++a) {
    const double extent = f.bounds[static_cast<std::size_t>(a)][1] -
                          f.bounds[static_cast<std::size_t>(a)][0];
    if (extent < 2.0 * kPadSigmas * sigma) {
      std::ostringstream os;
      os << "grid extent " << extent << " on axis " << a << " is too small: need padding of "
         << kPadSigmas * sigma << " per side (" << 2.0 * kPadSigmas * sigma << " total)";
      throw ConfigError(os.str());
    }
  }

  GridFunction out = f;
  if (f.dim == 1) {
    const double dx = f.spacing(0);
    const std::size_t half = static_cast<std::size_t>(std::ceil(kPadSigmas * sigma / dx));
    const auto k = discrete_kernel(sigma, dx, half);
    std::vector<double> v(f.values.values().begin(), f.values.values().end());
    out.values = Tensor::vector(convolve_axis(v, k, half));
  } else {
    // Separable kernel: convolve rows then columns.
    const std::size_t nx = f.resolution[0], ny = f.resolution[1];
    std::vector<double> buf(f.values.values().begin(), f.values.values().end());
    {
      const double dy = f.spacing(1);
      const std::size_t half = static_cast<std::size_t>(std::ceil(kPadSigmas * sigma / dy));
      const auto k = discrete_kernel(sigma, dy, half);
      for (std::size_t i = 0; i < nx; ++i) {
        std::vector<double> row(buf.begin() + static_cast<std::ptrdiff_t>(i * ny),
                                buf.begin() + static_cast<std::ptrdiff_t>((i + 1) * ny));
        row = convolve_axis(row, k, half);
        std::copy(row.begin(), row.end(), buf.begin() + static_cast<std::ptrdiff_t>(i * ny));
      }
    }
    {
      const double dx = f.spacing(0);
      const std::size_t half = static_cast<std::size_t>(std::ceil(kPadSigmas * sigma / dx));
      const auto k = discrete_kernel(sigma, dx, half);
      std::vector<double> col(nx);
      for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) col[i] = buf[i * ny + j];
        col = convolve_axis(col, k, half);
        for (std::size_t i = 0; i < nx; ++i) buf[i * ny + j] = col[i];
      }
    }
    out.values = Tensor::matrix(nx, ny, std::move(buf));
  }
  return out;
}

std::size_t heat_min_stable_steps(const GridFunction& f0, double sigma, double t_final) {
  double inv_sq = 0.0;
  for (int a = 0; a < f0.dim; ++a) {
    const double dx = f0.spacing(a);
    inv_sq += 1.0 / (dx * dx);
  }
  // Stability: (sigma^2/2) dt sum_a dx_a^-2 <= 1/2.
  const double dt_max = 1.0 / (sigma * sigma * inv_sq);
  return static_cast<std::size_t>(std::ceil(t_final / dt_max - 1e-12));
}

GridFunction heat_solve_fd(const GridFunction& f0, double sigma, double t_final,
                           std::size_t n_steps, BoundaryRule boundary) {
  f0.validate();
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  if (!(t_final > 0.0)) throw ConfigError("t_final must be > 0");

  const std::size_t min_steps = heat_min_stable_steps(f0, sigma, t_final);
  if (n_steps == 0) n_steps = min_steps;
  if (n_steps < min_steps) {
    std::ostringstream os;
    os << "explicit scheme unstable with " << n_steps << " steps; need at least " << min_steps;
    throw ConfigError(os.str());
  }

  const double dt = t_final / static_cast<double>(n_steps);
  const double diff = sigma * sigma / 2.0;

  GridFunction out = f0;
  if (f0.dim == 1) {
    const std::size_t n = f0.resolution[0];
    const double r = diff * dt / (f0.spacing(0) * f0.spacing(0));
    std::vector<double> u(f0.values.values().begin(), f0.values.values().end());
    std::vector<double> next(n);
    for (std::size_t s = 0; s < n_steps; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t il, ir;
        if (boundary == BoundaryRule::kPeriodic) {
          il = (i + n - 1) % n;
          ir = (i + 1) % n;
        } else {
          if (i == 0 || i == n - 1) {
            next[i] = u[i];  // clamped ends
            continue;
          }
          il = i - 1;
          ir = i + 1;
        }
        next[i] = u[i] + r * (u[il] - 2.0 * u[i] + u[ir]);
      }
      std::swap(u, next);
    }
    out.values = Tensor::vector(std::move(u));
  } else {
    const std::size_t nx = f0.resolution[0], ny = f0.resolution[1];
    const double rx = diff * dt / (f0.spacing(0) * f0.spacing(0));
    const double ry = diff * dt / (f0.spacing(1) * f0.spacing(1));
    std::vector<double> u(f0.values.values().begin(), f0.values.values().end());
    std::vector<double> next(u.size());
    for (std::size_t s = 0; s < n_steps; ++s) {
      for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
          const std::size_t idx = i * ny + j;
          if (boundary == BoundaryRule::kClampEnds &&
              (i == 0 || j == 0 || i == nx - 1 || j == ny - 1)) {
            next[idx] = u[idx];
            continue;
          }
          const std::size_t iw = (i + nx - 1) % nx, ie = (i + 1) % nx;
          const std::size_t js = (j + ny - 1) % ny, jn = (j + 1) % ny;
          next[idx] = u[idx] + rx * (u[iw * ny + j] - 2.0 * u[idx] + u[ie * ny + j]) +
                      ry * (u[i * ny + js] - 2.0 * u[idx] + u[i * ny + jn]);
        }
      }
      std::swap(u, next);
    }
    out.values = Tensor::matrix(nx, ny, std::move(u));
  }
  return out;
}

std::string EquivalenceReport::to_text() const {
  std::ostringstream os;
  os << "== " << label << "\n";
  os << "  sup |fd - quadrature|  (interior): " << sup_fd_vs_quad << "\n";
  os << "  mean |fd - quadrature| (interior): " << mean_fd_vs_quad << "\n";
  if (sup_fd_vs_analytic >= 0.0) {
    os << "  sup |fd - analytic|    (interior): " << sup_fd_vs_analytic << "\n";
    os << "  sup |quad - analytic|  (interior): " << sup_quad_vs_analytic << "\n";
  }
  os << "  mc agreement: " << mc_points_within_gate << "/" << mc_points_checked
     << " points within gate\n";
  os << "  result: " << (pass ? "PASS" : "FAIL") << "\n";
  return os.str();
}

EquivalenceReport equivalence_report(const GridFunction& f0, double sigma,
                                     const std::function<double(double)>& f_callable,
                                     const std::function<double(double)>& analytic,
                                     const OracleCheckConfig& cfg, const std::string& label) {
  if (f0.dim != 1) throw ConfigError("equivalence_report handles 1D grids");
  EquivalenceReport rep;
  rep.label = label;

  const GridFunction quad = gaussian_convolve_quadrature(f0, sigma);
  const GridFunction fd = heat_solve_fd(f0, sigma, 1.0, 0);

  const auto interior = f0.interior_flat_indices(kPadSigmas * sigma);
  if (interior.empty()) throw ConfigError("no interior points; widen the grid");

  double sup_fq = 0.0, sum_fq = 0.0, sup_fa = 0.0, sup_qa = 0.0;
  for (std::size_t idx : interior) {
    const double d = std::fabs(fd.values[idx] - quad.values[idx]);
    sup_fq = std::max(sup_fq, d);
    sum_fq += d;
    if (analytic) {
      const double ref = analytic(f0.coord(0, idx));
      sup_fa = std::max(sup_fa, std::fabs(fd.values[idx] - ref));
      sup_qa = std::max(sup_qa, std::fabs(quad.values[idx] - ref));
    }
  }
  rep.sup_fd_vs_quad = sup_fq;
  rep.mean_fd_vs_quad = sum_fq / static_cast<double>(interior.size());
  if (analytic) {
    rep.sup_fd_vs_analytic = sup_fa;
    rep.sup_quad_vs_analytic = sup_qa;
  }

  // Monte Carlo spot checks against the quadrature values, gated by SE.
  Rng rng = Rng::stream(cfg.seed, {0x6f7261636cULL});
  const std::size_t stride = std::max<std::size_t>(1, interior.size() / cfg.mc_points);
  for (std::size_t p = 0; p < cfg.mc_points && p * stride < interior.size(); ++p) {
    const std::size_t idx = interior[p * stride];
    const double x = f0.coord(0, idx);
    const McEstimate mc = gaussian_convolve_mc_1d(f_callable, x, sigma, cfg.mc_samples, rng);
    ++rep.mc_points_checked;
    const double gate = cfg.mc_gate_sigmas * std::max(mc.std_error, 1e-12);
    if (std::fabs(mc.estimate - quad.values[idx]) <= gate) ++rep.mc_points_within_gate;
  }

  rep.pass = rep.sup_fd_vs_quad <= cfg.sup_tol &&
             (rep.sup_fd_vs_analytic < 0.0 || rep.sup_fd_vs_analytic <= cfg.sup_tol) &&
             rep.mc_points_within_gate == rep.mc_points_checked;
  return rep;
}

SmoothedProbFunction1d::SmoothedProbFunction1d(
    double lo, double hi, std::size_t resolution, double sigma,
    std::vector<std::function<double(double)>> class_probs)
    : lo_(lo), hi_(hi), sigma_(sigma) {
  if (resolution < 3) throw ConfigError("resolution must be >= 3");
  if (class_probs.size() < 2) throw ConfigError("need at least 2 classes");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  if (hi - lo < 2.0 * kPadSigmas * sigma) {
    throw ConfigError("domain too narrow for the required 6-sigma padding");
  }
  dx_ = (hi - lo) / static_cast<double>(resolution - 1);
  for (const auto& f : class_probs) {
    std::vector<double> s(resolution);
    for (std::size_t i = 0; i < resolution; ++i) {
      s[i] = f(lo + dx_ * static_cast<double>(i));
    }
    samples_.push_back(std::move(s));
  }
}

SmoothedProbFunction1d SmoothedProbFunction1d::from_model(const MlpModel& model, double lo,
                                                          double hi, std::size_t resolution,
                                                          double sigma) {
  if (model.input_dim() != 1) throw ConfigError("from_model requires a 1D-input model");
  std::vector<std::function<double(double)>> fs;
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    fs.push_back([&model, c](double x) {
      const Tensor logits = model.forward(Tensor::vector({x}));
      return softmax_stable(logits.values())[c];
    });
  }
  return SmoothedProbFunction1d(lo, hi, resolution, sigma, std::move(fs));
}

std::vector<double> SmoothedProbFunction1d::probs(double x) const {
  // Quadrature of f(t) k(x - t) dt over the sample grid; kernel renormalized
  // to unit discrete mass at this x.
  const std::size_t n = samples_[0].size();
  std::vector<double> out(samples_.size(), 0.0);
  double mass = 0.0;
  const double inv2s2 = 1.0 / (2.0 * sigma_ * sigma_);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo_ + dx_ * static_cast<double>(i);
    const double u = x - t;
    if (std::fabs(u) > 8.0 * sigma_) continue;
    const double k = std::exp(-u * u * inv2s2);
    mass += k;
    for (std::size_t c = 0; c < samples_.size(); ++c) out[c] += k * samples_[c][i];
  }
  for (double& v : out) v /= mass;
  return out;
}

std::vector<double> SmoothedProbFunction1d::probs_grad(double x) const {
  // d/dx of the unnormalized quadrature; the mass term is constant to within
  // the tail truncation on interior points.
  const std::size_t n = samples_[0].size();
  std::vector<double> out(samples_.size(), 0.0);
  double mass = 0.0;
  const double inv2s2 = 1.0 / (2.0 * sigma_ * sigma_);
  const double invs2 = 1.0 / (sigma_ * sigma_);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo_ + dx_ * static_cast<double>(i);
    const double u = x - t;
    if (std::fabs(u) > 8.0 * sigma_) continue;
    const double k = std::exp(-u * u * inv2s2);
    mass += k;
    const double kp = -u * invs2 * k;
    for (std::size_t c = 0; c < samples_.size(); ++c) out[c] += kp * samples_[c][i];
  }
  for (double& v : out) v /= mass;
  return out;
}

int SmoothedProbFunction1d::predict(double x) const {
  const std::vector<double> p = probs(x);
  return argmax_lowest_tie(p);
}

}  // namespace heatsmooth
