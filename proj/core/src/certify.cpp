#include "heatsmooth/certify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

int vote(const MlpModel& model, const Tensor& x, double sigma, Rng& rng) {
  Tensor noisy = x;
  if (sigma > 0.0) {
    for (std::size_t j = 0; j < noisy.size(); ++j) noisy[j] += sigma * rng.normal();
  }
  return model.predict(noisy);
}

CertificationRecord finish_from_votes(int candidate, int hits, std::size_t example_id,
                                      const CertifyConfig& cfg, CertifyMode mode) {
  CertificationRecord rec;
  rec.example_id = example_id;
  rec.mode = mode;
  const double pa = clopper_pearson_lower(hits, cfg.n, cfg.alpha);
  rec.pa_lower = pa;
  if (pa <= 0.5) {
    rec.abstain = true;
    rec.predicted = 0;
    rec.radius = 0.0;
  } else {
    rec.abstain = false;
    rec.predicted = candidate;
    rec.radius = cfg.sigma * normal_quantile(pa);
  }
  return rec;
}

}  // namespace

std::string certify_mode_name(CertifyMode m) {
  switch (m) {
    case CertifyMode::kStochasticMc:
      return "stochastic_mc";
    case CertifyMode::kDeterministicFixedClass:
      return "deterministic_fixed_class";
    case CertifyMode::kLBound:
      return "lbound";
  }
  return "stochastic_mc";
}

CertifyMode certify_mode_from_name(const std::string& name) {
  if (name == "stochastic_mc") return CertifyMode::kStochasticMc;
  if (name == "deterministic_fixed_class") return CertifyMode::kDeterministicFixedClass;
  if (name == "lbound") return CertifyMode::kLBound;
  throw ConfigError("unknown certify mode '" + name +
                    "' (expected stochastic_mc, deterministic_fixed_class or lbound)");
}

void CertifyConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("certify.sigma must be > 0");
  if (n0 < 1) throw ConfigError("certify.n0 must be >= 1");
  if (n < n0) throw ConfigError("certify.n must be >= certify.n0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("certify.alpha must be in (0, 1)");
  if (lbound_rank < 1) throw ConfigError("certify.lbound_rank must be >= 1");
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * beta_cont_frac(a, b, x) / a;
  }
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   beta_cont_frac(b, a, 1.0 - x) / b;
}

double clopper_pearson_lower(int successes, int n, double alpha) {
  if (n < 1) throw ConfigError("clopper_pearson_lower: n must be >= 1");
  if (successes < 0 || successes > n) {
    throw ConfigError("clopper_pearson_lower: successes outside [0, n]");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("clopper_pearson_lower: alpha must be in (0, 1)");
  }
  if (successes == 0) return 0.0;

  // P(Bin(n, p) >= k) = I_p(k, n - k + 1); solve it equal to alpha.
  const double a = static_cast<double>(successes);
  const double b = static_cast<double>(n - successes + 1);
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200 && (hi - lo) > 1e-15; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (incomplete_beta(a, b, mid) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("normal_quantile: q must be in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int iter = 0; iter < 300 && (hi - lo) > 1e-13; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double lbound_radius_from_probs(std::span<const double> probs, double sigma, int rank) {
  if (rank < 1 || static_cast<std::size_t>(rank) >= probs.size()) {
    throw ConfigError("lbound rank must satisfy 1 <= k < Nc");
  }
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const double gap = sorted[static_cast<std::size_t>(rank - 1)] -
                     sorted[static_cast<std::size_t>(rank)];
  return sigma * std::sqrt(3.14159265358979323846 / 2.0) * gap;
}

double lbound_radius(const MlpModel& model, const Tensor& x, double sigma, int rank) {
  const Tensor logits = model.forward(x);
  const std::vector<double> probs = softmax_stable(logits.values());
  return lbound_radius_from_probs(probs, sigma, rank);
}

CertificationRecord certify_stochastic(const MlpModel& model, const Tensor& x,
                                       std::size_t example_id, const CertifyConfig& cfg,
                                       Rng& rng) {
  cfg.validate();
  std::vector<int> counts(model.num_classes(), 0);
  for (int i = 0; i < cfg.n0; ++i) counts[static_cast<std::size_t>(vote(model, x, cfg.sigma, rng))]++;
  int candidate = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[static_cast<std::size_t>(candidate)]) candidate = static_cast<int>(c);
  }
  int hits = 0;
  for (int i = 0; i < cfg.n; ++i) {
    if (vote(model, x, cfg.sigma, rng) == candidate) ++hits;
  }
  return finish_from_votes(candidate, hits, example_id, cfg, CertifyMode::kStochasticMc);
}

CertificationRecord certify_deterministic(const MlpModel& model, const Tensor& x,
                                          std::size_t example_id, const CertifyConfig& cfg,
                                          Rng& rng) {
  cfg.validate();
  const int candidate = model.predict(x);
  int hits = 0;
  for (int i = 0; i < cfg.n; ++i) {
    if (vote(model, x, cfg.sigma, rng) == candidate) ++hits;
  }
  return finish_from_votes(candidate, hits, example_id, cfg,
                           CertifyMode::kDeterministicFixedClass);
}

CertificationRecord certify_lbound(const MlpModel& model, const Tensor& x, std::size_t example_id,
                                   const CertifyConfig& cfg) {
  cfg.validate();
  CertificationRecord rec;
  rec.example_id = example_id;
  rec.mode = CertifyMode::kLBound;
  rec.abstain = false;
  rec.predicted = model.predict(x);
  rec.radius = lbound_radius(model, x, cfg.sigma, cfg.lbound_rank);
  return rec;
}

std::vector<CurvePoint> certified_accuracy_curve(const std::vector<CertificationRecord>& records,
                                                 const std::vector<int>& labels,
                                                 std::span<const double> radii) {
  if (records.size() != labels.size()) {
    throw DataError("certified_accuracy_curve: " + std::to_string(records.size()) +
                    " records vs " + std::to_string(labels.size()) + " labels");
  }
  std::vector<CurvePoint> curve;
  curve.reserve(radii.size());
  for (double r : radii) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      if (!rec.abstain && rec.predicted == labels[i] && rec.radius >= r) ++hits;
    }
    const double acc =
        records.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(records.size());
    if (!curve.empty() && curve.back().radius < r && acc > curve.back().accuracy + 1e-15) {
      throw NumericError("certified-accuracy curve not monotone");
    }
    curve.push_back({r, acc});
  }
  return curve;
}

std::string certification_records_csv(const std::vector<CertificationRecord>& records) {
  std::ostringstream os;
  os << "example_id,mode,predicted,abstain,pA_lower,radius\n";
  for (const auto& rec : records) {
    os << rec.example_id << "," << certify_mode_name(rec.mode) << ",";
    if (rec.abstain) {
      os << "ABSTAIN";
    } else {
      os << rec.predicted;
    }
    os << "," << (rec.abstain ? 1 : 0) << ",";
    if (rec.pa_lower.has_value()) os << fmt_g17(*rec.pa_lower);
    os << "," << fmt_g17(rec.radius) << "\n";
  }
  return os.str();
}

std::vector<CertificationRecord> certification_records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty certification records");
  std::vector<CertificationRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f_id, f_mode, f_pred, f_abstain, f_pa, f_radius;
    if (!std::getline(ss, f_id, ',') || !std::getline(ss, f_mode, ',') ||
        !std::getline(ss, f_pred, ',') || !std::getline(ss, f_abstain, ',') ||
        !std::getline(ss, f_pa, ',') || !std::getline(ss, f_radius)) {
      throw DataError("certification records: malformed line " + std::to_string(line_no));
    }
    CertificationRecord rec;
    rec.example_id = std::stoull(f_id);
    rec.mode = certify_mode_from_name(f_mode);
    rec.abstain = f_abstain == "1";
    rec.predicted = rec.abstain ? 0 : std::stoi(f_pred);
    if (!f_pa.empty()) rec.pa_lower = std::stod(f_pa);
    rec.radius = std::stod(f_radius);
    out.push_back(rec);
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "radius,accuracy\n";
  for (const auto& p : curve) os << fmt_g17(p.radius) << "," << fmt_g17(p.accuracy) << "\n";
  return os.str();
}

}  // namespace heatsmooth
