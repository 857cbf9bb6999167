#include "heatsmooth/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "heatsmooth/certify.hpp"
#include "heatsmooth/errors.hpp"
#include "heatsmooth/tape.hpp"

namespace heatsmooth {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr double kZeroGradTol = 1e-14;

void project_ball(Tensor& delta, double epsilon) {
  const double norm = l2_norm(delta.values());
  if (norm > epsilon) {
    const double s = epsilon / norm;
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= s;
  }
}

Tensor add_vec(const Tensor& x, const Tensor& d) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
  return out;
}

}  // namespace

void AttackConfig::validate() const {
  if (!(alpha_step > 0.0)) throw ConfigError("attack.alpha_step must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("attack.epsilon must be > 0");
  if (max_steps < 1) throw ConfigError("attack.max_steps must be >= 1");
  if (n_noise < 0) throw ConfigError("attack.n_noise must be >= 0");
  if (sigma < 0.0) throw ConfigError("attack.sigma must be >= 0");
  if (top_k < 1) throw ConfigError("attack.top_k must be >= 1");
  if (ddn_gamma < 0.0) throw ConfigError("attack.ddn_gamma must be >= 0");
  if (!(ddn_init_radius > 0.0)) throw ConfigError("attack.ddn_init_radius must be > 0");
}

Tensor MlpTarget::loss_input_grad(const Tensor& x, int y) const {
  Tape tape;
  const Tape::Id xid = tape.leaf(x, "x");
  const MlpModel::OnTape params = model_.attach(tape);
  const Tape::Id logits = model_.forward_on(tape, params, xid);
  const Tape::Id loss = cross_entropy_with_logits(tape, logits, y);
  auto grads = tape.backward(loss);
  return std::move(grads.at(xid));
}

bool misclassified(std::span<const double> logits, int y, const AttackConfig& cfg) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size()) {
    throw DataError("attack: class index out of range");
  }
  if (cfg.success == SuccessCriterion::kTop1) {
    return argmax_lowest_tie(logits) != y;
  }
  // Rank of y with ties broken toward lower index.
  std::size_t rank = 0;
  const double zy = logits[static_cast<std::size_t>(y)];
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (static_cast<int>(j) == y) continue;
    if (logits[j] > zy || (logits[j] == zy && static_cast<int>(j) < y)) ++rank;
  }
  return rank >= static_cast<std::size_t>(cfg.top_k);
}

Tensor pgd_step(const AttackTarget& target, const Tensor& x, const Tensor& delta, int y,
                const AttackConfig& cfg, Rng& rng, bool* stationary) {
  cfg.validate();
  Tensor grad = Tensor::zeros({x.size()});
  if (cfg.n_noise == 0) {
    grad = target.loss_input_grad(add_vec(x, delta), y);
  } else {
    for (int i = 0; i < cfg.n_noise; ++i) {
      Tensor noisy = add_vec(x, delta);
      for (std::size_t j = 0; j < noisy.size(); ++j) noisy[j] += cfg.sigma * rng.normal();
      const Tensor g = target.loss_input_grad(noisy, y);
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += g[j];
    }
  }
  const double norm = l2_norm(grad.values());
  if (norm < kZeroGradTol) {
    if (stationary) *stationary = true;
    return delta;
  }
  Tensor next = delta;
  const double s = cfg.alpha_step / norm;
  for (std::size_t j = 0; j < next.size(); ++j) next[j] += s * grad[j];
  project_ball(next, cfg.epsilon);
  return next;
}

AttackRecord pgd_attack(const AttackTarget& target, const Tensor& x, int y,
                        std::size_t example_id, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  AttackRecord rec;
  rec.example_id = example_id;
  rec.attack = "pgd";

  if (misclassified(target.logits(x).values(), y, cfg)) {
    rec.success = true;
    rec.norm = 0.0;
    rec.steps = 0;
    return rec;
  }

  Tensor delta = Tensor::zeros({x.size()});
  for (int t = 0; t < cfg.max_steps; ++t) {
    bool stationary = false;
    Tensor next = pgd_step(target, x, delta, y, cfg, rng, &stationary);
    if (stationary) {
      rec.stationary = true;
      if (cfg.n_noise == 0) break;  // deterministic gradient cannot unstick
      rec.steps = t + 1;
      continue;
    }
    delta = std::move(next);
    rec.steps = t + 1;
    if (misclassified(target.logits(add_vec(x, delta)).values(), y, cfg)) {
      rec.success = true;
      rec.norm = l2_norm(delta.values());
      return rec;
    }
  }
  rec.success = false;
  rec.norm = l2_norm(delta.values());
  return rec;
}

AttackRecord ddn_attack(const AttackTarget& target, const Tensor& x, int y,
                        std::size_t example_id, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  AttackRecord rec;
  rec.example_id = example_id;
  rec.attack = "ddn";

  if (misclassified(target.logits(x).values(), y, cfg)) {
    rec.success = true;
    rec.norm = 0.0;
    rec.steps = 0;
    return rec;
  }

  Tensor delta = Tensor::zeros({x.size()});
  double radius = std::min(cfg.ddn_init_radius, cfg.epsilon);
  double best = std::numeric_limits<double>::infinity();

  for (int t = 0; t < cfg.max_steps; ++t) {
    rec.steps = t + 1;
    // Cosine-decayed step sets the direction only; the radius sets the norm.
    const double alpha_t =
        cfg.alpha_step * 0.5 *
        (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(t) /
                        static_cast<double>(cfg.max_steps)));
    bool stationary = false;
    AttackConfig step_cfg = cfg;
    step_cfg.alpha_step = std::max(alpha_t, 1e-12);
    step_cfg.epsilon = std::numeric_limits<double>::max();  // norm handled below
    delta = pgd_step(target, x, delta, y, step_cfg, rng, &stationary);
    if (stationary) rec.stationary = true;

    const double dnorm = l2_norm(delta.values());
    if (dnorm > kZeroGradTol) {
      const double s = radius / dnorm;
      for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= s;
    }

    const bool adv = misclassified(target.logits(add_vec(x, delta)).values(), y, cfg);
    if (adv) {
      best = std::min(best, l2_norm(delta.values()));
      radius *= (1.0 - cfg.ddn_gamma);
    } else {
      radius *= (1.0 + cfg.ddn_gamma);
    }
    radius = std::min(radius, cfg.epsilon);
    if (stationary && cfg.n_noise == 0 && !adv) break;
  }

  if (std::isfinite(best)) {
    rec.success = true;
    rec.norm = best;
  } else {
    rec.success = false;
    rec.norm = l2_norm(delta.values());
  }
  return rec;
}

SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) throw DataError("summary over empty value list");
  SummaryStats out;
  out.count = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  out.median = (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return out;
}

SummaryStats lbound_table(const MlpModel& model, const Dataset& data, double sigma, int rank) {
  if (data.size() == 0) throw DataError("lbound_table: empty dataset");
  std::vector<double> radii;
  radii.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    radii.push_back(lbound_radius(model, data.inputs.row(i), sigma, rank));
  }
  return summarize(std::move(radii));
}

std::vector<std::pair<double, double>> attack_curve(const std::vector<AttackRecord>& records,
                                                    std::span<const double> norms) {
  if (records.empty()) throw DataError("attack_curve: no records");
  std::vector<std::pair<double, double>> curve;
  curve.reserve(norms.size());
  for (double threshold : norms) {
    std::size_t hits = 0;
    for (const auto& rec : records) {
      if (rec.success && rec.norm <= threshold) ++hits;
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(records.size());
    if (!curve.empty() && curve.back().first < threshold &&
        frac < curve.back().second - 1e-15) {
      throw NumericError("attack curve not monotone");
    }
    curve.emplace_back(threshold, frac);
  }
  return curve;
}

std::string attack_records_csv(const std::vector<AttackRecord>& records) {
  std::ostringstream os;
  os << "example_id,attack,success,norm,steps\n";
  for (const auto& rec : records) {
    os << rec.example_id << "," << rec.attack << "," << (rec.success ? 1 : 0) << ","
       << fmt_g17(rec.norm) << "," << rec.steps << "\n";
  }
  return os.str();
}

std::vector<AttackRecord> attack_records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty attack records");
  std::vector<AttackRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f_id, f_attack, f_success, f_norm, f_steps;
    if (!std::getline(ss, f_id, ',') || !std::getline(ss, f_attack, ',') ||
        !std::getline(ss, f_success, ',') || !std::getline(ss, f_norm, ',') ||
        !std::getline(ss, f_steps)) {
      throw DataError("attack records: malformed line " + std::to_string(line_no));
    }
    AttackRecord rec;
    rec.example_id = std::stoull(f_id);
    rec.attack = f_attack;
    rec.success = f_success == "1";
    rec.norm = std::stod(f_norm);
    rec.steps = std::stoi(f_steps);
    out.push_back(rec);
  }
  return out;
}

std::string attack_curve_csv(const std::vector<std::pair<double, double>>& curve) {
  std::ostringstream os;
  os << "norm,fraction\n";
  for (const auto& p : curve) os << fmt_g17(p.first) << "," << fmt_g17(p.second) << "\n";
  return os.str();
}

}  // namespace heatsmooth
