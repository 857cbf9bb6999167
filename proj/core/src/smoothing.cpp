#include "heatsmooth/smoothing.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "heatsmooth/errors.hpp"

namespace heatsmooth {

std::string variant_name(SmoothVariant v) {
  switch (v) {
    case SmoothVariant::kHeatIterative:
      return "heat_iterative";
    case SmoothVariant::kNoisyDistill:
      return "noisy_distill";
    case SmoothVariant::kNoiseBaseline:
      return "noise_baseline";
  }
  return "heat_iterative";
}

SmoothVariant variant_from_name(const std::string& name) {
  if (name == "heat_iterative") return SmoothVariant::kHeatIterative;
  if (name == "noisy_distill") return SmoothVariant::kNoisyDistill;
  if (name == "noise_baseline") return SmoothVariant::kNoiseBaseline;
  throw ConfigError("unknown smoothing variant '" + name +
                    "' (expected heat_iterative, noisy_distill or noise_baseline)");
}

double SmoothingConfig::resolved_h() const {
  return timestep_h > 0.0 ? timestep_h : 1.0 / static_cast<double>(n_timesteps);
}

void SmoothingConfig::validate() const {
  if (!(sigma >= 0.0)) throw ConfigError("smoothing.sigma must be >= 0");
  if (n_timesteps < 1) throw ConfigError("smoothing.n_timesteps must be >= 1");
  if (timestep_h < 0.0) throw ConfigError("smoothing.timestep_h must be >= 0");
  if (epochs_per_timestep < 1) throw ConfigError("smoothing.epochs_per_timestep must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("smoothing.lr must be > 0");
  if (batch_size < 1) throw ConfigError("smoothing.batch_size must be >= 1");
  if (noise_fraction < 0.0 || noise_fraction > 1.0) {
    throw ConfigError("smoothing.noise_fraction must be in [0, 1]");
  }
  if (lr_step_every < 1) throw ConfigError("smoothing.lr_step_every must be >= 1");
  if (!(lr_step_factor > 0.0)) throw ConfigError("smoothing.lr_step_factor must be > 0");
  jl.validate();
}

std::string TrainReport::to_json() const {
  nlohmann::json doc;
  doc["epoch_mean_loss"] = epoch_mean_loss;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& t : timesteps) {
    steps.push_back({{"initial_loss", t.initial_loss}, {"final_loss", t.final_loss}});
  }
  doc["timesteps"] = std::move(steps);
  if (!config_echo.empty()) doc["config_echo"] = nlohmann::json::parse(config_echo);
  return doc.dump(2) + "\n";
}

std::string TrainReport::timing_json() const {
  nlohmann::json doc;
  doc["epoch_wall_seconds"] = epoch_wall_seconds;
  double total = 0.0;
  for (double s : epoch_wall_seconds) total += s;
  doc["total_wall_seconds"] = total;
  return doc.dump(2) + "\n";
}

namespace {

struct BatchAddress {
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
};

// Distillation loss for one minibatch. `noisy` marks examples whose student
// input (and penalty point) is x + eta; the teacher always sees clean x.
MinibatchLoss build_distill_loss(const MlpModel& student, const MlpModel& teacher,
                                 const std::vector<Tensor>& examples,
                                 const std::vector<Tensor>& student_inputs,
                                 const SmoothingConfig& cfg, double h,
                                 std::uint64_t seed, BatchAddress addr) {
  MinibatchLoss out;
  out.student_params = student.attach(out.tape);
  Tape& tape = out.tape;

  const double penalty_weight = h * cfg.sigma * cfg.sigma / 2.0;
  Tape::Id dist_acc = -1;
  Tape::Id pen_acc = -1;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Rng ex_rng = Rng::stream(seed, {addr.epoch, addr.batch, i});

    const Tensor& xin = student_inputs[i];
    const Tape::Id xid = tape.leaf(xin);
    const Tape::Id v_out = student.forward_on(tape, out.student_params, xid);

    Tensor teacher_out = teacher.forward(examples[i]);
    Tape::Id student_cmp = v_out;
    if (cfg.softmax_distance) {
      student_cmp = tape.softmax(v_out);
      teacher_out = Tensor::vector(softmax_stable(teacher_out.values()));
    }
    const Tape::Id diff = tape.sub(student_cmp, tape.leaf(std::move(teacher_out)));
    const Tape::Id dist = tape.scale(tape.dot(diff, diff), 0.5);
    dist_acc = (dist_acc < 0) ? dist : tape.add(dist_acc, dist);

    if (penalty_weight > 0.0) {
      const Tape::Id jl = jl_penalty_on_tape(tape, student, out.student_params, xin, v_out,
                                             cfg.jl, ex_rng);
      const Tape::Id pen = tape.scale(jl, penalty_weight);
      pen_acc = (pen_acc < 0) ? pen : tape.add(pen_acc, pen);
    }
  }

  const double inv_nb = 1.0 / static_cast<double>(examples.size());
  out.distance_term = tape.scale(dist_acc, inv_nb);
  if (pen_acc >= 0) {
    out.penalty_term = tape.scale(pen_acc, inv_nb);
    out.loss = tape.add(out.distance_term, out.penalty_term);
  } else {
    out.penalty_term = tape.scale(tape.leaf(Tensor::scalar(0.0)), 1.0);
    out.loss = out.distance_term;
  }
  return out;
}

double scheduled_lr(const SmoothingConfig& cfg, int epoch) {
  if (cfg.lr_schedule == LrSchedule::kFixed) return cfg.lr;
  const int drops = epoch / cfg.lr_step_every;
  return cfg.lr * std::pow(cfg.lr_step_factor, drops);
}

void guard_divergence(double loss, const SmoothingConfig& cfg, const char* where) {
  if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
    throw NumericError(std::string("training diverged in ") + where + ": loss = " +
                       std::to_string(loss));
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch,
                                                   std::uint64_t phase) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng::stream(seed, {phase, 0x65706F6368ULL, epoch});
  shuffle_indices(idx, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// Shared SGD loop over the distillation objective. `noisy_inputs` switches
// the single-pass noisy variant on; `phase` separates RNG streams between
// timesteps.
double run_distill_epochs(MlpModel& student, const MlpModel& teacher, const InputSet& data,
                          const SmoothingConfig& cfg, double h, bool noisy_inputs,
                          std::uint64_t phase, TrainReport* report) {
  const std::size_t n = data.size();
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs_per_timestep; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = scheduled_lr(cfg, epoch);
    const auto batches =
        make_batches(n, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch), phase);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch_idx = batches[b];
      std::vector<Tensor> examples;
      std::vector<Tensor> student_inputs;
      examples.reserve(batch_idx.size());
      student_inputs.reserve(batch_idx.size());

      // Exact noised share per batch, chosen by a seeded shuffle.
      std::size_t n_noisy = 0;
      std::vector<std::size_t> order(batch_idx.size());
      if (noisy_inputs) {
        n_noisy = static_cast<std::size_t>(
            std::llround(cfg.noise_fraction * static_cast<double>(batch_idx.size())));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng pick = Rng::stream(cfg.seed, {phase, 0x6e6f697379ULL,
                                          static_cast<std::uint64_t>(epoch), b});
        shuffle_indices(order, pick);
      }

      for (std::size_t i = 0; i < batch_idx.size(); ++i) {
        Tensor x = data.inputs.row(batch_idx[i]);
        Tensor xin = x;
        if (noisy_inputs) {
          bool noised = false;
          for (std::size_t k = 0; k < n_noisy; ++k) {
            if (order[k] == i) {
              noised = true;
              break;
            }
          }
          if (noised && cfg.sigma > 0.0) {
            Rng noise = Rng::stream(cfg.seed, {phase, 0x657461ULL,
                                               static_cast<std::uint64_t>(epoch), b, i});
            for (std::size_t j = 0; j < xin.size(); ++j) xin[j] += cfg.sigma * noise.normal();
          }
        }
        examples.push_back(std::move(x));
        student_inputs.push_back(std::move(xin));
      }

      MinibatchLoss mb = build_distill_loss(student, teacher, examples, student_inputs, cfg, h,
                                            cfg.seed,
                                            {phase * 1000003ULL + static_cast<std::uint64_t>(epoch), b});
      const double loss = mb.tape.value(mb.loss).scalar_value();
      guard_divergence(loss, cfg, "distillation");
      loss_sum += loss * static_cast<double>(batch_idx.size());

      auto grads = mb.tape.backward(mb.loss);
      student.apply_gradient_update(mb.student_params, grads, lr);
    }
    last_epoch_loss = loss_sum / static_cast<double>(n);
    if (report) {
      report->epoch_mean_loss.push_back(last_epoch_loss);
      const auto t1 = std::chrono::steady_clock::now();
      report->epoch_wall_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  }
  return last_epoch_loss;
}

double mean_distill_loss(const MlpModel& student, const MlpModel& teacher, const InputSet& data,
                         const SmoothingConfig& cfg, double h, std::uint64_t phase) {
  // Full-set loss with a fixed probe stream; used for before/after stats.
  const std::size_t n = data.size();
  std::vector<Tensor> examples;
  examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) examples.push_back(data.inputs.row(i));
  double total = 0.0;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    std::vector<Tensor> ex(examples.begin() + static_cast<std::ptrdiff_t>(start),
                           examples.begin() + static_cast<std::ptrdiff_t>(end));
    MinibatchLoss mb =
        build_distill_loss(student, teacher, ex, ex, cfg, h, cfg.seed, {phase, 0xe7a1ULL});
    total += mb.tape.value(mb.loss).scalar_value() * static_cast<double>(ex.size());
  }
  return total / static_cast<double>(n);
}

}  // namespace

MinibatchLoss heatsmoothing_minibatch_loss(const MlpModel& student, const MlpModel& teacher,
                                           const Tensor& batch, const SmoothingConfig& cfg,
                                           Rng& rng) {
  cfg.validate();
  if (teacher.mode() != Mode::kEval) throw NumericError("teacher must be frozen (eval mode)");
  if (batch.rank() != 2) throw ShapeError("batch must be [Nb, d_in], got " + shape_str(batch));
  std::vector<Tensor> examples;
  for (std::size_t i = 0; i < batch.rows(); ++i) examples.push_back(batch.row(i));
  // Draws come from the caller's stream; addresses are unused here.
  const std::uint64_t sub_seed = rng.next_u64();
  return build_distill_loss(student, teacher, examples, examples, cfg, 1.0, sub_seed, {0, 0});
}

MlpModel train_timestep(const MlpModel& f_k, const InputSet& data, const SmoothingConfig& cfg,
                        double h, TrainReport* report) {
  cfg.validate();
  if (data.size() == 0) throw DataError("empty training set");

  MlpModel teacher = f_k;
  teacher.set_mode(Mode::kEval);
  MlpModel student = f_k;
  student.set_mode(Mode::kTrain);

  const std::uint64_t phase = report ? static_cast<std::uint64_t>(report->timesteps.size()) : 0;
  const double initial = mean_distill_loss(student, teacher, data, cfg, h, phase);
  const double final_loss = run_distill_epochs(student, teacher, data, cfg, h, false, phase, report);
  if (report) report->timesteps.push_back({initial, final_loss});

  student.set_mode(Mode::kEval);
  student.set_sigma(cfg.sigma);
  return student;
}

MlpModel train_heatsmooth(const MlpModel& f0, const InputSet& data, const SmoothingConfig& cfg,
                          TrainReport* report) {
  cfg.validate();
  if (cfg.variant != SmoothVariant::kHeatIterative) {
    throw ConfigError("train_heatsmooth requires variant heat_iterative");
  }
  const double h = cfg.resolved_h();
  MlpModel current = f0;
  for (int k = 0; k < cfg.n_timesteps; ++k) {
    current = train_timestep(current, data, cfg, h, report);
  }
  return current;
}

MlpModel train_noisy_distill(const MlpModel& f0, const InputSet& data, const SmoothingConfig& cfg,
                             TrainReport* report) {
  cfg.validate();
  if (cfg.variant != SmoothVariant::kNoisyDistill) {
    throw ConfigError("train_noisy_distill requires variant noisy_distill");
  }
  if (data.size() == 0) throw DataError("empty training set");

  MlpModel teacher = f0;
  teacher.set_mode(Mode::kEval);
  MlpModel student = f0;
  student.set_mode(Mode::kTrain);

  // Single round; the gradient penalty keeps the sigma^2/2 weight (h = 1).
  const double h = cfg.timestep_h > 0.0 ? cfg.timestep_h : 1.0;
  const double initial = mean_distill_loss(student, teacher, data, cfg, h, 0);
  const double final_loss = run_distill_epochs(student, teacher, data, cfg, h, true, 0, report);
  if (report) report->timesteps.push_back({initial, final_loss});

  student.set_mode(Mode::kEval);
  student.set_sigma(cfg.sigma);
  return student;
}

MlpModel train_noise_baseline(const MlpModel& f0, const Dataset& data, const SmoothingConfig& cfg,
                              TrainReport* report) {
  cfg.validate();
  if (!data.labeled()) {
    throw DataError("noise-baseline training needs labels; dataset is unlabeled");
  }
  data.validate();

  MlpModel student = f0;
  student.set_mode(Mode::kTrain);
  const std::size_t n = data.size();

  double initial = 0.0;
  double final_loss = 0.0;
  for (int epoch = 0; epoch <= cfg.epochs_per_timestep; ++epoch) {
    // Epoch 0 only measures the starting loss.
    const bool update = epoch > 0;
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = scheduled_lr(cfg, epoch - 1);
    const auto batches = make_batches(n, cfg.batch_size, cfg.seed,
                                      static_cast<std::uint64_t>(epoch), 0x6365ULL);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      const MlpModel::OnTape params = student.attach(tape);
      Tape::Id acc = -1;
      for (std::size_t i = 0; i < batches[b].size(); ++i) {
        const std::size_t row = batches[b][i];
        Tensor x = data.inputs.row(row);
        if (cfg.sigma > 0.0) {
          Rng noise = Rng::stream(cfg.seed, {0x6365ULL, static_cast<std::uint64_t>(epoch), b, i});
          for (std::size_t j = 0; j < x.size(); ++j) x[j] += cfg.sigma * noise.normal();
        }
        const Tape::Id xid = tape.leaf(x);
        const Tape::Id logits = student.forward_on(tape, params, xid);
        const Tape::Id ce = cross_entropy_with_logits(tape, logits, data.labels[row]);
        acc = (acc < 0) ? ce : tape.add(acc, ce);
      }
      const Tape::Id loss = tape.scale(acc, 1.0 / static_cast<double>(batches[b].size()));
      const double loss_val = tape.value(loss).scalar_value();
      guard_divergence(loss_val, cfg, "noise-baseline");
      loss_sum += loss_val * static_cast<double>(batches[b].size());
      if (update) {
        auto grads = tape.backward(loss);
        student.apply_gradient_update(params, grads, lr);
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    if (epoch == 0) {
      initial = mean_loss;
    } else {
      final_loss = mean_loss;
      if (report) {
        report->epoch_mean_loss.push_back(mean_loss);
        const auto t1 = std::chrono::steady_clock::now();
        report->epoch_wall_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
    }
  }
  if (report) report->timesteps.push_back({initial, final_loss});

  student.set_mode(Mode::kEval);
  student.set_sigma(cfg.sigma);
  return student;
}

}  // namespace heatsmooth
