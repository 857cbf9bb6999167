// Experiment driver: train / smooth / certify / attack / oracle-check /
// report / bench over the heatsmooth core library. Configuration is a single
// JSON document with dotted-key overrides; every run echoes its resolved
// config and writes a manifest of artifact hashes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "heatsmooth/attacks.hpp"
#include "heatsmooth/certify.hpp"
#include "heatsmooth/data.hpp"
#include "heatsmooth/errors.hpp"
#include "heatsmooth/heat_oracle.hpp"
#include "heatsmooth/io.hpp"
#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"
#include "heatsmooth/smoothing.hpp"
#include "heatsmooth/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace heatsmooth;

namespace {

json default_config() {
  return json{
      {"seed", 0},
      {"out_dir", "run"},
      {"workers", 1},
      {"data",
       {{"kind", "gen_2d_clusters"},
        {"n_points", 200},
        {"margin", 0.5},
        {"outlier_x", -0.5},
        {"path", ""},
        {"normalize", false}}},
      {"model", {{"layer_dims", {2, 64, 64, 2}}, {"activation", "relu"}}},
      {"train",
       {{"epochs", 200},
        {"lr", 0.01},
        {"batch_size", 32},
        {"sigma", 0.0},
        {"lr_schedule", "fixed"},
        {"lr_step_every", 50},
        {"lr_step_factor", 0.5}}},
      {"smoothing",
       {{"variant", "heat_iterative"},
        {"sigma", 0.25},
        {"n_timesteps", 5},
        {"timestep_h", 0.0},
        {"epochs_per_timestep", 200},
        {"lr", 0.01},
        {"lr_schedule", "fixed"},
        {"lr_step_every", 50},
        {"lr_step_factor", 0.5},
        {"batch_size", 32},
        {"noise_fraction", 0.5},
        {"softmax_distance", true},
        {"jl", {{"kappa", 10}, {"delta_fd", 0.1}, {"proj_dim", 0}}}}},
      {"certify",
       {{"mode", "stochastic_mc"},
        {"sigma", 0.25},
        {"n0", 25},
        {"n", 1000},
        {"alpha", 0.001},
        {"lbound_rank", 1},
        {"use_model_sigma", true},
        {"max_examples", 0},
        {"radius_grid", {{"start", 0.0}, {"step", 0.01}, {"count", 101}}}}},
      {"attack",
       {{"attack", "both"},
        {"alpha_step", 0.5},
        {"epsilon", 4.0},
        {"max_steps", 20},
        {"n_noise", 0},
        {"sigma", 0.0},
        {"success", "top1"},
        {"top_k", 1},
        {"ddn_gamma", 0.05},
        {"ddn_init_radius", 1.0},
        {"max_examples", 0},
        {"norms_grid", {{"start", 0.0}, {"step", 0.05}, {"count", 81}}}}},
      {"oracle",
       {{"sigma", 0.2},
        {"resolution", 2048},
        {"mc_samples", 100000},
        {"mc_points", 10},
        {"sup_tol", 0.001}}},
      {"bench", {{"n_samples", 100}, {"n_examples", 50}, {"repeats", 3}}},
  };
}

void merge_into(json& base, const json& overlay, const std::string& path) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string child = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      throw ConfigError("unknown config key '" + child + "'");
    }
    if (it->is_object() && base[it.key()].is_object()) {
      merge_into(base[it.key()], *it, child);
    } else {
      base[it.key()] = *it;
    }
  }
}

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string keypath = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json* node = &cfg;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const auto dotpos = keypath.find('.', start);
    parts.push_back(keypath.substr(start, dotpos - start));
    if (dotpos == std::string::npos) break;
    start = dotpos + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) throw ConfigError("unknown config key '" + keypath + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->contains(parts.back())) throw ConfigError("unknown config key '" + keypath + "'");

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }
  (*node)[parts.back()] = value;
}

struct CliContext {
  json cfg;
  fs::path out_dir;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> hash

  void emit(const std::string& name, const std::string& content, bool hashed = true) {
    const fs::path p = out_dir / name;
    write_file(p.string(), content);
    if (hashed) artifacts.emplace_back(name, fnv1a64_hex(content));
  }

  void write_manifest(const std::string& command) {
    json doc;
    doc["tool"] = kToolName;
    doc["version"] = kToolVersion;
    doc["command"] = command;
    doc["seed"] = cfg["seed"];
    json arts = json::object();
    for (const auto& [name, hash] : artifacts) arts[name] = hash;
    doc["artifacts"] = std::move(arts);
    write_file((out_dir / (command + "_manifest.json")).string(), doc.dump(2) + "\n");
  }

  void write_echo(const std::string& command) {
    emit("config_echo_" + command + ".json", cfg.dump(2) + "\n");
  }
};

CliContext make_context(const std::string& config_path,
                        const std::vector<std::string>& overrides, const std::string& out_flag) {
  CliContext ctx;
  ctx.cfg = default_config();
  if (!config_path.empty()) {
    json file_cfg;
    try {
      file_cfg = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path + ": " + e.what());
    }
    merge_into(ctx.cfg, file_cfg, "");
  }
  for (const auto& ov : overrides) apply_override(ctx.cfg, ov);
  if (!out_flag.empty()) ctx.cfg["out_dir"] = out_flag;
  ctx.out_dir = fs::path(ctx.cfg["out_dir"].get<std::string>());
  fs::create_directories(ctx.out_dir);
  return ctx;
}

Dataset build_dataset(const json& cfg) {
  const json& d = cfg.at("data");
  const std::string kind = d.at("kind").get<std::string>();
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  Dataset ds;
  if (kind == "gen_1d_outlier") {
    ds = gen_1d_outlier(d.at("n_points").get<std::size_t>(), d.at("outlier_x").get<double>(),
                        seed);
  } else if (kind == "gen_2d_clusters") {
    ds = gen_2d_clusters(d.at("n_points").get<std::size_t>(), d.at("margin").get<double>(), seed);
  } else if (kind == "csv") {
    const std::string path = d.at("path").get<std::string>();
    if (path.empty()) throw ConfigError("data.path must be set when data.kind is csv");
    ds = load_csv(path);
  } else {
    throw ConfigError("data.kind '" + kind +
                      "' unknown (expected gen_1d_outlier, gen_2d_clusters or csv)");
  }
  if (d.at("normalize").get<bool>()) {
    ds = normalize(ds).first;
  }
  return ds;
}

SmoothingConfig smoothing_from_json(const json& s, std::uint64_t seed) {
  SmoothingConfig cfg;
  cfg.variant = variant_from_name(s.at("variant").get<std::string>());
  cfg.sigma = s.at("sigma").get<double>();
  cfg.n_timesteps = s.at("n_timesteps").get<int>();
  cfg.timestep_h = s.at("timestep_h").get<double>();
  cfg.epochs_per_timestep = s.at("epochs_per_timestep").get<int>();
  cfg.lr = s.at("lr").get<double>();
  const std::string sched = s.at("lr_schedule").get<std::string>();
  if (sched == "fixed") {
    cfg.lr_schedule = LrSchedule::kFixed;
  } else if (sched == "step") {
    cfg.lr_schedule = LrSchedule::kStep;
  } else {
    throw ConfigError("lr_schedule '" + sched + "' unknown (expected fixed or step)");
  }
  cfg.lr_step_every = s.at("lr_step_every").get<int>();
  cfg.lr_step_factor = s.at("lr_step_factor").get<double>();
  cfg.batch_size = s.at("batch_size").get<int>();
  cfg.noise_fraction = s.at("noise_fraction").get<double>();
  cfg.softmax_distance = s.at("softmax_distance").get<bool>();
  cfg.jl.kappa = s.at("jl").at("kappa").get<int>();
  cfg.jl.delta_fd = s.at("jl").at("delta_fd").get<double>();
  cfg.jl.proj_dim = s.at("jl").at("proj_dim").get<int>();
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::vector<double> grid_from_json(const json& g) {
  const double start = g.at("start").get<double>();
  const double step = g.at("step").get<double>();
  const int count = g.at("count").get<int>();
  if (count < 1 || !(step > 0.0)) throw ConfigError("grid needs count >= 1 and step > 0");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(start + step * i);
  return out;
}

// Deterministic fan-out: per-example streams, results merged in id order.
template <typename Fn>
void parallel_examples(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t per = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * per;
    const std::size_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

int cmd_train(CliContext& ctx) {
  const std::uint64_t seed = ctx.cfg.at("seed").get<std::uint64_t>();
  Dataset ds = build_dataset(ctx.cfg);
  if (!ds.labeled()) throw DataError("train: dataset has no labels");

  const json& m = ctx.cfg.at("model");
  std::vector<std::size_t> dims = m.at("layer_dims").get<std::vector<std::size_t>>();
  if (dims.front() != ds.input_dim() || dims.back() != static_cast<std::size_t>(ds.num_classes)) {
    throw ConfigError("model.layer_dims endpoints must match data: expected " +
                      std::to_string(ds.input_dim()) + "..." + std::to_string(ds.num_classes));
  }
  MlpModel model =
      MlpModel::init(dims, activation_from_name(m.at("activation").get<std::string>()), seed);

  const json& t = ctx.cfg.at("train");
  SmoothingConfig cfg;
  cfg.variant = SmoothVariant::kNoiseBaseline;
  cfg.sigma = t.at("sigma").get<double>();
  if (cfg.sigma < 0.0) throw ConfigError("train.sigma must be >= 0");
  cfg.epochs_per_timestep = t.at("epochs").get<int>();
  cfg.lr = t.at("lr").get<double>();
  cfg.batch_size = t.at("batch_size").get<int>();
  const std::string sched = t.at("lr_schedule").get<std::string>();
  cfg.lr_schedule = sched == "step" ? LrSchedule::kStep : LrSchedule::kFixed;
  cfg.lr_step_every = t.at("lr_step_every").get<int>();
  cfg.lr_step_factor = t.at("lr_step_factor").get<double>();
  cfg.seed = seed;

  TrainReport report;
  report.config_echo = ctx.cfg.dump();
  MlpModel trained = train_noise_baseline(model, ds, cfg, &report);

  ctx.write_echo("train");
  ctx.emit("model_baseline.json", trained.serialize());
  ctx.emit("train_report.json", report.to_json());
  ctx.emit("train_timing.json", report.timing_json(), /*hashed=*/false);
  ctx.write_manifest("train");
  std::cout << "train: final loss " << report.epoch_mean_loss.back() << ", model in "
            << (ctx.out_dir / "model_baseline.json").string() << "\n";
  return 0;
}

int cmd_smooth(CliContext& ctx, const std::string& model_path) {
  const std::uint64_t seed = ctx.cfg.at("seed").get<std::uint64_t>();
  MlpModel base = MlpModel::load(model_path);
  Dataset ds = build_dataset(ctx.cfg);
  if (ds.input_dim() != base.input_dim()) {
    throw ConfigError("dataset dimension does not match the model input");
  }

  SmoothingConfig cfg = smoothing_from_json(ctx.cfg.at("smoothing"), seed);
  TrainReport report;
  report.config_echo = ctx.cfg.dump();

  MlpModel smoothed;
  if (cfg.variant == SmoothVariant::kHeatIterative) {
    smoothed = train_heatsmooth(base, ds.inputs_only(), cfg, &report);
  } else if (cfg.variant == SmoothVariant::kNoisyDistill) {
    smoothed = train_noisy_distill(base, ds.inputs_only(), cfg, &report);
  } else {
    throw ConfigError("smooth: variant must be heat_iterative or noisy_distill (use train for "
                      "noise_baseline)");
  }

  ctx.write_echo("smooth");
  ctx.emit("model_smoothed.json", smoothed.serialize());
  ctx.emit("smooth_report.json", report.to_json());
  ctx.emit("smooth_timing.json", report.timing_json(), /*hashed=*/false);
  ctx.write_manifest("smooth");
  std::cout << "smooth: " << report.timesteps.size() << " timestep(s), model in "
            << (ctx.out_dir / "model_smoothed.json").string() << "\n";
  return 0;
}

int cmd_certify(CliContext& ctx, const std::string& model_path) {
  const std::uint64_t seed = ctx.cfg.at("seed").get<std::uint64_t>();
  MlpModel model = MlpModel::load(model_path);
  Dataset ds = build_dataset(ctx.cfg);
  if (!ds.labeled()) throw DataError("certify: dataset has no labels");

  const json& c = ctx.cfg.at("certify");
  CertifyConfig cfg;
  cfg.mode = certify_mode_from_name(c.at("mode").get<std::string>());
  cfg.sigma = c.at("sigma").get<double>();
  if (c.at("use_model_sigma").get<bool>() && model.sigma() > 0.0) cfg.sigma = model.sigma();
  cfg.n0 = c.at("n0").get<int>();
  cfg.n = c.at("n").get<int>();
  cfg.alpha = c.at("alpha").get<double>();
  cfg.lbound_rank = c.at("lbound_rank").get<int>();
  cfg.seed = seed;
  cfg.validate();

  std::size_t n_examples = ds.size();
  const auto cap = c.at("max_examples").get<std::size_t>();
  if (cap > 0) n_examples = std::min(n_examples, cap);

  std::vector<CertificationRecord> records(n_examples);
  const int workers = ctx.cfg.at("workers").get<int>();
  parallel_examples(n_examples, workers, [&](std::size_t i) {
    const Tensor x = ds.inputs.row(i);
    Rng rng = Rng::stream(seed, {0x6365727469ULL, i});
    switch (cfg.mode) {
      case CertifyMode::kStochasticMc:
        records[i] = certify_stochastic(model, x, i, cfg, rng);
        break;
      case CertifyMode::kDeterministicFixedClass:
        records[i] = certify_deterministic(model, x, i, cfg, rng);
        break;
      case CertifyMode::kLBound:
        records[i] = certify_lbound(model, x, i, cfg);
        break;
    }
  });

  std::vector<int> labels(ds.labels.begin(),
                          ds.labels.begin() + static_cast<std::ptrdiff_t>(n_examples));
  const std::vector<double> radii = grid_from_json(c.at("radius_grid"));
  const auto curve = certified_accuracy_curve(records, labels, radii);

  const std::string mode = certify_mode_name(cfg.mode);
  ctx.write_echo("certify");
  ctx.emit("certify_records_" + mode + ".csv", certification_records_csv(records));
  ctx.emit("certify_curve_" + mode + ".csv", curve_csv(curve));
  ctx.write_manifest("certify");
  std::cout << "certify[" << mode << "]: " << n_examples << " examples\n";
  return 0;
}

AttackConfig attack_from_json(const json& a, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.alpha_step = a.at("alpha_step").get<double>();
  cfg.epsilon = a.at("epsilon").get<double>();
  cfg.max_steps = a.at("max_steps").get<int>();
  cfg.n_noise = a.at("n_noise").get<int>();
  cfg.sigma = a.at("sigma").get<double>();
  const std::string succ = a.at("success").get<std::string>();
  if (succ == "top1") {
    cfg.success = SuccessCriterion::kTop1;
  } else if (succ == "topk") {
    cfg.success = SuccessCriterion::kTopK;
  } else {
    throw ConfigError("attack.success must be top1 or topk");
  }
  cfg.top_k = a.at("top_k").get<int>();
  cfg.ddn_gamma = a.at("ddn_gamma").get<double>();
  cfg.ddn_init_radius = a.at("ddn_init_radius").get<double>();
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

int cmd_attack(CliContext& ctx, const std::string& model_path) {
  const std::uint64_t seed = ctx.cfg.at("seed").get<std::uint64_t>();
  MlpModel model = MlpModel::load(model_path);
  Dataset ds = build_dataset(ctx.cfg);
  if (!ds.labeled()) throw DataError("attack: dataset has no labels");

  const json& a = ctx.cfg.at("attack");
  AttackConfig cfg = attack_from_json(a, seed);
  const std::string which = a.at("attack").get<std::string>();
  std::vector<std::string> names;
  if (which == "both") {
    names = {"pgd", "ddn"};
  } else if (which == "pgd" || which == "ddn") {
    names = {which};
  } else {
    throw ConfigError("attack.attack must be pgd, ddn or both");
  }

  std::size_t n_examples = ds.size();
  const auto cap = a.at("max_examples").get<std::size_t>();
  if (cap > 0) n_examples = std::min(n_examples, cap);

  const MlpTarget target(model);
  const std::vector<double> norms = grid_from_json(a.at("norms_grid"));
  const int workers = ctx.cfg.at("workers").get<int>();

  json summary;
  summary["sigma"] = cfg.sigma;
  const double lb_sigma = model.sigma() > 0.0 ? model.sigma() : (cfg.sigma > 0.0 ? cfg.sigma : 0.0);
  if (lb_sigma > 0.0) {
    const SummaryStats lb = lbound_table(model, ds, lb_sigma, 1);
    summary["lbound"] = {{"median", lb.median}, {"mean", lb.mean}, {"count", lb.count}};
  }

  ctx.write_echo("attack");
  for (const std::string& name : names) {
    std::vector<AttackRecord> records(n_examples);
    parallel_examples(n_examples, workers, [&](std::size_t i) {
      const Tensor x = ds.inputs.row(i);
      Rng rng = Rng::stream(seed, {0x61747461636bULL, i});
      records[i] = name == "pgd" ? pgd_attack(target, x, ds.labels[i], i, cfg, rng)
                                 : ddn_attack(target, x, ds.labels[i], i, cfg, rng);
    });
    const auto curve = attack_curve(records, norms);
    ctx.emit("attack_records_" + name + ".csv", attack_records_csv(records));
    ctx.emit("attack_curve_" + name + ".csv", attack_curve_csv(curve));

    std::vector<double> success_norms;
    for (const auto& r : records) {
      if (r.success) success_norms.push_back(r.norm);
    }
    json entry;
    entry["examples"] = n_examples;
    entry["successes"] = success_norms.size();
    if (!success_norms.empty()) {
      const SummaryStats st = summarize(success_norms);
      entry["median"] = st.median;
      entry["mean"] = st.mean;
    }
    summary[name] = std::move(entry);
  }
  ctx.emit("attack_summary.json", summary.dump(2) + "\n");
  ctx.write_manifest("attack");
  std::cout << "attack: " << n_examples << " examples, " << names.size() << " attack(s)\n";
  return 0;
}

int cmd_oracle_check(CliContext& ctx) {
  const json& o = ctx.cfg.at("oracle");
  OracleCheckConfig cfg;
  cfg.mc_samples = o.at("mc_samples").get<std::size_t>();
  cfg.mc_points = o.at("mc_points").get<std::size_t>();
  cfg.sup_tol = o.at("sup_tol").get<double>();
  cfg.seed = ctx.cfg.at("seed").get<std::uint64_t>();
  const double sigma = o.at("sigma").get<double>();
  const std::size_t res = o.at("resolution").get<std::size_t>();

  const double pi = 3.14159265358979323846;
  const double pad = 6.0 * sigma;

  std::vector<EquivalenceReport> reports;
  {
    auto f = [](double x) { return std::cos(3.0 * x); };
    const double decay = std::exp(-4.5 * sigma * sigma);
    auto analytic = [decay](double x) { return decay * std::cos(3.0 * x); };
    const GridFunction g0 = GridFunction::sample_1d(-pi - pad, pi + pad, res, f);
    reports.push_back(equivalence_report(g0, sigma, f, analytic, cfg, "cos(3x)"));
  }
  {
    auto f = [](double x) { return x * x; };
    const double s2 = sigma * sigma;
    auto analytic = [s2](double x) { return x * x + s2; };
    const GridFunction g0 = GridFunction::sample_1d(-1.0 - pad, 1.0 + pad, res, f);
    reports.push_back(equivalence_report(g0, sigma, f, analytic, cfg, "x^2"));
  }
  {
    auto f = [](double) { return 0.75; };
    auto analytic = [](double) { return 0.75; };
    const GridFunction g0 = GridFunction::sample_1d(-1.0 - pad, 1.0 + pad, res, f);
    reports.push_back(equivalence_report(g0, sigma, f, analytic, cfg, "constant"));
  }

  std::string text;
  bool all_pass = true;
  for (const auto& r : reports) {
    text += r.to_text();
    all_pass = all_pass && r.pass;
  }
  text += all_pass ? "ALL PASS\n" : "SOME CHECKS FAILED\n";

  ctx.write_echo("oracle-check");
  ctx.emit("oracle_report.txt", text);
  ctx.write_manifest("oracle-check");
  std::cout << text;
  if (!all_pass) throw NumericError("oracle equivalence checks failed");
  return 0;
}

int cmd_report(CliContext& ctx, const std::string& records_path, const std::string& kind) {
  const std::string text = read_file(records_path);
  const std::string stem = fs::path(records_path).filename().string();
  if (kind == "certify") {
    const auto records = certification_records_from_csv(text);
    Dataset ds = build_dataset(ctx.cfg);
    if (!ds.labeled()) throw DataError("report: dataset has no labels");
    if (ds.size() < records.size()) throw DataError("report: fewer labels than records");
    std::vector<int> labels(ds.labels.begin(),
                            ds.labels.begin() + static_cast<std::ptrdiff_t>(records.size()));
    const std::vector<double> radii = grid_from_json(ctx.cfg.at("certify").at("radius_grid"));
    const auto curve = certified_accuracy_curve(records, labels, radii);
    std::string name = stem;
    const auto pos = name.find("records");
    if (pos != std::string::npos) name.replace(pos, 7, "curve");
    else name = "derived_curve_" + name;
    ctx.emit(name, curve_csv(curve));
  } else if (kind == "attack") {
    const auto records = attack_records_from_csv(text);
    const std::vector<double> norms = grid_from_json(ctx.cfg.at("attack").at("norms_grid"));
    const auto curve = attack_curve(records, norms);
    std::string name = stem;
    const auto pos = name.find("records");
    if (pos != std::string::npos) name.replace(pos, 7, "curve");
    else name = "derived_curve_" + name;
    ctx.emit(name, attack_curve_csv(curve));

    std::vector<double> success_norms;
    for (const auto& r : records) {
      if (r.success) success_norms.push_back(r.norm);
    }
    json summary;
    summary["examples"] = records.size();
    summary["successes"] = success_norms.size();
    if (!success_norms.empty()) {
      const SummaryStats st = summarize(success_norms);
      summary["median"] = st.median;
      summary["mean"] = st.mean;
    }
    ctx.emit("derived_summary_" + stem + ".json", summary.dump(2) + "\n");
  } else {
    throw ConfigError("report kind must be certify or attack");
  }
  ctx.write_manifest("report");
  std::cout << "report: derived outputs in " << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_bench(CliContext& ctx, const std::string& model_path) {
  const std::uint64_t seed = ctx.cfg.at("seed").get<std::uint64_t>();
  MlpModel model = MlpModel::load(model_path);
  Dataset ds = build_dataset(ctx.cfg);
  if (ds.input_dim() != model.input_dim()) {
    throw ConfigError("dataset dimension does not match the model input");
  }

  const json& b = ctx.cfg.at("bench");
  const int n_samples = b.at("n_samples").get<int>();
  const std::size_t n_examples = std::min<std::size_t>(ds.size(), b.at("n_examples").get<std::size_t>());
  const int repeats = b.at("repeats").get<int>();
  if (n_samples < 1 || n_examples < 1 || repeats < 1) {
    throw ConfigError("bench needs n_samples, n_examples and repeats >= 1");
  }
  const double sigma = model.sigma() > 0.0 ? model.sigma() : 0.25;

  // Deterministic: one forward per example. Stochastic ensemble: n_samples
  // noisy forwards per example, aggregated by vote.
  volatile int sink = 0;
  double det_best = 1e300, ens_best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n_examples; ++i) {
      sink ^= model.predict(ds.inputs.row(i));
    }
    auto t1 = std::chrono::steady_clock::now();
    det_best = std::min(det_best, std::chrono::duration<double>(t1 - t0).count());

    t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n_examples; ++i) {
      Rng rng = Rng::stream(seed, {0x62656e6368ULL, static_cast<std::uint64_t>(r), i});
      std::vector<int> counts(model.num_classes(), 0);
      Tensor x = ds.inputs.row(i);
      Tensor noisy = x;
      for (int s = 0; s < n_samples; ++s) {
        for (std::size_t j = 0; j < noisy.size(); ++j) noisy[j] = x[j] + sigma * rng.normal();
        counts[static_cast<std::size_t>(model.predict(noisy))]++;
      }
      sink ^= argmax_lowest_tie(std::vector<double>(counts.begin(), counts.end()));
    }
    t1 = std::chrono::steady_clock::now();
    ens_best = std::min(ens_best, std::chrono::duration<double>(t1 - t0).count());
  }

  const double det_mean = det_best / static_cast<double>(n_examples);
  const double ens_mean = ens_best / static_cast<double>(n_examples);
  json doc;
  doc["modes"] = json::array({
      {{"mode", "deterministic"}, {"n_samples", 1}, {"mean_seconds", det_mean}},
      {{"mode", "stochastic_ensemble"}, {"n_samples", n_samples}, {"mean_seconds", ens_mean}},
  });
  doc["ratio"] = ens_mean / det_mean;
  ctx.write_echo("bench");
  ctx.emit("bench.json", doc.dump(2) + "\n", /*hashed=*/false);
  ctx.write_manifest("bench");
  std::cout << "bench: ratio " << doc["ratio"].get<double>() << " (ensemble n=" << n_samples
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic Gaussian smoothing: training, certification, attacks and oracles"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string model_path;
  std::string records_path;
  std::string report_kind = "certify";

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "dotted-key override, e.g. --set certify.n=500");
  app.add_option("--out", out_dir, "output directory (overrides config out_dir)");

  auto* train = app.add_subcommand("train", "train a baseline or noise-augmented classifier");
  auto* smooth = app.add_subcommand("smooth", "distill a base model into a smoothed one");
  smooth->add_option("--model", model_path, "base model file")->required();
  auto* certify = app.add_subcommand("certify", "emit certification records and accuracy curve");
  certify->add_option("--model", model_path, "model file")->required();
  auto* attack = app.add_subcommand("attack", "run l2 attacks and emit records/curves/summary");
  attack->add_option("--model", model_path, "model file")->required();
  auto* oracle = app.add_subcommand("oracle-check", "smoothing equivalence checks on test functions");
  auto* report = app.add_subcommand("report", "re-derive curves/summaries from a records file");
  report->add_option("--records", records_path, "records CSV")->required();
  report->add_option("--kind", report_kind, "certify or attack");
  auto* bench = app.add_subcommand("bench", "single-pass vs ensemble inference timing");
  bench->add_option("--model", model_path, "model file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    CliContext ctx = make_context(config_path, overrides, out_dir);
    if (train->parsed()) return cmd_train(ctx);
    if (smooth->parsed()) return cmd_smooth(ctx, model_path);
    if (certify->parsed()) return cmd_certify(ctx, model_path);
    if (attack->parsed()) return cmd_attack(ctx, model_path);
    if (oracle->parsed()) return cmd_oracle_check(ctx);
    if (report->parsed()) return cmd_report(ctx, records_path, report_kind);
    if (bench->parsed()) return cmd_bench(ctx, model_path);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
