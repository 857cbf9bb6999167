// Integration tests: drive the installed CLI binary end to end.

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "heatsmooth/certify.hpp"
#include "heatsmooth/data.hpp"
#include "heatsmooth/io.hpp"

using namespace heatsmooth;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* cli_path() { return HEATSMOOTH_CLI_PATH; }

fs::path scratch_root() {
  const fs::path p = fs::current_path() / "cli_test_work";
  fs::create_directories(p);
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const fs::path out_file = scratch_root() / "last_output.txt";
  const std::string cmd =
      std::string(cli_path()) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream buf;
  buf << in.rdbuf();
  r.output = buf.str();
  return r;
}

// Small, fast overrides shared by the pipeline tests.
std::string quick_train_flags(const std::string& out) {
  return "--out " + out +
         " --set seed=5"
         " --set data.n_points=60"
         " --set data.margin=1.0"
         " --set model.layer_dims=[2,16,2]"
         " --set train.epochs=40"
         " --set train.lr=0.1"
         " --set train.batch_size=16";
}

}  // namespace

TEST_CASE("train writes a model, a report and a manifest; reruns hash identically") {
  const fs::path out1 = scratch_root() / "train1";
  const fs::path out2 = scratch_root() / "train2";

  const auto r1 = run_cli("train " + quick_train_flags(out1.string()));
  REQUIRE(r1.exit_code == 0);
  CHECK(fs::exists(out1 / "model_baseline.json"));
  CHECK(fs::exists(out1 / "train_report.json"));
  CHECK(fs::exists(out1 / "config_echo_train.json"));
  CHECK(fs::exists(out1 / "train_manifest.json"));

  const json report = json::parse(read_file((out1 / "train_report.json").string()));
  const auto losses = report.at("epoch_mean_loss").get<std::vector<double>>();
  CHECK(losses.back() < losses.front());

  const auto r2 = run_cli("train " + quick_train_flags(out2.string()));
  REQUIRE(r2.exit_code == 0);
  CHECK(file_hash_hex((out1 / "model_baseline.json").string()) ==
        file_hash_hex((out2 / "model_baseline.json").string()));
  CHECK(file_hash_hex((out1 / "train_report.json").string()) ==
        file_hash_hex((out2 / "train_report.json").string()));
}

TEST_CASE("config validation failures name the field and exit 1") {
  const auto r = run_cli("train --out " + (scratch_root() / "bad").string() +
                         " --set train.sigma=-0.5");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("train.sigma") != std::string::npos);

  const auto r2 = run_cli("train --out " + (scratch_root() / "bad2").string() +
                          " --set no.such.key=1");
  CHECK(r2.exit_code == 1);
  CHECK(r2.output.find("no.such.key") != std::string::npos);
}

TEST_CASE("smooth emits one timestep entry per round") {
  const fs::path base = scratch_root() / "smooth_base";
  REQUIRE(run_cli("train " + quick_train_flags(base.string())).exit_code == 0);
  const std::string model = (base / "model_baseline.json").string();

  const fs::path iter_out = scratch_root() / "smooth_iter";
  const auto r1 = run_cli(
      "smooth --model " + model + " --out " + iter_out.string() +
      " --set seed=5 --set data.n_points=60 --set data.margin=1.0"
      " --set smoothing.variant=heat_iterative --set smoothing.n_timesteps=2"
      " --set smoothing.epochs_per_timestep=8 --set smoothing.sigma=0.2"
      " --set smoothing.batch_size=16 --set smoothing.jl.kappa=3");
  REQUIRE(r1.exit_code == 0);
  const json rep1 = json::parse(read_file((iter_out / "smooth_report.json").string()));
  CHECK(rep1.at("timesteps").size() == 2);

  const fs::path noisy_out = scratch_root() / "smooth_noisy";
  const auto r2 = run_cli(
      "smooth --model " + model + " --out " + noisy_out.string() +
      " --set seed=5 --set data.n_points=60 --set data.margin=1.0"
      " --set smoothing.variant=noisy_distill --set smoothing.epochs_per_timestep=8"
      " --set smoothing.sigma=0.2 --set smoothing.batch_size=16 --set smoothing.jl.kappa=3");
  REQUIRE(r2.exit_code == 0);
  const json rep2 = json::parse(read_file((noisy_out / "smooth_report.json").string()));
  CHECK(rep2.at("timesteps").size() == 1);

  // The smoothed model records the sigma it was trained with.
  const json smoothed = json::parse(read_file((iter_out / "model_smoothed.json").string()));
  CHECK(smoothed.at("sigma").get<double>() == 0.2);
}

TEST_CASE("certify: records and curve are consistent, report re-derives the curve byte-for-byte") {
  const fs::path base = scratch_root() / "cert_base";
  REQUIRE(run_cli("train " + quick_train_flags(base.string())).exit_code == 0);
  const std::string model = (base / "model_baseline.json").string();

  const fs::path cert_out = scratch_root() / "cert";
  const std::string common =
      " --set seed=5 --set data.n_points=60 --set data.margin=1.0"
      " --set certify.sigma=0.25 --set certify.n0=10 --set certify.n=80"
      " --set certify.max_examples=25";
  const auto r = run_cli("certify --model " + model + " --out " + cert_out.string() + common +
                         " --set certify.mode=deterministic_fixed_class");
  REQUIRE(r.exit_code == 0);

  const std::string records_path =
      (cert_out / "certify_records_deterministic_fixed_class.csv").string();
  const std::string curve_path =
      (cert_out / "certify_curve_deterministic_fixed_class.csv").string();
  const auto records = certification_records_from_csv(read_file(records_path));
  CHECK(records.size() == 25);
  for (const auto& rec : records) {
    if (rec.abstain) CHECK(rec.radius == 0.0);
  }

  // Curve is monotone non-increasing.
  std::ifstream in(curve_path);
  std::string line;
  std::getline(in, line);
  double prev = 1e300;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double acc = std::stod(line.substr(comma + 1));
    CHECK(acc <= prev + 1e-15);
    prev = acc;
  }

  const fs::path rederive = scratch_root() / "cert_rederive";
  const auto rr = run_cli("report --records " + records_path + " --kind certify --out " +
                          rederive.string() + common);
  REQUIRE(rr.exit_code == 0);
  CHECK(read_file((rederive / "certify_curve_deterministic_fixed_class.csv").string()) ==
        read_file(curve_path));
}

TEST_CASE("certify in lbound mode is sample-free and never abstains") {
  const fs::path base = scratch_root() / "lb_base";
  REQUIRE(run_cli("train " + quick_train_flags(base.string())).exit_code == 0);
  const fs::path out = scratch_root() / "lb";
  const auto r = run_cli("certify --model " + (base / "model_baseline.json").string() +
                         " --out " + out.string() +
                         " --set seed=5 --set data.n_points=60 --set data.margin=1.0"
                         " --set certify.mode=lbound --set certify.max_examples=10");
  REQUIRE(r.exit_code == 0);
  const auto records =
      certification_records_from_csv(read_file((out / "certify_records_lbound.csv").string()));
  CHECK(records.size() == 10);
  for (const auto& rec : records) {
    CHECK_FALSE(rec.abstain);
    CHECK_FALSE(rec.pa_lower.has_value());
    CHECK(rec.radius >= 0.0);
  }
}

TEST_CASE("attack: summary carries per-attack distance stats; curves re-derive") {
  const fs::path base = scratch_root() / "atk_base";
  REQUIRE(run_cli("train " + quick_train_flags(base.string())).exit_code == 0);
  const std::string model = (base / "model_baseline.json").string();

  const fs::path out = scratch_root() / "atk";
  const std::string common =
      " --set seed=5 --set data.n_points=60 --set data.margin=1.0"
      " --set attack.alpha_step=0.1 --set attack.epsilon=3.0 --set attack.max_steps=25"
      " --set attack.max_examples=20";
  const auto r = run_cli("attack --model " + model + " --out " + out.string() + common);
  REQUIRE(r.exit_code == 0);

  const json summary = json::parse(read_file((out / "attack_summary.json").string()));
  for (const std::string name : {"pgd", "ddn"}) {
    REQUIRE(summary.contains(name));
    CHECK(summary[name].contains("median"));
    CHECK(summary[name].contains("mean"));
  }

  const std::string records_path = (out / "attack_records_pgd.csv").string();
  const fs::path rederive = scratch_root() / "atk_rederive";
  const auto rr = run_cli("report --records " + records_path + " --kind attack --out " +
                          rederive.string() + common);
  REQUIRE(rr.exit_code == 0);
  CHECK(read_file((rederive / "attack_curve_pgd.csv").string()) ==
        read_file((out / "attack_curve_pgd.csv").string()));
}

TEST_CASE("attack refuses unlabeled data") {
  const fs::path dir = scratch_root() / "unlabeled";
  fs::create_directories(dir);
  const std::string csv_path = (dir / "points.csv").string();
  write_file(csv_path, "x_0,x_1\n0.1,0.2\n0.3,0.4\n");

  const fs::path base = scratch_root() / "unl_base";
  REQUIRE(run_cli("train " + quick_train_flags(base.string())).exit_code == 0);
  const auto r = run_cli("attack --model " + (base / "model_baseline.json").string() +
                         " --out " + (dir / "out").string() +
                         " --set data.kind=csv --set data.path=" + csv_path);
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("label") != std::string::npos);
}

TEST_CASE("oracle-check passes on the built-in functions") {
  const fs::path out = scratch_root() / "oracle";
  const auto r = run_cli("oracle-check --out " + out.string() +
                         " --set oracle.resolution=1024 --set oracle.mc_samples=20000");
  REQUIRE(r.exit_code == 0);
  const std::string report = read_file((out / "oracle_report.txt").string());
  CHECK(report.find("ALL PASS") != std::string::npos);
  CHECK(report.find("cos(3x)") != std::string::npos);
}

TEST_CASE("bench reports per-mode timings and their ratio") {
  const fs::path base = scratch_root() / "bench_base";
  REQUIRE(run_cli("train " + quick_train_flags(base.string())).exit_code == 0);
  const fs::path out = scratch_root() / "bench";
  const auto r = run_cli("bench --model " + (base / "model_baseline.json").string() + " --out " +
                         out.string() +
                         " --set seed=5 --set data.n_points=60 --set data.margin=1.0"
                         " --set bench.n_samples=50 --set bench.n_examples=20");
  REQUIRE(r.exit_code == 0);
  const json doc = json::parse(read_file((out / "bench.json").string()));
  REQUIRE(doc.at("modes").size() == 2);
  CHECK(doc["modes"][0].at("mode") == "deterministic");
  CHECK(doc["modes"][1].at("n_samples") == 50);
  CHECK(doc.at("ratio").get<double>() > 1.0);
}

TEST_CASE("training divergence exits with the numerical-failure code") {
  const auto r = run_cli("train --out " + (scratch_root() / "diverge").string() +
                         " --set data.n_points=40 --set model.layer_dims=[2,8,2]"
                         " --set train.epochs=50 --set train.lr=1e9");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("diverged") != std::string::npos);
}
