#include <doctest.h>

#include <cmath>

#include "heatsmooth/attacks.hpp"
#include "heatsmooth/errors.hpp"
#include "heatsmooth/model.hpp"
#include "heatsmooth/rng.hpp"

using namespace heatsmooth;

namespace {

// Binary linear classifier with unit-norm logit difference along u; the
// decision boundary is u . x + offset = 0 and the margin of a point equals
// |u . x + offset|.
MlpModel margin_model(const std::vector<double>& u, double offset) {
  const std::size_t d = u.size();
  std::vector<double> w(2 * d);
  for (std::size_t j = 0; j < d; ++j) {
    w[j] = 0.5 * u[j];
    w[d + j] = -0.5 * u[j];
  }
  return MlpModel({d, 2}, Activation::kRelu,
                  {{Tensor::matrix(2, d, std::move(w)),
                    Tensor::vector({0.5 * offset, -0.5 * offset})}});
}

MlpModel constant_model() {
  return MlpModel({2, 2}, Activation::kRelu,
                  {{Tensor::zeros({2, 2}), Tensor::vector({1.0, 0.0})}});
}

}  // namespace

TEST_CASE("a nonzero gradient step has l2 norm exactly alpha") {
  const MlpModel model = margin_model({1.0, 0.0}, 0.0);
  const MlpTarget target(model);
  AttackConfig cfg;
  cfg.alpha_step = 0.07;
  cfg.epsilon = 10.0;
  Rng rng(1);
  bool stationary = false;
  const Tensor delta = pgd_step(target, Tensor::vector({0.5, 0.3}), Tensor::zeros({2}), 0, cfg,
                                rng, &stationary);
  CHECK_FALSE(stationary);
  CHECK(l2_norm(delta.values()) == doctest::Approx(0.07).epsilon(1e-12));
}

TEST_CASE("on a linear model the step moves along the boundary normal") {
  const MlpModel model = margin_model({0.6, 0.8}, 0.0);
  const MlpTarget target(model);
  AttackConfig cfg;
  cfg.alpha_step = 0.1;
  cfg.epsilon = 10.0;
  Rng rng(1);
  const Tensor delta =
      pgd_step(target, Tensor::vector({0.6, 0.8}), Tensor::zeros({2}), 0, cfg, rng, nullptr);
  // Attacking class 0 from the positive side pushes along -u.
  CHECK(delta[0] == doctest::Approx(-0.1 * 0.6).epsilon(1e-9));
  CHECK(delta[1] == doctest::Approx(-0.1 * 0.8).epsilon(1e-9));
}

TEST_CASE("ensemble step with one sample and zero noise is bitwise the plain step") {
  const MlpModel model = MlpModel::init({3, 8, 2}, Activation::kRelu, 6);
  const MlpTarget target(model);
  const Tensor x = Tensor::vector({0.3, -0.5, 0.8});
  const int y = model.predict(x);

  AttackConfig plain;
  plain.alpha_step = 0.2;
  plain.epsilon = 2.0;
  AttackConfig ensemble = plain;
  ensemble.n_noise = 1;
  ensemble.sigma = 0.0;

  Rng r1(10), r2(10);
  Tensor d1 = Tensor::zeros({3});
  Tensor d2 = Tensor::zeros({3});
  for (int t = 0; t < 5; ++t) {
    d1 = pgd_step(target, x, d1, y, plain, r1, nullptr);
    d2 = pgd_step(target, x, d2, y, ensemble, r2, nullptr);
    CHECK(d1 == d2);  // bitwise
  }
}

TEST_CASE("already-misclassified points succeed at norm zero") {
  const MlpModel model = margin_model({1.0, 0.0}, 0.0);
  const MlpTarget target(model);
  AttackConfig cfg;
  Rng rng(2);
  // x on the negative side but labeled 0: predict != y at the start.
  const auto pgd = pgd_attack(target, Tensor::vector({-0.4, 0.0}), 0, 0, cfg, rng);
  CHECK(pgd.success);
  CHECK(pgd.norm == 0.0);
  CHECK(pgd.steps == 0);
  const auto ddn = ddn_attack(target, Tensor::vector({-0.4, 0.0}), 0, 0, cfg, rng);
  CHECK(ddn.success);
  CHECK(ddn.norm == 0.0);
}

TEST_CASE("linear margin: PGD lands near the margin, DDN refines it") {
  const double margin = 0.3;
  const MlpModel model = margin_model({1.0, 0.0}, 0.0);
  const MlpTarget target(model);
  const Tensor x = Tensor::vector({margin, 0.7});  // distance to boundary = 0.3

  AttackConfig pgd_cfg;
  pgd_cfg.alpha_step = 0.05;
  pgd_cfg.epsilon = 2.0;
  pgd_cfg.max_steps = 60;
  Rng r1(3);
  const auto pgd = pgd_attack(target, x, 0, 0, pgd_cfg, r1);
  CHECK(pgd.success);
  CHECK(std::fabs(pgd.norm - margin) / margin <= 0.50);

  AttackConfig ddn_cfg;
  ddn_cfg.alpha_step = 0.3;
  ddn_cfg.epsilon = 2.0;
  ddn_cfg.max_steps = 100;
  Rng r2(3);
  const auto ddn = ddn_attack(target, x, 0, 0, ddn_cfg, r2);
  CHECK(ddn.success);
  CHECK(std::fabs(ddn.norm - margin) / margin <= 0.10);

  // Sanity ordering at desk scale.
  CHECK(ddn.norm <= pgd.norm * 1.5);
}

TEST_CASE("a constant model cannot be attacked and is flagged stationary") {
  const MlpModel model = constant_model();
  const MlpTarget target(model);
  AttackConfig cfg;
  cfg.max_steps = 10;
  Rng rng(4);
  const auto rec = pgd_attack(target, Tensor::vector({0.1, 0.1}), 0, 0, cfg, rng);
  CHECK_FALSE(rec.success);
  CHECK(rec.stationary);
}

TEST_CASE("projection keeps every iterate inside the epsilon ball") {
  const MlpModel model = margin_model({1.0, 0.0}, 0.0);
  const MlpTarget target(model);
  AttackConfig cfg;
  cfg.alpha_step = 0.4;
  cfg.epsilon = 0.5;
  cfg.max_steps = 12;
  Rng rng(5);
  Tensor delta = Tensor::zeros({2});
  for (int t = 0; t < cfg.max_steps; ++t) {
    delta = pgd_step(target, Tensor::vector({2.0, 0.0}), delta, 0, cfg, rng, nullptr);
    CHECK(l2_norm(delta.values()) <= cfg.epsilon + 1e-9);
  }
}

TEST_CASE("ddn with gamma=0 keeps a fixed search radius") {
  const double margin = 0.3;
  const MlpModel model = margin_model({1.0, 0.0}, 0.0);
  const MlpTarget target(model);
  AttackConfig cfg;
  cfg.ddn_gamma = 0.0;
  cfg.ddn_init_radius = 0.8;
  cfg.max_steps = 20;
  cfg.epsilon = 2.0;
  Rng rng(6);
  const auto rec = ddn_attack(target, Tensor::vector({margin, 0.0}), 0, 0, cfg, rng);
  CHECK(rec.success);
  CHECK(rec.norm == doctest::Approx(0.8).epsilon(1e-9));  // never adjusted
}

TEST_CASE("top-k success criterion") {
  // Three classes; y=0 currently ranked first.
  std::vector<double> logits = {2.0, 1.0, 0.5};
  AttackConfig cfg;
  cfg.success = SuccessCriterion::kTopK;
  cfg.top_k = 2;
  CHECK_FALSE(misclassified(logits, 0, cfg));
  logits = {0.8, 1.0, 0.5};  // second place: still inside the top-2
  CHECK_FALSE(misclassified(logits, 0, cfg));
  logits = {0.1, 1.0, 0.5};  // third place: pushed out
  CHECK(misclassified(logits, 0, cfg));
}

TEST_CASE("summary and ranked-gap table") {
  CHECK_THROWS_AS(summarize({}), DataError);
  const auto st = summarize({0.3});
  CHECK(st.median == 0.3);
  CHECK(st.mean == 0.3);
  const auto st2 = summarize({0.1, 0.2, 0.4, 0.8});
  CHECK(st2.median == doctest::Approx(0.3));
  CHECK(st2.mean == doctest::Approx(0.375));

  const MlpModel constant = constant_model();
  Dataset ds = gen_2d_clusters(20, 0.5, 3);
  const auto lb = lbound_table(constant, ds, 0.25, 1);
  // Constant logits (1, 0): every example has the same softmax gap.
  const auto probs = softmax_stable(std::vector<double>{1.0, 0.0});
  const double expected = 0.25 * std::sqrt(3.14159265358979323846 / 2.0) * (probs[0] - probs[1]);
  CHECK(lb.median == doctest::Approx(expected));
  CHECK(lb.mean == doctest::Approx(expected));

  Dataset empty;
  empty.inputs = Tensor::matrix(1, 2, {0, 0});
  empty.num_classes = 2;
  // Single example: median == mean == its radius.
  const auto single = lbound_table(constant, empty, 0.25, 1);
  CHECK(single.median == single.mean);
}

TEST_CASE("attack curve: recount oracle and monotonicity") {
  Rng rng(9);
  std::vector<AttackRecord> records(100);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].example_id = i;
    records[i].attack = "pgd";
    records[i].success = rng.uniform() < 0.7;
    records[i].norm = records[i].success ? rng.uniform(0.0, 2.0) : 0.0;
  }
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(0.05 * i);
  const auto curve = attack_curve(records, grid);
  for (std::size_t j = 0; j < curve.size(); ++j) {
    int count = 0;
    for (const auto& r : records) {
      if (r.success && r.norm <= grid[j]) ++count;
    }
    CHECK(curve[j].second == doctest::Approx(count / 100.0));
    if (j > 0) CHECK(curve[j].second >= curve[j - 1].second - 1e-15);
  }

  SUBCASE("all failures give the zero curve") {
    for (auto& r : records) r.success = false;
    for (const auto& pt : attack_curve(records, grid)) CHECK(pt.second == 0.0);
  }
  SUBCASE("all successes at norm zero give the unit curve") {
    for (auto& r : records) {
      r.success = true;
      r.norm = 0.0;
    }
    for (const auto& pt : attack_curve(records, grid)) CHECK(pt.second == 1.0);
  }
}

TEST_CASE("attack records CSV round-trip") {
  std::vector<AttackRecord> records(2);
  records[0] = {0, "pgd", true, 0.42, 7, false};
  records[1] = {1, "ddn", false, 1.9, 20, true};
  const auto back = attack_records_from_csv(attack_records_csv(records));
  REQUIRE(back.size() == 2);
  CHECK(back[0].norm == records[0].norm);
  CHECK(back[1].attack == "ddn");
  CHECK_FALSE(back[1].success);
}
