#include <doctest.h>

#include <cmath>

#include "heatsmooth/errors.hpp"
#include "heatsmooth/rng.hpp"
#include "heatsmooth/tape.hpp"
#include "heatsmooth/tensor.hpp"
#include "test_oracles.hpp"

using namespace heatsmooth;

TEST_CASE("tensor shape and value invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor({}, {}), ShapeError);
  const Tensor t = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(t.at2(1, 0) == 3.0);
  CHECK(t.row(1)[1] == 4.0);
  Tensor bad = Tensor::vector({1.0, std::nan("")});
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(bad.ensure_finite("test"), NumericError);
}

TEST_CASE("scale by 3 at x=2 gives 6 with one op node") {
  Tape tape;
  const auto x = tape.leaf(Tensor::scalar(2.0), "x");
  const auto y = tape.scale(x, 3.0);
  CHECK(tape.value(y).scalar_value() == doctest::Approx(6.0));
  CHECK(tape.op_count() == 1);
  auto grads = tape.backward(y);
  CHECK(grads.at(x)[0] == doctest::Approx(3.0));
}

TEST_CASE("dot of x with itself and its gradient") {
  Tape tape;
  const auto x = tape.leaf(Tensor::vector({1.0, 2.0}), "x");
  const auto y = tape.dot(x, x);
  CHECK(tape.value(y).scalar_value() == doctest::Approx(5.0));
  auto grads = tape.backward(y);
  CHECK(grads.at(x)[0] == doctest::Approx(2.0));
  CHECK(grads.at(x)[1] == doctest::Approx(4.0));
}

TEST_CASE("taped two-layer forward matches an independent re-implementation") {
  const MlpModel model = MlpModel::init({3, 8, 2}, Activation::kRelu, 11);
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> xv(3);
    for (auto& v : xv) v = rng.uniform(-1.0, 1.0);

    Tape tape;
    const auto xid = tape.leaf(Tensor::vector(xv));
    const auto params = model.attach(tape);
    const auto out = model.forward_on(tape, params, xid);

    const std::vector<double> expect = oracles::naive_mlp_forward(model, xv);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(tape.value(out)[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
  }
}

namespace {

// FD check of d(prj . op(x))/dx for a single-input primitive.
void check_primitive_grad(const std::function<Tape::Id(Tape&, Tape::Id)>& build, std::size_t n,
                          Rng& rng) {
  std::vector<double> xv(n), pv;
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);

  Tape probe_tape;
  {
    const auto xid = probe_tape.leaf(Tensor::vector(xv));
    const auto out = build(probe_tape, xid);
    pv.resize(probe_tape.value(out).size());
    for (auto& v : pv) v = rng.uniform(-1.0, 1.0);
  }

  auto scalar_fn = [&](const std::vector<double>& x) {
    Tape t;
    const auto xid = t.leaf(Tensor::vector(x));
    const auto out = build(t, xid);
    const auto p = t.leaf(Tensor::vector(pv));
    return t.value(t.dot(p, out)).scalar_value();
  };

  Tape tape;
  const auto xid = tape.leaf(Tensor::vector(xv));
  const auto out = build(tape, xid);
  const auto p = tape.leaf(Tensor::vector(pv));
  const auto s = tape.dot(p, out);
  auto grads = tape.backward(s);
  const Tensor& analytic = grads.at(xid);

  const std::vector<double> fd = oracles::central_diff_grad(scalar_fn, xv, 1e-5);
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = std::max({std::fabs(fd[i]), std::fabs(analytic[i]), 1e-3});
    CHECK(std::fabs(analytic[i] - fd[i]) / denom <= 1e-5);
  }
}

}  // namespace

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(2024);
  for (int rep = 0; rep < 3; ++rep) {
    check_primitive_grad([](Tape& t, Tape::Id x) { return t.relu(x); }, 6, rng);
    check_primitive_grad([](Tape& t, Tape::Id x) { return t.tanh_act(x); }, 6, rng);
    check_primitive_grad([](Tape& t, Tape::Id x) { return t.softmax(x); }, 5, rng);
    check_primitive_grad([](Tape& t, Tape::Id x) { return t.logsumexp(x); }, 5, rng);
    check_primitive_grad([](Tape& t, Tape::Id x) { return t.scale(x, -1.7); }, 4, rng);
    check_primitive_grad(
        [](Tape& t, Tape::Id x) {
          const auto w = t.leaf(Tensor::matrix(3, 4, {0.5, -1, 2, 0.25, 1, 1, -2, 0.5, 0, 3, 1, -1}));
          return t.matvec(w, x);
        },
        4, rng);
    check_primitive_grad(
        [](Tape& t, Tape::Id x) {
          const auto b = t.leaf(Tensor::vector({0.3, -0.2, 0.9}));
          return t.add(x, b);
        },
        3, rng);
    check_primitive_grad(
        [](Tape& t, Tape::Id x) {
          const auto b = t.leaf(Tensor::vector({0.3, -0.2, 0.9}));
          return t.sub(x, b);
        },
        3, rng);
    check_primitive_grad(
        [](Tape& t, Tape::Id x) {
          const auto b = t.leaf(Tensor::vector({0.4, 0.1, -0.8, 1.2}));
          return t.dot(x, b);
        },
        4, rng);
  }
}

TEST_CASE("matvec gradient reaches the weight leaf too") {
  // d(w . (W x))/dW against FD on the weight entries.
  const std::vector<double> xv = {0.7, -0.3};
  const std::vector<double> wv = {1.0, 0.5};
  std::vector<double> mat = {0.2, -0.4, 0.6, 0.1};

  auto scalar_fn = [&](const std::vector<double>& m) {
    Tape t;
    const auto W = t.leaf(Tensor::matrix(2, 2, m));
    const auto x = t.leaf(Tensor::vector(xv));
    const auto w = t.leaf(Tensor::vector(wv));
    return t.value(t.dot(w, t.matvec(W, x))).scalar_value();
  };

  Tape tape;
  const auto W = tape.leaf(Tensor::matrix(2, 2, mat));
  const auto x = tape.leaf(Tensor::vector(xv));
  const auto w = tape.leaf(Tensor::vector(wv));
  auto grads = tape.backward(tape.dot(w, tape.matvec(W, x)));
  const std::vector<double> fd = oracles::central_diff_grad(scalar_fn, mat, 1e-6);
  for (std::size_t i = 0; i < mat.size(); ++i) {
    CHECK(grads.at(W)[i] == doctest::Approx(fd[i]).epsilon(1e-7));
  }
}

TEST_CASE("backward is linear in the head") {
  const double a = 1.7, b = -0.6;
  auto build = [](Tape& t, Tape::Id& u, Tape::Id& v) {
    const auto x = t.leaf(Tensor::vector({0.4, -0.9, 1.3}));
    const auto w1 = t.leaf(Tensor::vector({1.0, 0.2, -0.5}));
    const auto w2 = t.leaf(Tensor::vector({-0.3, 0.8, 0.1}));
    u = t.dot(w1, t.softmax(x));
    v = t.dot(w2, t.tanh_act(x));
    return x;
  };

  Tape t1, t2, t3;
  Tape::Id u1, v1, u2, v2, u3, v3;
  const auto x1 = build(t1, u1, v1);
  const auto x2 = build(t2, u2, v2);
  const auto x3 = build(t3, u3, v3);

  const auto combined = t1.add(t1.scale(u1, a), t1.scale(v1, b));
  auto g_combined = t1.backward(combined);
  auto g_u = t2.backward(u2);
  auto g_v = t3.backward(v3);

  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = a * g_u.at(x2)[i] + b * g_v.at(x3)[i];
    CHECK(g_combined.at(x1)[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("identical seeds give bit-identical values and gradients") {
  auto run = [] {
    Rng rng(7);
    const MlpModel model = MlpModel::init({4, 16, 3}, Activation::kRelu, 7);
    std::vector<double> xv(4);
    for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
    Tape tape;
    const auto xid = tape.leaf(Tensor::vector(xv));
    const auto params = model.attach(tape);
    const auto out = model.forward_on(tape, params, xid);
    const auto w = tape.leaf(Tensor::vector({0.3, -1.0, 0.7}));
    const auto s = tape.dot(w, out);
    const double val = tape.value(s).scalar_value();
    auto grads = tape.backward(s);
    return std::make_pair(val, grads.at(xid));
  };
  const auto [v1, g1] = run();
  const auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("tape error paths") {
  Tape tape;
  const auto a = tape.leaf(Tensor::vector({1.0, 2.0}));
  const auto b = tape.leaf(Tensor::vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("shape mismatch in add"), ShapeError);

  CHECK_THROWS_AS(tape.backward(a), ShapeError);  // non-scalar head

  const auto s = tape.dot(a, a);
  auto grads = tape.backward(s);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(s), NumericError);          // second backward
  CHECK_THROWS_AS(tape.leaf(Tensor::scalar(1.0)), NumericError);  // re-recording
}

TEST_CASE("untouched leaves get zero gradients") {
  Tape tape;
  const auto a = tape.leaf(Tensor::vector({1.0, 2.0}));
  const auto unused = tape.leaf(Tensor::vector({5.0, 5.0, 5.0}));
  auto grads = tape.backward(tape.dot(a, a));
  CHECK(grads.at(unused) == Tensor::zeros({3}));
}

TEST_CASE("softmax and logsumexp survive extreme logits") {
  Tape tape;
  const auto z = tape.leaf(Tensor::vector({1000.0, 999.0, -1000.0}));
  const auto s = tape.softmax(z);
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) sum += tape.value(s)[i];
  CHECK(tape.value(s).all_finite());
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  const auto l = tape.logsumexp(z);
  CHECK(tape.value(l).scalar_value() == doctest::Approx(1000.0 + std::log(1.0 + std::exp(-1.0))));
}
