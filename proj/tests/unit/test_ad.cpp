#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "ctsel/ad/adamw.hpp"
#include "ctsel/ad/ops.hpp"
#include "ctsel/common/error.hpp"

using namespace ctsel;
using namespace ctsel::ad;

namespace {

using ScalarFn = std::function<Var(Tape&, Var)>;

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

double value_at(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  return f(tape, tape.constant(x)).value().item();
}

// Worst relative error between the tape gradient and central differences.
double fd_error(const ScalarFn& f, const Tensor& x0, double h = 1e-5) {
  Tape tape;
  const Var x = tape.input(x0);
  tape.backward(f(tape, x));
  const Tensor g = tape.grad(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Tensor xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double num = (value_at(f, xp) - value_at(f, xm)) / (2.0 * h);
    const double den = std::max({std::abs(num), std::abs(g[i]), 1e-7});
    worst = std::max(worst, std::abs(num - g[i]) / den);
  }
  return worst;
}

}  // namespace

TEST_SUITE("ad") {
  TEST_CASE("matmul with identity") {
    Rng rng = make_rng(1);
    Tape tape;
    const Tensor m = random_tensor(3, 4, rng);
    CHECK(matmul(tape.constant(Tensor::identity(3)), tape.constant(m)).value() == m);
  }

  TEST_CASE("dropout with p = 0 is the identity") {
    Rng rng = make_rng(2);
    Tape tape;
    const Tensor m = random_tensor(5, 3, rng);
    CHECK(dropout_mask_apply(tape.constant(m), dropout_mask(5, 3, 0.0, rng)).value() == m);
  }

  TEST_CASE("dropout mask is inverted and scaled") {
    Rng rng = make_rng(3);
    const Tensor mask = dropout_mask(200, 50, 0.2, rng);
    double s = 0.0;
    for (double v : mask.values()) {
      REQUIRE((v == 0.0 || v == doctest::Approx(1.25)));
      s += v;
    }
    CHECK(s / mask.size() == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("mean of a row") {
    Tape tape;
    CHECK(mean(tape.constant(Tensor::row({1, 2, 3, 6}))).value().item() == 3.0);
  }

  TEST_CASE("linear regression gradient has the closed form") {
    Rng rng = make_rng(4);
    const Tensor xs = random_tensor(16, 1, rng), ys = random_tensor(16, 1, rng);
    const double w0 = 0.7;
    Tape tape;
    const Var w = tape.input(Tensor::scalar(w0));
    tape.backward(mse(mul(tape.constant(xs), w), tape.constant(ys)));
    double expected = 0.0;
    for (std::size_t i = 0; i < 16; ++i) expected += 2.0 * (w0 * xs[i] - ys[i]) * xs[i];
    expected /= 16.0;
    CHECK(tape.grad(w).item() == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("gradient of a constant is zero") {
    Tape tape;
    const Var x = tape.input(Tensor::row({1, 2}));
    const Var c = tape.constant(Tensor::scalar(5.0));
    tape.backward(add(c, scale(sum(x), 0.0)));
    const Tensor gx = tape.grad(x);
    for (double g : gx.values()) CHECK(g == 0.0);
    tape.backward(c);
    CHECK(tape.grad(x).values()[0] == 0.0);
  }

  TEST_CASE("two-layer network gradients match finite differences") {
    Rng rng = make_rng(5);
    const Tensor x = random_tensor(6, 4, rng), y = random_tensor(6, 2, rng);
    std::vector<Tensor> w{random_tensor(4, 8, rng, 0.5), random_tensor(1, 8, rng, 0.1), random_tensor(8, 2, rng, 0.5)};
    auto net = [&](Tape& t, const std::vector<Var>& v) {
      const Var h = tanh(add(matmul(t.constant(x), v[0]), v[1]));
      return mse(matmul(h, v[2]), t.constant(y));
    };
    auto eval = [&](const std::vector<Tensor>& ws) {
      Tape t;
      return net(t, {t.constant(ws[0]), t.constant(ws[1]), t.constant(ws[2])}).value().item();
    };
    Tape tape;
    const std::vector<Var> v{tape.input(w[0]), tape.input(w[1]), tape.input(w[2])};
    tape.backward(net(tape, v));
    std::uniform_int_distribution<std::size_t> which(0, 2);
    for (int k = 0; k < 20; ++k) {
      const std::size_t m = which(rng);
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, w[m].size() - 1)(rng);
      auto wp = w, wm = w;
      wp[m][i] += 1e-5;
      wm[m][i] -= 1e-5;
      const double num = (eval(wp) - eval(wm)) / 2e-5;
      const double ana = tape.grad(v[m])[i];
      CHECK(std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-7}) < 1e-4);
    }
  }

  TEST_CASE("elementwise and structural ops pass finite-difference checks") {
    Rng rng = make_rng(6);
    const Tensor x = random_tensor(4, 3, rng);
    const Tensor row = random_tensor(1, 3, rng);
    const std::vector<std::pair<const char*, ScalarFn>> cases = {
        {"sigmoid", [](Tape&, Var v) { return sum(sigmoid(v)); }},
        {"tanh", [](Tape&, Var v) { return sum(square(tanh(v))); }},
        {"exp", [](Tape&, Var v) { return mean(exp(scale(v, 0.3))); }},
        {"relu", [](Tape&, Var v) { return sum(mul(relu(v), v)); }},
        {"broadcast row", [&](Tape& t, Var v) { return sum(square(mul(v, t.constant(row)))); }},
        {"broadcast scalar", [](Tape& t, Var v) { return sum(sub(v, t.constant(Tensor::scalar(0.5)))); }},
        {"row operand", [&](Tape& t, Var v) { return sum(square(add(t.constant(x), slice_rows(v, 1, 2)))); }},
        {"transpose", [](Tape& t, Var v) { return sum(square(matmul(transpose(v), t.constant(Tensor::identity(4))))); }},
        {"concat and slice", [](Tape&, Var v) {
           return sum(square(concat_cols({slice_cols(v, 2, 3), concat_rows({slice_rows(v, 0, 2), slice_rows(v, 2, 4)})})));
         }},
        {"mean rows", [](Tape&, Var v) { return sum(square(mean_rows(v))); }},
        {"repeat rows", [](Tape&, Var v) { return sum(square(repeat_rows(slice_rows(v, 0, 1), 3))); }},
        {"pairwise distances", [](Tape&, Var v) { return sum(exp(scale(pairwise_sq_dists(v), -0.5))); }},
        {"double center", [](Tape&, Var v) { return sum(square(double_center(matmul(v, transpose(v))))); }},
        {"add scalar", [](Tape&, Var v) { return sum(square(add_scalar(v, 2.0))); }},
    };
    for (const auto& [name, f] : cases) {
      CAPTURE(name);
      CHECK(fd_error(f, x) < 1e-6);
    }
  }

  TEST_CASE("shape mismatches raise") {
    Tape tape;
    const Var a = tape.constant(Tensor::matrix(2, 3));
    const Var b = tape.constant(Tensor::matrix(4, 2));
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(dropout_mask_apply(a, Tensor::matrix(3, 3)), ShapeError);
  }

  TEST_CASE("non-finite values are reported") {
    Tape tape;
    const Var a = tape.constant(Tensor::row({1000.0}));
    CHECK_THROWS_AS(exp(a), NumericError);
  }

  TEST_CASE("adamw: zero gradient and zero decay leave weights unchanged") {
    Tensor w = Tensor::row({0.3, -1.2});
    AdamWState st;
    adamw_step(w, Tensor::row({0.0, 0.0}), st, {0.1, 0.9, 0.999, 1e-8, 0.0});
    CHECK(w == Tensor::row({0.3, -1.2}));
  }

  TEST_CASE("adamw: first step has magnitude lr") {
    Tensor w = Tensor::scalar(1.0);
    AdamWState st;
    adamw_step(w, Tensor::scalar(2.0), st, {0.1, 0.9, 0.999, 1e-8, 0.0});
    CHECK(w.item() == doctest::Approx(0.9).epsilon(1e-7));
  }

  TEST_CASE("adamw: decoupled decay") {
    Tensor w = Tensor::scalar(2.0);
    AdamWState st;
    adamw_step(w, Tensor::scalar(0.0), st, {0.1, 0.9, 0.999, 1e-8, 0.1});
    CHECK(w.item() == doctest::Approx(2.0 * 0.99).epsilon(1e-14));
  }

  TEST_CASE("adamw class minimises a quadratic") {
    Tensor w = Tensor::row({3.0, -2.0});
    AdamW opt({&w}, {0.05, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 400; ++i) opt.step({Tensor::row({2.0 * w[0], 2.0 * w[1]})});
    CHECK(std::abs(w[0]) < 0.05);
    CHECK(std::abs(w[1]) < 0.05);
  }
}
