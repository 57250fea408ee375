#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctsel/ad/ops.hpp"
#include "ctsel/balancing/hsic.hpp"
#include "ctsel/common/error.hpp"

using namespace ctsel;
using namespace ctsel::ad;
using ctsel::balancing::hsic;
using ctsel::balancing::hsic_value;

namespace {

Tensor normals(std::size_t n, std::size_t d, Rng& rng) {
  std::normal_distribution<double> g;
  Tensor t = Tensor::matrix(n, d);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

Tensor permuted_rows(const Tensor& t, Rng& rng) {
  std::vector<std::size_t> idx(t.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Tensor out = Tensor::matrix(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out(i, j) = t(idx[i], j);
  return out;
}

// Quantile of 200 permutation-null estimates.
double null_quantile(const Tensor& u, const Tensor& v, double q, Rng& rng) {
  std::vector<double> null;
  for (int k = 0; k < 200; ++k) null.push_back(hsic_value(u, permuted_rows(v, rng)));
  std::sort(null.begin(), null.end());
  return null[static_cast<std::size_t>(q * (null.size() - 1))];
}

}  // namespace

TEST_SUITE("balancing") {
  TEST_CASE("constant second argument gives zero") {
    Rng rng = make_rng(1);
    const Tensor u = normals(30, 2, rng);
    CHECK(std::abs(hsic_value(u, Tensor::matrix(30, 1, 3.0))) < 1e-12);
  }

  TEST_CASE("median bandwidth") {
    CHECK(balancing::median_bandwidth(Tensor::matrix(3, 1, {0.0, 1.0, 3.0})) == doctest::Approx(2.0));
    CHECK(balancing::median_bandwidth(Tensor::matrix(4, 1, 1.0)) == balancing::kBandwidthFloor);
  }

  TEST_CASE("independent samples fall inside the permutation null") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng = make_rng(seed, {7});
      const Tensor u = normals(200, 1, rng), v = normals(200, 1, rng);
      CHECK(hsic_value(u, v) < null_quantile(u, v, 0.95, rng));
    }
  }

  TEST_CASE("dependent samples exceed the permutation null") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng = make_rng(seed, {8});
      const Tensor u = normals(200, 1, rng);
      CHECK(hsic_value(u, u) > null_quantile(u, u, 0.99, rng));
    }
  }

  TEST_CASE("hsic gradient matches finite differences") {
    Rng rng = make_rng(3);
    const Tensor u0 = normals(12, 1, rng), v = normals(12, 3, rng);
    balancing::HsicConfig cfg{1.1, 1.7};  // fixed bandwidths keep the estimate smooth
    Tape tape;
    const Var vu = tape.input(u0);
    const Var vv = tape.input(v);
    tape.backward(hsic(vu, vv, cfg));
    const Tensor gu = tape.grad(vu), gv = tape.grad(vv);
    auto value = [&](const Tensor& a, const Tensor& b) {
      Tape t;
      return hsic(t.constant(a), t.constant(b), cfg).value().item();
    };
    for (std::size_t i = 0; i < u0.size(); ++i) {
      Tensor p = u0, m = u0;
      p[i] += 1e-5;
      m[i] -= 1e-5;
      const double num = (value(p, v) - value(m, v)) / 2e-5;
      CHECK(std::abs(num - gu[i]) / std::max({std::abs(num), std::abs(gu[i]), 1e-8}) < 1e-4);
    }
    for (std::size_t i = 0; i < v.size(); i += 5) {
      Tensor p = v, m = v;
      p[i] += 1e-5;
      m[i] -= 1e-5;
      const double num = (value(u0, p) - value(u0, m)) / 2e-5;
      CHECK(std::abs(num - gv[i]) / std::max({std::abs(num), std::abs(gv[i]), 1e-8}) < 1e-4);
    }
  }

  TEST_CASE("hsic is non-negative and symmetric") {
    Rng rng = make_rng(4);
    const Tensor u = normals(40, 2, rng), v = normals(40, 3, rng);
    CHECK(hsic_value(u, v) >= 0.0);
    CHECK(hsic_value(u, v) == doctest::Approx(hsic_value(v, u)).epsilon(1e-12));
  }

  TEST_CASE("too few samples or mismatched rows raise") {
    Rng rng = make_rng(5);
    CHECK_THROWS_AS(hsic_value(normals(3, 1, rng), normals(3, 1, rng)), ValidationError);
    CHECK_THROWS(hsic_value(normals(8, 1, rng), normals(9, 1, rng)));
  }
}
