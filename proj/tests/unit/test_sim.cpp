#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ctsel/common/error.hpp"
#include "ctsel/sim/dynamics.hpp"
#include "ctsel/sim/trajectory.hpp"

using namespace ctsel;
using namespace ctsel::sim;

namespace {

// Hand evaluation of the four cardiovascular equations with the table values.
std::array<double, 4> cvs_oracle(double sv, double pa, double pv, double s, double theta, double t) {
  const double r = s * (2.134 - 0.5335) + 0.5335 + 0.0;
  const double f = s * (3.0 - 0.6666) + 0.6666;
  const double i_ext = theta * std::exp(-(5.0 - t) / 5.0);
  const double dpa = ((pa - pv) / r - sv * f) / 4.0;
  const double dpv = (-4.0 * dpa + i_ext) / 111.0;
  const double ds = (1.0 - 1.0 / (1.0 + std::exp(-0.1838 * (pa - 70.0))) - s) / 20.0;
  return {i_ext, dpa, dpv, ds};
}

double max_rel_error(const StateVector& a, const StateVector& ref) {
  double e = 0.0;
  for (std::size_t i = 0; i < 4; ++i) e = std::max(e, std::abs(a[i] - ref[i]) / std::max(std::abs(ref[i]), 1e-12));
  return e;
}

StateVector integrate(System system, const StateVector& y0, std::size_t steps, std::size_t substeps, double dose) {
  TimeGrid grid;
  grid.substeps = substeps;
  const std::vector<double> doses(steps, dose);
  return simulate_window(system, y0, 0, doses, grid, SimParams{}).back();
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("cvs derivative: zero dose leaves stroke volume constant") {
    const auto d = cvs_derivative({0.95, 0.8, 0.5, 0.2}, 0.0, 1.5, CvsParams{});
    CHECK(d.sv == 0.0);
  }

  TEST_CASE("cvs derivative: equal pressures remove the resistance term") {
    const CvsParams p;
    const CvsState s{0.9, 0.6, 0.6, 0.3};
    const auto d = cvs_derivative(s, 0.0, 0.0, p);
    const double f = s.s * (p.f_hr_max - p.f_hr_min) + p.f_hr_min;
    CHECK(d.pa == -s.sv * f / p.ca);
  }

  TEST_CASE("cvs derivative matches hand evaluation") {
    const auto d = cvs_derivative({0.95, 0.8, 0.5, 0.2}, 0.5, 0.0, CvsParams{});
    const auto o = cvs_oracle(0.95, 0.8, 0.5, 0.2, 0.5, 0.0);
    CHECK(d.sv == doctest::Approx(o[0]).epsilon(1e-12));
    CHECK(d.pa == doctest::Approx(o[1]).epsilon(1e-12));
    CHECK(d.pv == doctest::Approx(o[2]).epsilon(1e-12));
    CHECK(d.s == doctest::Approx(o[3]).epsilon(1e-12));
    CHECK(d.sv == doctest::Approx(0.18393972).epsilon(1e-7));
    CHECK(d.pa == doctest::Approx(-0.18129083).epsilon(1e-7));
    CHECK(d.pv == doctest::Approx(0.00819012).epsilon(1e-6));
    CHECK(d.s == doctest::Approx(0.03999985).epsilon(1e-6));
  }

  TEST_CASE("cvs derivative rejects non-finite state") {
    CHECK_THROWS_AS(cvs_derivative({NAN, 0.8, 0.5, 0.2}, 0.5, 0.0, CvsParams{}), DivergenceError);
  }

  TEST_CASE("covid derivative: origin is a fixed point") {
    const auto d = covid_derivative({0, 0, 0, 0}, 0.0, CovidParams{});
    CHECK(d.z1 == 0.0);
    CHECK(d.z2 == 0.0);
    CHECK(d.z3 == 0.0);
    CHECK(d.z4 == 0.0);
  }

  TEST_CASE("covid derivative: Hill term at half saturation") {
    CovidParams p;
    p.k_io = 0.0;
    p.k_ep = 3.0;
    p.k_cp = 2.0;
    const auto d = covid_derivative({0, 2.0, 0, 0}, 0.0, p);
    CHECK(d.z2 == doctest::Approx(1.5).epsilon(1e-14));
  }

  TEST_CASE("covid derivative with unit state and parameters") {
    // dZ1 = 1 - 1 - 1, dZ2 = 1 - 1 + 1 + 1/2 - 1, dZ3 = 1, dZ4 = 1 - 1
    for (auto coupling : {DrugCoupling::as_printed, DrugCoupling::z4_substitution}) {
      CovidParams p;
      p.coupling = coupling;
      const auto d = covid_derivative({1, 1, 1, 1}, 1.0, p);
      CHECK(d.z1 == doctest::Approx(-1.0));
      CHECK(d.z2 == doctest::Approx(0.5));
      CHECK(d.z3 == doctest::Approx(1.0));
      CHECK(d.z4 == doctest::Approx(0.0));
    }
  }

  TEST_CASE("covid derivative rejects negative state") {
    CHECK_THROWS_AS(covid_derivative({1, -0.1, 1, 1}, 1.0, CovidParams{}), ValidationError);
  }

  TEST_CASE("rk4 on exponential decay") {
    const auto y = rk4_step({1, 0, 0, 0}, 0.0, 0.1, [](const StateVector& v, double) {
      return StateVector{-v[0], 0, 0, 0};
    });
    CHECK(y[0] == doctest::Approx(0.90483750).epsilon(1e-9));
    CHECK(std::abs(y[0] - std::exp(-0.1)) < 1e-7);
  }

  TEST_CASE("rk4 with zero derivative keeps the state") {
    const StateVector y0{0.3, -2.0, 7.0, 1e-9};
    const auto y = rk4_step(y0, 4.0, 1.0, [](const StateVector&, double) { return StateVector{}; });
    CHECK(y == y0);
  }

  TEST_CASE("rk4 divergence carries the time") {
    auto blowup = [](const StateVector& v, double) { return StateVector{v[0] * 1e308, 0, 0, 0}; };
    try {
      rk4_step({1e10, 0, 0, 0}, 3.0, 1.0, blowup);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.time() >= 3.0);
      CHECK(e.time() <= 4.0);
    }
    CHECK_THROWS_AS(rk4_step({1, 0, 0, 0}, 0.0, 0.0, blowup), ValidationError);
  }

  TEST_CASE("cvs trajectory at dt = 1 matches a dt = 0.01 reference") {
    const StateVector y0{0.95, 0.8, 0.5, 0.2};
    const auto coarse = integrate(System::cvs, y0, 40, 1, 0.6);
    const auto ref = integrate(System::cvs, y0, 40, 100, 0.6);
    CHECK(max_rel_error(coarse, ref) < 1e-3);
  }

  TEST_CASE("halving the step shrinks the error at fourth order") {
    const StateVector cvs0{0.95, 0.8, 0.5, 0.2};
    const StateVector covid0{0.2, 0.1, 0.5, 0.9};
    for (auto [system, y0] : {std::pair{System::cvs, cvs0}, std::pair{System::covid, covid0}}) {
      CAPTURE(to_string(system));
      const auto ref = integrate(system, y0, 10, 200, 0.7);
      const double e1 = max_rel_error(integrate(system, y0, 10, 1, 0.7), ref);
      const double e2 = max_rel_error(integrate(system, y0, 10, 2, 0.7), ref);
      CHECK(e1 / e2 >= 8.0);
    }
  }

  TEST_CASE("zero doses give the untreated dynamics") {
    const TimeGrid grid;
    const StateVector y0{0.92, 0.78, 0.4, 0.18};
    const std::vector<double> zeros(grid.n_steps(), 0.0);
    const auto traj = simulate_trajectory(System::cvs, y0, zeros, grid, SimParams{});
    StateVector y = y0;
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
      for (std::size_t j = 0; j < 10; ++j)
        y = rk4_step(y, 0.0, 0.1, [](const StateVector& v, double) {
          return cvs_derivative(CvsState::from_vector(v), 0.0, 0.0, CvsParams{}).to_vector();
        });
      y[3] = std::clamp(y[3], 0.0, 1.0);
      REQUIRE(traj.y[k + 1][0] == doctest::Approx(y[2]).epsilon(1e-12));
    }
    CHECK(traj.y.size() == grid.n_points());
  }

  TEST_CASE("identical inputs give bit-identical trajectories") {
    const TimeGrid grid;
    DoseSchedule s{{0.1, 0.4, 0.2, 0.9, 0.5}, std::vector<double>(grid.n_horizon, 0.3)};
    for (System sys : {System::cvs, System::covid}) {
      const StateVector y0 = sys == System::cvs ? StateVector{0.95, 0.8, 0.5, 0.2} : StateVector{80, 40, 120, 20};
      CHECK(simulate_trajectory(sys, y0, s, grid, SimParams{}) == simulate_trajectory(sys, y0, s, grid, SimParams{}));
    }
  }

  TEST_CASE("counterfactual pair shares the prefix where schedules agree") {
    const TimeGrid grid;
    const StateVector y0{0.95, 0.8, 0.5, 0.2};
    DoseSchedule a{{0.1, 0.4, 0.2, 0.9, 0.5}, std::vector<double>(grid.n_horizon, 0.3)};
    DoseSchedule b = a;
    b.cycle_doses[3] = 0.05;  // cycles start every 6 steps, so the schedules agree on [0, 18]
    const auto ta = simulate_trajectory(System::cvs, y0, a, grid, SimParams{});
    const auto tb = simulate_trajectory(System::cvs, y0, b, grid, SimParams{});
    for (std::size_t i = 0; i <= 18; ++i) CHECK(ta.state[i] == tb.state[i]);
    CHECK(ta.state[19] != tb.state[19]);
  }

  TEST_CASE("outcome channels and history views") {
    const TimeGrid grid;
    CHECK(grid.t_index() == 30);
    CHECK(grid.n_points() == 41);
    CHECK(grid.cycle_length() == 6.0);
    const StateVector y0{0.95, 0.8, 0.5, 0.2};
    DoseSchedule s{{0.1, 0.4, 0.2, 0.9, 0.5}, std::vector<double>(grid.n_horizon, 0.3)};
    const auto traj = simulate_trajectory(System::cvs, y0, s, grid, SimParams{});
    CHECK(traj.y[0][0] == y0[2]);  // venous pressure
    const auto h = history_at(traj, 30);
    CHECK(h.y.size() == 31);
    CHECK(h.a.size() == 30);
    CHECK(future_treatments(traj, 30, 10) == std::vector<double>(10, 0.3));
    CHECK(future_outcomes(traj, 30, 10).size() == 10);
    CHECK(traj.a[12][0] == 0.2);
  }

  TEST_CASE("cvs tone stays in [0, 1] and covid states stay non-negative") {
    const TimeGrid grid;
    DoseSchedule s{{1.0, 0.0, 1.0, 0.0, 1.0}, std::vector<double>(grid.n_horizon, -0.5)};
    const auto cvs = simulate_trajectory(System::cvs, {1.0, 0.85, 0.3, 0.25}, s, grid, SimParams{});
    for (const auto& st : cvs.state) {
      CHECK(st[3] >= 0.0);
      CHECK(st[3] <= 1.0);
    }
    const auto covid = simulate_trajectory(System::covid, {300, 5, 1, 200}, s, grid, SimParams{});
    for (const auto& st : covid.state)
      for (double v : st) CHECK(v >= 0.0);
  }
}
