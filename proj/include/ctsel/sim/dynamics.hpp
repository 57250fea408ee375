#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctsel/common/error.hpp"

namespace ctsel::sim {

enum class System { cvs, covid };

std::string_view to_string(System system);
System system_from_string(std::string_view name);

using StateVector = std::array<double, 4>;

/// Cardiovascular state: stroke volume, arterial and venous pressure, baroreflex tone.
struct CvsState {
  double sv = 0.0;
  double pa = 0.0;
  double pv = 0.0;
  double s = 0.0;

  StateVector to_vector() const { return {sv, pa, pv, s}; }
  static CvsState from_vector(const StateVector& v) { return {v[0], v[1], v[2], v[3]}; }
};

/// COVID-19 state: disease progression, immune reaction, immunity, drug concentration.
struct CovidState {
  double z1 = 0.0;
  double z2 = 0.0;
  double z3 = 0.0;
  double z4 = 0.0;

  StateVector to_vector() const { return {z1, z2, z3, z4}; }
  static CovidState from_vector(const StateVector& v) { return {v[0], v[1], v[2], v[3]}; }
};

/// Rows of the cardiovascular parameter table. The last seven belong to the
/// full Zenker model and are not used by the simplified equations.
struct CvsParams {
  double f_hr_max = 3.0;
  double f_hr_min = 0.6666;
  double r_tpr_max = 2.134;
  double r_tpr_min = 0.5335;
  double r_tpr_mod = 0.0;
  double sv_mod = 0.001;
  double ca = 4.0;
  double cv = 111.0;
  double k_width = 0.1838;
  double pa_set = 70.0;
  double tau_baro = 20.0;
  double p0_lv = 2.03;
  double r_valve = 0.0025;
  double k_elv = 0.066;
  double v_ed0 = 7.14;
  double t_sys = 0.2666;
  double cprsw_max = 103.8;
  double cprsw_min = 25.9;

  bool operator==(const CvsParams&) const = default;
};

/// How the drug compartment Z4 reaches the disease equations.
///  as_printed: Z3 in the k_di and k_d interaction terms (drug never feeds back).
///  z4_substitution: Z4 replaces Z3 in those two terms.
enum class DrugCoupling { as_printed, z4_substitution };

std::string_view to_string(DrugCoupling coupling);
DrugCoupling drug_coupling_from_string(std::string_view name);

struct CovidParams {
  double hill_cure = 2.0;
  double h_p = 2.0;
  double k_cp = 1.0;
  double k_ep = 1.0;
  double k_d = 1.0;
  double k_dp = 1.0;
  double k_dr = 1.0;
  double k_di = 1.0;
  double k_id = 1.0;
  double k_if = 1.0;
  double k_io = 1.0;
  double k_im = 1.0;
  double k_kel = 1.0;
  DrugCoupling coupling = DrugCoupling::z4_substitution;

  bool operator==(const CovidParams&) const = default;
};

struct SimParams {
  CvsParams cvs;
  CovidParams covid;

  bool operator==(const SimParams&) const = default;
};

/// Observation grid t = 0..(n_obs-1)*dt followed by n_horizon prediction
/// points. Treatment cycles tile the observation window and keep their period
/// in the horizon.
struct TimeGrid {
  double dt = 1.0;
  std::size_t n_obs = 31;
  std::size_t n_horizon = 10;
  std::size_t n_cycles = 5;
  /// RK4 sub-steps per grid interval; 0 selects the per-system default.
  std::size_t substeps = 0;

  std::size_t n_points() const { return n_obs + n_horizon; }
  std::size_t n_steps() const { return n_points() - 1; }
  /// Index of the last observed point t.
  std::size_t t_index() const { return n_obs - 1; }
  double time(std::size_t index) const { return static_cast<double>(index) * dt; }
  double observation_end() const { return time(t_index()); }
  double cycle_length() const { return observation_end() / static_cast<double>(n_cycles); }
  std::size_t cycle_of_step(std::size_t step) const;
  bool is_cycle_start(std::size_t step) const;
  double cycle_start_time(std::size_t step) const;
  std::size_t substeps_for(System system) const;

  void validate() const;
  bool operator==(const TimeGrid&) const = default;
};

std::size_t default_substeps(System system);

/// d/dt of the cardiovascular state. `t_in_cycle` is the time since the
/// current treatment cycle began.
CvsState cvs_derivative(const CvsState& state, double dose, double t_in_cycle, const CvsParams& params);

/// d/dt of the COVID-19 state. Requires a componentwise non-negative state.
CovidState covid_derivative(const CovidState& state, double dose_input, const CovidParams& params);

/// Classical four-stage Runge-Kutta step. `project` is applied to each
/// intermediate stage state before the derivative is evaluated (identity for
/// unconstrained systems).
struct IdentityProjection {
  StateVector operator()(const StateVector& v) const { return v; }
};

template <class Derivative, class Projection = IdentityProjection>
StateVector rk4_step(const StateVector& y, double t, double dt, Derivative&& derivative,
                     Projection&& project = Projection{}) {
  if (!(dt > 0.0)) throw ValidationError("rk4_step: dt must be positive, got " + std::to_string(dt));
  auto axpy = [](const StateVector& base, double h, const StateVector& k) {
    StateVector out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = base[i] + h * k[i];
    return out;
  };
  auto eval = [&derivative](const StateVector& v, double at) {
    try {
      return derivative(v, at);
    } catch (const DivergenceError& e) {
      if (!std::isnan(e.time())) throw;
      throw DivergenceError(e.what(), at);
    }
  };
  auto check = [t](const StateVector& v) {
    for (double c : v)
      if (!std::isfinite(c)) throw DivergenceError("non-finite state in RK4 stage", t);
  };
  const StateVector k1 = eval(y, t);
  check(k1);
  const StateVector k2 = eval(project(axpy(y, 0.5 * dt, k1)), t + 0.5 * dt);
  check(k2);
  const StateVector k3 = eval(project(axpy(y, 0.5 * dt, k2)), t + 0.5 * dt);
  check(k3);
  const StateVector k4 = eval(project(axpy(y, dt, k3)), t + dt);
  check(k4);
  StateVector next{};
  for (std::size_t i = 0; i < next.size(); ++i)
    next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  check(next);
  return next;
}

/// Advance one grid interval [t0, t0 + dt) with a constant dose, using
/// `substeps` RK4 steps. Applies the per-system post-step rule (CVS tone
/// clamped to [0,1]; COVID states clipped at 0).
StateVector advance_interval(System system, const StateVector& state, double t0, double dt, std::size_t substeps,
                             double dose, double cycle_start, const SimParams& params);

/// Integrate from `state` at grid index `start_index` with one dose per grid
/// interval. Returns the states at start_index+1 .. start_index+doses.size().
std::vector<StateVector> simulate_window(System system, const StateVector& state, std::size_t start_index,
                                         std::span<const double> doses, const TimeGrid& grid,
                                         const SimParams& params);

}  // namespace ctsel::sim
