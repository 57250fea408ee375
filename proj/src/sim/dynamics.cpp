#include "ctsel/sim/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace ctsel::sim {

namespace {

// Constants of the infusion profile I_external = theta * exp(-(5 - t) / 5).
constexpr double kInfusionOffset = 5.0;
constexpr double kInfusionScale = 5.0;

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool all_finite(const StateVector& v) {
  return std::all_of(v.begin(), v.end(), [](double c) { return std::isfinite(c); });
}

std::size_t steps_per_cycle(const TimeGrid& grid) {
  return static_cast<std::size_t>(std::llround(grid.cycle_length() / grid.dt));
}

}  // namespace

std::string_view to_string(System system) {
  switch (system) {
    case System::cvs:
      return "cvs";
    case System::covid:
      return "covid";
  }
  return "unknown";
}

System system_from_string(std::string_view name) {
  if (name == "cvs") return System::cvs;
  if (name == "covid") return System::covid;
  throw ValidationError("unknown system '" + std::string(name) + "' (expected cvs or covid)");
}

std::string_view to_string(DrugCoupling coupling) {
  return coupling == DrugCoupling::as_printed ? "as-printed" : "z4-substitution";
}

DrugCoupling drug_coupling_from_string(std::string_view name) {
  if (name == "as-printed") return DrugCoupling::as_printed;
  if (name == "z4-substitution") return DrugCoupling::z4_substitution;
  throw ValidationError("unknown drug coupling '" + std::string(name) +
                        "' (expected as-printed or z4-substitution)");
}

std::size_t TimeGrid::cycle_of_step(std::size_t step) const { return step / steps_per_cycle(*this); }

bool TimeGrid::is_cycle_start(std::size_t step) const { return step % steps_per_cycle(*this) == 0; }

double TimeGrid::cycle_start_time(std::size_t step) const {
  return time(cycle_of_step(step) * steps_per_cycle(*this));
}

std::size_t TimeGrid::substeps_for(System system) const {
  return substeps > 0 ? substeps : default_substeps(system);
}

void TimeGrid::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("grid: dt must be positive");
  if (n_obs < 2) throw ValidationError("grid: need at least 2 observed points");
  if (n_horizon < 1) throw ValidationError("grid: horizon must be at least 1 step");
  if (n_cycles < 1) throw ValidationError("grid: need at least one treatment cycle");
  const double per_cycle = cycle_length() / dt;
  if (per_cycle < 1.0 || std::abs(per_cycle - std::round(per_cycle)) > 1e-9)
    throw ValidationError("grid: cycle boundaries must fall on grid points (cycle length " +
                          std::to_string(cycle_length()) + ", dt " + std::to_string(dt) + ")");
}

std::size_t default_substeps(System system) { return system == System::covid ? 1000 : 10; }

CvsState cvs_derivative(const CvsState& state, double dose, double t_in_cycle, const CvsParams& p) {
  if (!all_finite(state.to_vector()) || !std::isfinite(dose) || !std::isfinite(t_in_cycle))
    throw DivergenceError("cvs_derivative: non-finite input");
  if (t_in_cycle < 0.0) throw ValidationError("cvs_derivative: t_in_cycle must be >= 0");

  const double r_tpr = state.s * (p.r_tpr_max - p.r_tpr_min) + p.r_tpr_min + p.r_tpr_mod;
  const double f_hr = state.s * (p.f_hr_max - p.f_hr_min) + p.f_hr_min;
  const double i_external = dose * std::exp(-(kInfusionOffset - t_in_cycle) / kInfusionScale);

  CvsState d;
  d.sv = i_external;
  d.pa = ((state.pa - state.pv) / r_tpr - state.sv * f_hr) / p.ca;
  d.pv = (-p.ca * d.pa + i_external) / p.cv;
  // 1 - 1/(1 + exp(-k (Pa - Pset))) == logistic(k (Pset - Pa))
  d.s = (logistic(p.k_width * (p.pa_set - state.pa)) - state.s) / p.tau_baro;
  return d;
}

CovidState covid_derivative(const CovidState& state, double dose_input, const CovidParams& p) {
  if (!all_finite(state.to_vector()) || !std::isfinite(dose_input))
    throw DivergenceError("covid_derivative: non-finite input");
  if (state.z1 < 0.0 || state.z2 < 0.0 || state.z3 < 0.0 || state.z4 < 0.0)
    throw ValidationError("covid_derivative: state components must be >= 0");
  if (dose_input < 0.0) throw ValidationError("covid_derivative: dose input must be >= 0");

  const double interaction = p.coupling == DrugCoupling::z4_substitution ? state.z4 : state.z3;
  const double z2_h = std::pow(state.z2, p.h_p);
  const double hill = p.k_ep * z2_h / (std::pow(p.k_cp, p.h_p) + z2_h);

  CovidState d;
  d.z1 = p.k_dp * state.z1 - p.k_di * state.z1 * interaction - p.k_dr * state.z1 * state.z2;
  d.z2 = p.k_id * state.z1 - p.k_io * state.z2 + p.k_if * state.z1 * state.z2 + hill -
         p.k_d * interaction * state.z2;
  d.z3 = p.k_im * state.z2;
  d.z4 = p.k_kel * dose_input - p.k_kel * state.z4;
  return d;
}

StateVector advance_interval(System system, const StateVector& state, double t0, double dt, std::size_t substeps,
                             double dose, double cycle_start, const SimParams& params) {
  if (substeps == 0) throw ValidationError("advance_interval: substeps must be >= 1");
  const double h = dt / static_cast<double>(substeps);
  StateVector y = state;
  if (system == System::cvs) {
    auto f = [&](const StateVector& v, double t) {
      return cvs_derivative(CvsState::from_vector(v), dose, t - cycle_start, params.cvs).to_vector();
    };
    for (std::size_t k = 0; k < substeps; ++k) {
      y = rk4_step(y, t0 + static_cast<double>(k) * h, h, f);
      y[3] = std::clamp(y[3], 0.0, 1.0);
    }
  } else {
    const double administered = std::max(0.0, dose);
    auto f = [&](const StateVector& v, double) {
      return covid_derivative(CovidState::from_vector(v), administered, params.covid).to_vector();
    };
    auto clip = [](const StateVector& v) {
      StateVector out{};
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i]);
      return out;
    };
    for (std::size_t k = 0; k < substeps; ++k) y = clip(rk4_step(y, t0 + static_cast<double>(k) * h, h, f, clip));
  }
  return y;
}

std::vector<StateVector> simulate_window(System system, const StateVector& state, std::size_t start_index,
                                         std::span<const double> doses, const TimeGrid& grid,
                                         const SimParams& params) {
  grid.validate();
  const std::size_t substeps = grid.substeps_for(system);
  std::vector<StateVector> out;
  out.reserve(doses.size());
  StateVector y = state;
  for (std::size_t k = 0; k < doses.size(); ++k) {
    const std::size_t step = start_index + k;
    y = advance_interval(system, y, grid.time(step), grid.dt, substeps, doses[k], grid.cycle_start_time(step),
                         params);
    out.push_back(y);
  }
  return out;
}

}  // namespace ctsel::sim
