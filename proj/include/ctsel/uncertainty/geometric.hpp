#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctsel/data/dataset.hpp"
#include "ctsel/models/surrogate.hpp"
#include "ctsel/uncertainty/ensemble.hpp"

namespace ctsel::uncertainty {

struct GeometricConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::size_t n_samples = kDefaultPasses;
  std::uint64_t seed = 0;
};

/// Quadratic Bezier curve w(t) = (1-t)^2 w_a + 2t(1-t) theta + t^2 w_b in
/// weight space.
struct BezierCurve {
  models::Architecture arch;
  std::vector<models::NamedTensor> start;
  std::vector<models::NamedTensor> control;
  std::vector<models::NamedTensor> end;

  models::SurrogateModel point(double t) const;
};

/// Initialise the control point at the straight-line midpoint and train it to
/// minimise the expected training loss at t ~ Uniform(0, 1).
BezierCurve fit_bezier_curve(const models::SurrogateModel& member_a, const models::SurrogateModel& member_b,
                             const data::Dataset& dataset, const GeometricConfig& config);

/// Members sampled at t = k / (n_samples - 1), k = 0 .. n_samples - 1.
EnsembleHandle sample_curve(const BezierCurve& curve, std::size_t n_samples);

EnsembleHandle build_geometric_ensemble(const models::SurrogateModel& member_a,
                                        const models::SurrogateModel& member_b, const data::Dataset& dataset,
                                        const GeometricConfig& config = {});

}  // namespace ctsel::uncertainty
