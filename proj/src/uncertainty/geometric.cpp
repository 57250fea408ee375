#include "ctsel/uncertainty/geometric.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ctsel/ad/adamw.hpp"
#include "ctsel/common/error.hpp"
#include "ctsel/models/train.hpp"

namespace ctsel::uncertainty {

models::SurrogateModel BezierCurve::point(double t) const {
  const double c0 = (1.0 - t) * (1.0 - t);
  const double c1 = 2.0 * t * (1.0 - t);
  const double c2 = t * t;
  std::vector<models::NamedTensor> w = start;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double* out = w[i].value.data();
    const double* a = start[i].value.data();
    const double* m = control[i].value.data();
    const double* b = end[i].value.data();
    for (std::size_t j = 0; j < w[i].value.size(); ++j) out[j] = c0 * a[j] + c1 * m[j] + c2 * b[j];
  }
  return models::SurrogateModel(arch, std::move(w));
}

BezierCurve fit_bezier_curve(const models::SurrogateModel& member_a, const models::SurrogateModel& member_b,
                             const data::Dataset& dataset, const GeometricConfig& config) {
  if (!(member_a.arch() == member_b.arch()))
    throw ValidationError("geometric ensemble endpoints must share one architecture");
  if (config.epochs == 0 || config.batch_size == 0) throw ValidationError("curve training needs epochs and batches");
  const models::Architecture& arch = member_a.arch();
  BezierCurve curve{arch, member_a.weights(), member_a.weights(), member_b.weights()};
  for (std::size_t i = 0; i < curve.control.size(); ++i) {
    double* m = curve.control[i].value.data();
    const double* b = curve.end[i].value.data();
    for (std::size_t j = 0; j < curve.control[i].value.size(); ++j) m[j] = 0.5 * m[j] + 0.5 * b[j];
  }

  const models::TrainingSet set = models::prepare_training_set(dataset.train, arch, dataset.grid());
  std::vector<ad::Tensor*> params;
  for (auto& nt : curve.control) params.push_back(&nt.value);
  ad::AdamW opt(params, ad::AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng shuffle_rng = make_rng(config.seed, {1});
  Rng dropout_rng = make_rng(config.seed, {2});
  Rng t_rng = make_rng(config.seed, {3});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> order(set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double t = unit(t_rng);
      const double c0 = (1.0 - t) * (1.0 - t), c1 = 2.0 * t * (1.0 - t), c2 = t * t;
      ad::Tape tape;
      models::WeightVars w;
      std::vector<ad::Var> control;
      for (std::size_t i = 0; i < curve.control.size(); ++i) {
        const ad::Var m = tape.weight(curve.control[i].value);
        control.push_back(m);
        w.push_back(ad::add(ad::add(ad::scale(tape.constant_ref(curve.start[i].value), c0), ad::scale(m, c1)),
                            ad::scale(tape.constant_ref(curve.end[i].value), c2)));
      }
      const ad::Var loss =
          models::batch_loss(tape, arch, w, set, std::span<const std::size_t>(order.data() + begin, end - begin),
                             models::Dropout{arch.dropout, &dropout_rng, {}}, 0.0);
      tape.backward(loss);
      std::vector<ad::Tensor> grads;
      for (const ad::Var& m : control) grads.push_back(tape.grad(m));
      opt.step(grads);
    }
  }
  return curve;
}

EnsembleHandle sample_curve(const BezierCurve& curve, std::size_t n_samples) {
  if (n_samples < 2) throw ValidationError("geometric ensemble needs at least 2 samples");
  EnsembleHandle h;
  h.method = Method::geometric;
  h.n_passes = n_samples;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n_samples - 1);
    h.members.push_back(std::make_shared<models::SurrogateModel>(curve.point(t)));
  }
  h.validate();
  return h;
}

EnsembleHandle build_geometric_ensemble(const models::SurrogateModel& member_a,
                                        const models::SurrogateModel& member_b, const data::Dataset& dataset,
                                        const GeometricConfig& config) {
  return sample_curve(fit_bezier_curve(member_a, member_b, dataset, config), config.n_samples);
}

}  // namespace ctsel::uncertainty
