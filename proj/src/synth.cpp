#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "lutkan/data.hpp"
#include "lutkan/error.hpp"
#include "lutkan/rng.hpp"
#include "lutkan/runtime.hpp"

namespace lutkan {

std::vector<double> fit_spline_lsq(std::span<const double> xs, std::span<const double> ys,
                                   const KnotGrid& grid) {
  grid.validate();
  if (xs.size() != ys.size()) throw Error(ErrorKind::input_shape, "fit: xs and ys differ in length");
  const auto p = static_cast<Eigen::Index>(grid.basis_count());
  if (static_cast<Eigen::Index>(xs.size()) < p) {
    throw Error(ErrorKind::fit, "fit needs at least G + k = " + std::to_string(p) + " samples");
  }
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  std::vector<double> basis(static_cast<std::size_t>(p));
  std::vector<double> scratch(static_cast<std::size_t>(grid.intervals() + 2 * grid.degree()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw Error(ErrorKind::fit, "fit samples must be finite");
    }
    bspline_basis(xs[i], grid, basis, scratch);
    const Eigen::Map<const Eigen::VectorXd> b(basis.data(), p);
    normal.selfadjointView<Eigen::Lower>().rankUpdate(b);
    rhs += ys[i] * b;
  }
  normal.triangularView<Eigen::StrictlyUpper>() = normal.transpose();
  for (Eigen::Index m = 0; m < p; ++m) {
    if (normal(m, m) == 0.0) {
      throw Error(ErrorKind::fit, "basis " + std::to_string(m) +
                                      " has no support among the samples; design is rank deficient");
    }
  }
  normal.diagonal().array() += kFitRidge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorKind::fit, "normal equations are not positive definite");
  }
  const Eigen::VectorXd c = ldlt.solve(rhs);
  if (!c.allFinite()) throw Error(ErrorKind::fit, "fit produced non-finite coefficients");
  return {c.data(), c.data() + p};
}

std::vector<std::size_t> default_topology() { return {78, 32, 16, 1}; }

ModelSpec synth_model(std::span<const std::size_t> topology, std::uint64_t seed,
                      const SynthOptions& options) {
  if (topology.size() < 2 || topology.back() != 1 ||
      std::any_of(topology.begin(), topology.end(), [](std::size_t n) { return n == 0; })) {
    throw Error(ErrorKind::config, "topology must list positive widths ending in 1");
  }
  Rng rng(seed);
  ModelSpec model;
  model.feature_count = topology.front();
  model.threshold = 0.5;
  model.metadata["name"] = "synthetic";
  model.metadata["seed"] = std::to_string(seed);
  std::string topo;
  for (std::size_t n : topology) topo += (topo.empty() ? "" : ",") + std::to_string(n);
  model.metadata["topology"] = topo;

  // Calibration activations drawn uniformly over the input domain.
  const std::size_t n_cal = std::max<std::size_t>(options.calibration_samples, 16);
  Rng cal_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix acts(n_cal, topology.front());
  for (double& v : acts.data()) v = cal_rng.uniform(options.domain_min, options.domain_max);

  for (std::size_t l = 0; l + 1 < topology.size(); ++l) {
    KanLayer layer;
    layer.n_in = topology[l];
    layer.n_out = topology[l + 1];
    double lo = options.domain_min, hi = options.domain_max;
    if (l > 0) {
      const auto [mn, mx] = std::minmax_element(acts.data().begin(), acts.data().end());
      const double span = std::max(*mx - *mn, 1e-6);
      lo = *mn - options.domain_margin * span;
      hi = *mx + options.domain_margin * span;
    }
    layer.grid = KnotGrid(lo, hi, options.intervals, options.degree);
    layer.edges.resize(layer.n_in * layer.n_out);
    for (auto& edge : layer.edges) {
      edge.base_scale = rng.uniform(-1.0, 1.0);
      edge.spline_scale = rng.uniform(-1.0, 1.0);
      edge.coefficients.resize(static_cast<std::size_t>(layer.grid.basis_count()));
      for (double& c : edge.coefficients) c = rng.uniform(-2.0, 2.0);
    }

    // Propagate the calibration batch through the new layer.
    Matrix next(n_cal, layer.n_out);
    for (std::size_t r = 0; r < n_cal; ++r) {
      for (std::size_t j = 0; j < layer.n_out; ++j) {
        double h = 0.0;
        for (std::size_t i = 0; i < layer.n_in; ++i) h += eval_phi(acts(r, i), layer.edge(i, j), layer.grid);
        next(r, j) = h;
      }
    }
    model.layers.push_back(std::move(layer));
    acts = std::move(next);
  }

  // Center the final logit: within the domain, adding delta to every
  // coefficient of an edge adds beta * delta to its output.
  std::vector<double> logits(acts.data());
  std::nth_element(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(logits.size() / 2),
                   logits.end());
  const double median = logits[logits.size() / 2];
  auto& last = model.layers.back();
  auto best = std::max_element(last.edges.begin(), last.edges.end(), [](const auto& a, const auto& b) {
    return std::fabs(a.spline_scale) < std::fabs(b.spline_scale);
  });
  if (best != last.edges.end() && std::fabs(best->spline_scale) > 1e-3) {
    const double delta = -median / best->spline_scale;
    for (double& c : best->coefficients) c += delta;
  }
  model.validate();
  return model;
}

Dataset synth_dataset(const ModelSpec& model, std::size_t rows, std::uint64_t seed,
                      double oob_fraction) {
  model.validate();
  if (!(oob_fraction >= 0.0 && oob_fraction < 1.0)) {
    throw Error(ErrorKind::config, "oob_fraction must lie in [0, 1)");
  }
  const auto& grid = model.layers.front().grid;
  const double lo = grid.domain_min(), hi = grid.domain_max(), width = hi - lo;
  Rng rng(seed);
  Dataset d;
  d.features = Matrix(rows, model.feature_count);
  for (double& v : d.features.data()) v = rng.uniform(lo, hi);
  for (std::size_t c = 0; c < model.feature_count; ++c) d.feature_names.push_back("f" + std::to_string(c));

  const auto n_oob = static_cast<std::size_t>(std::llround(oob_fraction * static_cast<double>(rows)));
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t t = 0; t < n_oob; ++t) {
    const std::size_t r = order[t];
    const std::size_t c = rng.index(model.feature_count);
    const double offset = 0.5 * width * (1.0 - rng.uniform01());  // (0, width / 2]
    d.features(r, c) = rng.uniform01() < 0.5 ? lo - offset : hi + offset;
  }
  d.labels = predict(forward_reference(model, d.features), model.threshold);
  return d;
}

}  // namespace lutkan
