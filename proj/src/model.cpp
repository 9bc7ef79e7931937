#include "lutkan/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lutkan/error.hpp"
#include "lutkan/parallel.hpp"

namespace lutkan {

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorKind::malformed_model, what);
}

bool nearly_equal(double a, double b) {
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= 1e-12 * scale;
}

// Number of degree-0 intervals spanned by the augmented knot vector.
int cell_count(const KnotGrid& grid) { return grid.intervals() + 2 * grid.degree(); }

void basis_into(double x, const KnotGrid& grid, double* out, double* cells) {
  const auto& t = grid.knots();
  const int k = grid.degree();
  const int n0 = cell_count(grid);

  if (x == grid.domain_max()) {
    // The last interior interval is closed on the right.
    for (int m = 0; m < n0; ++m) cells[m] = 0.0;
    cells[k + grid.intervals() - 1] = 1.0;
  } else {
    for (int m = 0; m < n0; ++m) cells[m] = (t[m] <= x && x < t[m + 1]) ? 1.0 : 0.0;
  }

  for (int d = 1; d <= k; ++d) {
    const int count = n0 - d;
    for (int m = 0; m < count; ++m) {
      const double left_den = t[m + d] - t[m];
      const double right_den = t[m + d + 1] - t[m + 1];
      const double left = left_den != 0.0 ? (x - t[m]) / left_den * cells[m] : 0.0;
      const double right =
          right_den != 0.0 ? (t[m + d + 1] - x) / right_den * cells[m + 1] : 0.0;
      cells[m] = left + right;
    }
  }
  const int p = grid.basis_count();
  for (int m = 0; m < p; ++m) out[m] = cells[m];
}

struct EvalScratch {
  std::vector<double> basis;
  std::vector<double> cells;

  explicit EvalScratch(const KnotGrid& grid)
      : basis(static_cast<std::size_t>(grid.basis_count())),
        cells(static_cast<std::size_t>(cell_count(grid))) {}

  void fit(const KnotGrid& grid) {
    basis.resize(static_cast<std::size_t>(grid.basis_count()));
    cells.resize(static_cast<std::size_t>(cell_count(grid)));
  }
};

double phi_with_scratch(double x, const EdgeFunction& edge, const KnotGrid& grid,
                        EvalScratch& scratch) {
  basis_into(x, grid, scratch.basis.data(), scratch.cells.data());
  double spline = 0.0;
  const std::size_t p = scratch.basis.size();
  for (std::size_t m = 0; m < p; ++m) spline += edge.coefficients[m] * scratch.basis[m];
  return edge.base_scale * silu(x) + edge.spline_scale * spline;
}

double layer_stack_logit(const ModelSpec& model, std::span<const double> sample,
                         std::vector<double>& act, std::vector<double>& next,
                         EvalScratch& scratch) {
  act.assign(sample.begin(), sample.end());
  for (const auto& layer : model.layers) {
    scratch.fit(layer.grid);
    next.assign(layer.n_out, 0.0);
    for (std::size_t i = 0; i < layer.n_in; ++i) {
      const double x = act[i];
      for (std::size_t j = 0; j < layer.n_out; ++j) {
        next[j] += phi_with_scratch(x, layer.edge(i, j), layer.grid, scratch);
      }
    }
    act.swap(next);
  }
  return act[0];
}

void check_batch(const ModelSpec& model, const Matrix& batch) {
  if (batch.cols() != model.feature_count) {
    throw Error(ErrorKind::input_shape, "batch has " + std::to_string(batch.cols()) +
                                            " columns, model expects " +
                                            std::to_string(model.feature_count));
  }
  const auto& data = batch.data();
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (!std::isfinite(data[n])) {
      throw Error(ErrorKind::input_domain,
                  "non-finite input at row " + std::to_string(n / batch.cols()) + ", column " +
                      std::to_string(n % batch.cols()));
    }
  }
}

}  // namespace

KnotGrid::KnotGrid(double domain_min, double domain_max, int intervals, int degree)
    : domain_min_(domain_min), domain_max_(domain_max), intervals_(intervals), degree_(degree) {
  if (!std::isfinite(domain_min) || !std::isfinite(domain_max) || !(domain_min < domain_max)) {
    malformed("grid domain must be finite with domain_min < domain_max");
  }
  if (intervals < 1) malformed("grid G must be a positive integer");
  if (degree < 0) malformed("grid k must be a non-negative integer");
  const double width = domain_max - domain_min;
  const int count = intervals + 2 * degree + 1;
  knots_.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    knots_[static_cast<std::size_t>(i)] =
        domain_min + width * static_cast<double>(i - degree) / intervals;
  }
  knots_[static_cast<std::size_t>(degree)] = domain_min;
  knots_[static_cast<std::size_t>(degree + intervals)] = domain_max;
  validate();
}

void KnotGrid::validate() const {
  if (intervals_ < 1 || degree_ < 0) malformed("grid G must be >= 1 and k >= 0");
  if (knots_.size() != static_cast<std::size_t>(intervals_ + 2 * degree_ + 1)) {
    malformed("knot vector length must be G + 2k + 1");
  }
  for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i]) || !(knots_[i] < knots_[i + 1])) {
      malformed("knots must be finite and strictly increasing");
    }
  }
  if (!nearly_equal(knots_[static_cast<std::size_t>(degree_)], domain_min_) ||
      !nearly_equal(knots_[static_cast<std::size_t>(degree_ + intervals_)], domain_max_)) {
    malformed("knots[k] and knots[k+G] must equal the domain bounds");
  }
}

void ModelSpec::validate() const {
  if (feature_count == 0) malformed("feature_count: must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) malformed("threshold: must lie in (0, 1)");
  if (layers.empty()) malformed("layers: at least one layer required");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string path = "layers[" + std::to_string(l) + "]";
    if (layer.n_in == 0 || layer.n_out == 0) malformed(path + ": n_in and n_out must be positive");
    const std::size_t expected_in = l == 0 ? feature_count : layers[l - 1].n_out;
    if (layer.n_in != expected_in) {
      malformed(path + ".n_in: expected " + std::to_string(expected_in) + ", got " +
                std::to_string(layer.n_in));
    }
    layer.grid.validate();
    if (layer.edges.size() != layer.n_in * layer.n_out) {
      malformed(path + ".edges: expected n_in * n_out entries");
    }
    const auto p = static_cast<std::size_t>(layer.grid.basis_count());
    for (std::size_t e = 0; e < layer.edges.size(); ++e) {
      const auto& edge = layer.edges[e];
      const std::string epath = path + ".coeffs[" + std::to_string(e) + "]";
      if (edge.coefficients.size() != p) {
        malformed(epath + ": expected " + std::to_string(p) + " coefficients (G + k)");
      }
      if (!std::isfinite(edge.base_scale) || !std::isfinite(edge.spline_scale)) {
        malformed(path + ".alpha/beta[" + std::to_string(e) + "]: non-finite scale");
      }
      for (double c : edge.coefficients) {
        if (!std::isfinite(c)) malformed(epath + ": non-finite coefficient");
      }
    }
  }
  if (layers.back().n_out != 1) malformed("layers: last layer must have n_out == 1");
}

std::vector<std::size_t> ModelSpec::topology() const {
  std::vector<std::size_t> dims;
  if (layers.empty()) return dims;
  dims.push_back(layers.front().n_in);
  for (const auto& layer : layers) dims.push_back(layer.n_out);
  return dims;
}

std::size_t ModelSpec::edge_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.n_in * layer.n_out;
  return n;
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    n += layer.n_in * layer.n_out * static_cast<std::size_t>(2 + layer.grid.basis_count());
  }
  return n;
}

double sigmoid(double x) noexcept {
  double p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    p = e / (1.0 + e);
  }
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return p < lo ? lo : (p > hi ? hi : p);
}

double silu(double x) noexcept {
  if (x >= 0.0) return x / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return x * e / (1.0 + e);
}

std::vector<double> bspline_basis(double x, const KnotGrid& grid) {
  std::vector<double> out(static_cast<std::size_t>(grid.basis_count()));
  std::vector<double> cells(static_cast<std::size_t>(cell_count(grid)));
  bspline_basis(x, grid, out, cells);
  return out;
}

void bspline_basis(double x, const KnotGrid& grid, std::span<double> out,
                   std::span<double> scratch) {
  grid.validate();
  if (out.size() != static_cast<std::size_t>(grid.basis_count()) ||
      scratch.size() < static_cast<std::size_t>(cell_count(grid))) {
    throw Error(ErrorKind::input_shape, "bspline_basis: output or scratch span too small");
  }
  basis_into(x, grid, out.data(), scratch.data());
}

double eval_spline(double x, const KnotGrid& grid, std::span<const double> coeffs) {
  if (coeffs.size() != static_cast<std::size_t>(grid.basis_count())) {
    malformed("eval_spline: expected " + std::to_string(grid.basis_count()) +
              " coefficients, got " + std::to_string(coeffs.size()));
  }
  const auto basis = bspline_basis(x, grid);
  double sum = 0.0;
  for (std::size_t m = 0; m < basis.size(); ++m) sum += coeffs[m] * basis[m];
  return sum;
}

double eval_phi(double x, const EdgeFunction& edge, const KnotGrid& grid) {
  return edge.base_scale * silu(x) + edge.spline_scale * eval_spline(x, grid, edge.coefficients);
}

double forward_reference_logit(const ModelSpec& model, std::span<const double> sample) {
  if (sample.size() != model.feature_count) {
    throw Error(ErrorKind::input_shape, "sample width does not match feature_count");
  }
  std::vector<double> act, next;
  EvalScratch scratch(model.layers.front().grid);
  return layer_stack_logit(model, sample, act, next, scratch);
}

std::vector<double> forward_reference(const ModelSpec& model, const Matrix& batch, int threads) {
  check_batch(model, batch);
  std::vector<double> probs(batch.rows());
  parallel_rows(batch.rows(), resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
    std::vector<double> act, next;
    EvalScratch scratch(model.layers.front().grid);
    for (std::size_t n = begin; n < end; ++n) {
      probs[n] = sigmoid(layer_stack_logit(model, batch.row(n), act, next, scratch));
    }
  });
  return probs;
}

}  // namespace lutkan
