#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lutkan/matrix.hpp"

namespace lutkan {

/// Augmented knot vector: G uniform interior intervals over
/// [domain_min, domain_max], extended by k more knots on each side with the
/// same spacing.
class KnotGrid {
 public:
  KnotGrid() = default;
  KnotGrid(double domain_min, double domain_max, int intervals, int degree);

  double domain_min() const noexcept { return domain_min_; }
  double domain_max() const noexcept { return domain_max_; }
  int intervals() const noexcept { return intervals_; }
  int degree() const noexcept { return degree_; }
  /// Number of coefficient-aligned bases, G + k.
  int basis_count() const noexcept { return intervals_ + degree_; }
  const std::vector<double>& knots() const noexcept { return knots_; }

  /// Start knot of interior interval u, i.e. t[k + u].
  double interval_start(int u) const { return knots_[static_cast<std::size_t>(degree_ + u)]; }
  double interval_end(int u) const { return knots_[static_cast<std::size_t>(degree_ + u + 1)]; }

  /// Throws Error(malformed_model) when any invariant is violated.
  void validate() const;

  bool operator==(const KnotGrid&) const = default;

 private:
  double domain_min_ = 0.0;
  double domain_max_ = 1.0;
  int intervals_ = 1;
  int degree_ = 0;
  std::vector<double> knots_;
};

struct EdgeFunction {
  double base_scale = 0.0;
  double spline_scale = 0.0;
  std::vector<double> coefficients;

  bool operator==(const EdgeFunction&) const = default;
};

/// One KAN layer; edges are row-major, edge (i, j) at index i * n_out + j.
struct KanLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  KnotGrid grid;
  std::vector<EdgeFunction> edges;

  const EdgeFunction& edge(std::size_t i, std::size_t j) const { return edges[i * n_out + j]; }
  EdgeFunction& edge(std::size_t i, std::size_t j) { return edges[i * n_out + j]; }

  bool operator==(const KanLayer&) const = default;
};

struct ModelSpec {
  std::vector<KanLayer> layers;
  double threshold = 0.5;
  std::size_t feature_count = 0;
  std::map<std::string, std::string> metadata;

  /// Checks all structural invariants, reporting the offending field path.
  void validate() const;
  std::vector<std::size_t> topology() const;
  std::size_t edge_count() const;
  /// Count of stored reals: per edge alpha, beta and G + k coefficients.
  std::size_t parameter_count() const;

  bool operator==(const ModelSpec&) const = default;
};

/// b(x) = x * sigmoid(x).
double silu(double x) noexcept;
/// Logistic function, saturating strictly inside (0, 1).
double sigmoid(double x) noexcept;

/// All G + k degree-k basis values at x via the full Cox-de Boor triangle.
std::vector<double> bspline_basis(double x, const KnotGrid& grid);

/// Non-allocating form; `out` holds G + k values, `scratch` at least G + 2k.
void bspline_basis(double x, const KnotGrid& grid, std::span<double> out,
                   std::span<double> scratch);

double eval_spline(double x, const KnotGrid& grid, std::span<const double> coeffs);
double eval_phi(double x, const EdgeFunction& edge, const KnotGrid& grid);

/// Exact float forward pass; returns one probability per row.
std::vector<double> forward_reference(const ModelSpec& model, const Matrix& batch,
                                      int threads = 0);

/// Pre-sigmoid output of the final layer for one sample.
double forward_reference_logit(const ModelSpec& model, std::span<const double> sample);

}  // namespace lutkan
