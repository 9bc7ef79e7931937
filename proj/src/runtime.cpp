#include "lutkan/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "lutkan/error.hpp"
#include "lutkan/model.hpp"
#include "lutkan/parallel.hpp"

namespace lutkan {

namespace {

// Everything about one input value that all edges of a layer share.
struct Lookup {
  int segment = 0;
  int q = 0;
  double lambda = 0.0;
  double base = 0.0;       // b(x) at the original x
  double base_clip = 0.0;  // b(x) at the clipped x (full_phi + clip_x only)
  bool spline_on = true;
  bool oob = false;
  bool clipped = false;
};

Lookup prepare(double x, const CompiledLayer& layer, const CompileConfig& config) {
  Lookup lk;
  lk.base = silu(x);
  const int L = config.lut_size;
  const int seg = locate_segment(x, layer.boundaries, config.boundary);
  if (seg != kOutOfBounds) {
    const double pos = (x - layer.boundaries[static_cast<std::size_t>(seg)]) *
                       layer.inv_delta[static_cast<std::size_t>(seg)];
    const double fl = std::floor(pos);
    const int q = std::clamp(static_cast<int>(fl), 0, L - 2);
    lk.segment = seg;
    lk.q = q;
    lk.lambda = std::clamp(pos - q, 0.0, 1.0);
    return lk;
  }
  lk.oob = true;
  if (config.oob == OobPolicy::zero_spline) {
    lk.spline_on = false;
    return lk;
  }
  lk.clipped = true;
  if (x < layer.domain_min) {
    lk.segment = 0;
    lk.q = 0;
    lk.lambda = 0.0;
    lk.base_clip = silu(layer.domain_min);
  } else {
    lk.segment = layer.intervals - 1;
    lk.q = L - 2;
    lk.lambda = 1.0;
    lk.base_clip = silu(layer.domain_max);
  }
  return lk;
}

// Adds φ for edges (i, j0 .. j0 + count) to out[0 .. count).
template <QuantScheme Q, ValueRepr R>
void accumulate_edges(const CompiledLayer& layer, std::size_t L, const Lookup& lk, std::size_t i,
                      std::size_t j0, std::size_t count, double* out) {
  const std::size_t n_out = layer.n_out;
  const float* alpha = layer.alpha.data() + i * n_out + j0;
  if (!lk.spline_on) {
    for (std::size_t j = 0; j < count; ++j) out[j] += alpha[j] * lk.base;
    return;
  }
  const auto G = static_cast<std::size_t>(layer.intervals);
  const std::size_t seg = i * G + static_cast<std::size_t>(lk.segment);
  const float* scale = layer.scale_by_input.data() + seg * n_out + j0;
  const std::uint8_t* c0 = layer.codes_by_input.data() +
                           (seg * L + static_cast<std::size_t>(lk.q)) * n_out + j0;
  const std::uint8_t* c1 = c0 + n_out;
  const double lambda = lk.lambda;
  const double mu = 1.0 - lambda;
  const double base = lk.base;

  if constexpr (R == ValueRepr::full_phi) {
    const double shift = lk.clipped ? base - lk.base_clip : 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      double v0, v1;
      if constexpr (Q == QuantScheme::sym_int8) {
        v0 = scale[j] * static_cast<double>(static_cast<std::int8_t>(c0[j]));
        v1 = scale[j] * static_cast<double>(static_cast<std::int8_t>(c1[j]));
      } else {
        const float* v_min = layer.v_min_by_input.data() + seg * n_out + j0;
        v0 = static_cast<double>(v_min[j]) + scale[j] * static_cast<double>(c0[j]);
        v1 = static_cast<double>(v_min[j]) + scale[j] * static_cast<double>(c1[j]);
      }
      const double interp = mu * v0 + lambda * v1;
      out[j] += lk.clipped ? interp + alpha[j] * shift : interp;
    }
  } else {
    const float* beta = layer.beta.data() + i * n_out + j0;
    for (std::size_t j = 0; j < count; ++j) {
      double v0, v1;
      if constexpr (Q == QuantScheme::sym_int8) {
        v0 = scale[j] * static_cast<double>(static_cast<std::int8_t>(c0[j]));
        v1 = scale[j] * static_cast<double>(static_cast<std::int8_t>(c1[j]));
      } else {
        const float* v_min = layer.v_min_by_input.data() + seg * n_out + j0;
        v0 = static_cast<double>(v_min[j]) + scale[j] * static_cast<double>(c0[j]);
        v1 = static_cast<double>(v_min[j]) + scale[j] * static_cast<double>(c1[j]);
      }
      const double interp = mu * v0 + lambda * v1;
      out[j] += alpha[j] * base + beta[j] * interp;
    }
  }
}

void accumulate(const CompiledLayer& layer, const CompileConfig& config, const Lookup& lk,
                std::size_t i, std::size_t j0, std::size_t count, double* out) {
  const auto L = static_cast<std::size_t>(config.lut_size);
  const bool sym = config.quant == QuantScheme::sym_int8;
  using QS = QuantScheme;
  using VR = ValueRepr;
  if (config.value_repr == VR::full_phi) {
    sym ? accumulate_edges<QS::sym_int8, VR::full_phi>(layer, L, lk, i, j0, count, out)
        : accumulate_edges<QS::asym_uint8, VR::full_phi>(layer, L, lk, i, j0, count, out);
  } else {
    sym ? accumulate_edges<QS::sym_int8, VR::spline_component>(layer, L, lk, i, j0, count, out)
        : accumulate_edges<QS::asym_uint8, VR::spline_component>(layer, L, lk, i, j0, count, out);
  }
}

void check_batch(const CompiledModel& model, const Matrix& batch) {
  if (batch.cols() != model.feature_count()) {
    throw Error(ErrorKind::input_shape, "batch has " + std::to_string(batch.cols()) +
                                            " columns, compiled model expects " +
                                            std::to_string(model.feature_count()));
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

InferenceStats& InferenceStats::operator+=(const InferenceStats& o) {
  total_inputs += o.total_inputs;
  oob_events += o.oob_events;
  clipped_events += o.clipped_events;
  hidden_oob_events += o.hidden_oob_events;
  return *this;
}

int locate_segment(double x, std::span<const double> boundaries, BoundaryMode mode) {
  const std::size_t n = boundaries.size();
  if (n < 2) return kOutOfBounds;
  const double lo = boundaries.front();
  const double hi = boundaries.back();
  if (!(x >= lo) || x > hi) return kOutOfBounds;
  const int G = static_cast<int>(n - 1);
  if (x == hi) return mode == BoundaryMode::closed ? G - 1 : kOutOfBounds;
  int seg = static_cast<int>((x - lo) / (hi - lo) * G);
  seg = std::clamp(seg, 0, G - 1);
  while (seg > 0 && x < boundaries[static_cast<std::size_t>(seg)]) --seg;
  while (seg < G - 1 && x >= boundaries[static_cast<std::size_t>(seg) + 1]) ++seg;
  return seg;
}

int locate_segment(double x, double domain_min, double domain_max, int intervals,
                   BoundaryMode mode) {
  const KnotGrid grid(domain_min, domain_max, intervals, 0);
  return locate_segment(x, grid.knots(), mode);
}

double lut_eval(double x, const CompiledModel& model, std::size_t layer, std::size_t edge) {
  const auto& l = model.layers.at(layer);
  if (edge >= l.edge_count()) throw Error(ErrorKind::range, "edge index out of range");
  const Lookup lk = prepare(x, l, model.config);
  double value = 0.0;
  accumulate(l, model.config, lk, edge / l.n_out, edge % l.n_out, 1, &value);
  return value;
}

LutResult forward_lut(const CompiledModel& model, const Matrix& batch, int threads) {
  check_batch(model, batch);
  LutResult result;
  result.probabilities.resize(batch.rows());
  std::mutex stats_mutex;
  const auto& config = model.config;

  parallel_rows(batch.rows(), resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
    const std::size_t rows = end - begin;
    InferenceStats stats;
    stats.total_inputs = rows * batch.cols();
    std::vector<double> act(batch.data().begin() + static_cast<std::ptrdiff_t>(begin * batch.cols()),
                            batch.data().begin() + static_cast<std::ptrdiff_t>(end * batch.cols()));
    std::vector<double> next;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const auto& layer = model.layers[l];
      const std::size_t n_in = layer.n_in;
      const std::size_t n_out = layer.n_out;
      next.assign(rows * n_out, 0.0);
      for (std::size_t i = 0; i < n_in; ++i) {
        for (std::size_t r = 0; r < rows; ++r) {
          const Lookup lk = prepare(act[r * n_in + i], layer, config);
          if (lk.oob) {
            if (l == 0) {
              ++stats.oob_events;
            } else {
              ++stats.hidden_oob_events;
            }
            if (lk.clipped) ++stats.clipped_events;
          }
          accumulate(layer, config, lk, i, 0, n_out, next.data() + r * n_out);
        }
      }
      act.swap(next);
    }
    for (std::size_t r = 0; r < rows; ++r) result.probabilities[begin + r] = sigmoid(act[r]);
    std::lock_guard lock(stats_mutex);
    result.stats += stats;
  });
  return result;
}

std::vector<int> predict(std::span<const double> probabilities, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorKind::config, "threshold must lie in (0, 1)");
  }
  std::vector<int> labels(probabilities.size());
  for (std::size_t n = 0; n < probabilities.size(); ++n) {
    labels[n] = probabilities[n] >= threshold ? 1 : 0;
  }
  return labels;
}

std::vector<bool> oob_rows(const Matrix& batch, double domain_min, double domain_max,
                           BoundaryMode mode) {
  std::vector<bool> flags(batch.rows(), false);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    for (double x : batch.row(r)) {
      const bool outside =
          x < domain_min || x > domain_max || (x == domain_max && mode == BoundaryMode::half_open);
      if (outside) {
        flags[r] = true;
        break;
      }
    }
  }
  return flags;
}

}  // namespace lutkan
