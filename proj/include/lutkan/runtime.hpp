#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lutkan/compiler.hpp"
#include "lutkan/matrix.hpp"

namespace lutkan {

/// Counters for one forward_lut call.
struct InferenceStats {
  std::uint64_t total_inputs = 0;       // input-layer feature values seen (N * d)
  std::uint64_t oob_events = 0;         // input-layer feature values outside the domain
  std::uint64_t clipped_events = 0;     // OOB lookups (any layer) resolved by clip_x
  std::uint64_t hidden_oob_events = 0;  // hidden-layer activations outside the next domain

  InferenceStats& operator+=(const InferenceStats& o);
  bool operator==(const InferenceStats&) const = default;
};

inline constexpr int kOutOfBounds = -1;

/// Segment index for x among the interior intervals delimited by
/// `boundaries` (G + 1 increasing knots), or kOutOfBounds. Interior knots
/// belong to the segment on their right in both modes; closed mode maps
/// the upper domain bound to G - 1, half_open treats it as OOB.
int locate_segment(double x, std::span<const double> boundaries, BoundaryMode mode);
int locate_segment(double x, double domain_min, double domain_max, int intervals,
                   BoundaryMode mode);

/// φ(x) for one compiled edge, including OOB handling.
double lut_eval(double x, const CompiledModel& model, std::size_t layer, std::size_t edge);

struct LutResult {
  std::vector<double> probabilities;
  InferenceStats stats;
};

LutResult forward_lut(const CompiledModel& model, const Matrix& batch, int threads = 0);

/// 1 iff p >= threshold.
std::vector<int> predict(std::span<const double> probabilities, double threshold);

/// Per-row flag: true when any input feature is OOB for the first layer.
std::vector<bool> oob_rows(const Matrix& batch, double domain_min, double domain_max,
                           BoundaryMode mode);

}  // namespace lutkan
