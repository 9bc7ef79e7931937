#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lutkan/model.hpp"

namespace lutkan {

enum class QuantScheme : std::uint8_t { sym_int8 = 0, asym_uint8 = 1 };
enum class BoundaryMode : std::uint8_t { closed = 0, half_open = 1 };
enum class OobPolicy : std::uint8_t { clip_x = 0, zero_spline = 1 };
enum class ValueRepr : std::uint8_t { spline_component = 0, full_phi = 1 };

std::string_view to_string(QuantScheme v);
std::string_view to_string(BoundaryMode v);
std::string_view to_string(OobPolicy v);
std::string_view to_string(ValueRepr v);
QuantScheme parse_quant_scheme(std::string_view s);
BoundaryMode parse_boundary_mode(std::string_view s);
OobPolicy parse_oob_policy(std::string_view s);
ValueRepr parse_value_repr(std::string_view s);

inline constexpr int kMinLutSize = 2;
inline constexpr int kMaxLutSize = 65535;

/// Defaults are the recommended deployment point: L = 8, symmetric int8,
/// half-open segments, zero spline branch out of bounds.
struct CompileConfig {
  int lut_size = 8;
  QuantScheme quant = QuantScheme::sym_int8;
  BoundaryMode boundary = BoundaryMode::half_open;
  OobPolicy oob = OobPolicy::zero_spline;
  ValueRepr value_repr = ValueRepr::spline_component;

  void validate() const;
  bool operator==(const CompileConfig&) const = default;
};

/// How the quantization parameters are rounded. binary32 rounds the scale up
/// and v_min down to the nearest float first, so the stored parameters keep
/// the s/2 error bound exactly.
enum class ParamPrecision { binary64, binary32 };

struct SymmetricQuantized {
  std::vector<std::int8_t> values;
  double scale = 0.0;
};

struct AsymmetricQuantized {
  std::vector<std::uint8_t> values;
  double scale = 0.0;
  double v_min = 0.0;
};

/// Round half to even, independent of the floating-point environment.
double round_half_even(double v) noexcept;

SymmetricQuantized quantize_symmetric(std::span<const double> values,
                                      ParamPrecision precision = ParamPrecision::binary64);
AsymmetricQuantized quantize_asymmetric(std::span<const double> values,
                                        ParamPrecision precision = ParamPrecision::binary64);

/// Samples interior interval u of the edge at L uniformly spaced points,
/// both endpoints included.
std::vector<double> sample_segment(const EdgeFunction& edge, const KnotGrid& grid, int segment,
                                   int lut_size,
                                   ValueRepr repr = ValueRepr::spline_component);

/// Copy of one segment's table for inspection.
struct SegmentTable {
  double a = 0.0;
  double b = 0.0;
  QuantScheme scheme = QuantScheme::sym_int8;
  std::vector<int> values;
  float scale = 0.0f;
  std::optional<float> v_min;

  double dequantize(std::size_t q) const;
};

struct CompiledLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  double domain_min = 0.0;
  double domain_max = 1.0;
  int intervals = 1;
  int degree = 0;
  std::vector<float> alpha;  // per edge
  std::vector<float> beta;   // per edge
  std::vector<float> scale;  // per edge * G + segment
  std::vector<float> v_min;  // asym only, same indexing as scale
  std::vector<std::uint8_t> codes;  // (edge * G + segment) * L + q; int8 bit patterns for sym

  // Derived by derive(); not serialized. Rerun derive() after editing
  // the tables above.
  std::vector<double> boundaries;  // G + 1 interior knots
  std::vector<double> inv_delta;   // per segment, (L - 1) / (b - a)
  // Input-major copies for the runtime: all n_out edges of one input are
  // adjacent. codes: ((i * G + u) * L + q) * n_out + j; scales: (i * G + u) * n_out + j.
  std::vector<std::uint8_t> codes_by_input;
  std::vector<float> scale_by_input;
  std::vector<float> v_min_by_input;

  std::size_t edge_count() const noexcept { return n_in * n_out; }
  void derive(int lut_size);

  bool operator==(const CompiledLayer& o) const {
    return n_in == o.n_in && n_out == o.n_out && domain_min == o.domain_min &&
           domain_max == o.domain_max && intervals == o.intervals && degree == o.degree &&
           alpha == o.alpha && beta == o.beta && scale == o.scale && v_min == o.v_min &&
           codes == o.codes;
  }
};

struct CompiledModel {
  CompileConfig config;
  std::vector<CompiledLayer> layers;
  double threshold = 0.5;

  std::size_t feature_count() const { return layers.empty() ? 0 : layers.front().n_in; }
  std::size_t edge_count() const;
  SegmentTable segment(std::size_t layer, std::size_t edge, int u) const;
  double dequantize(std::size_t layer, std::size_t edge, int u, int q) const;

  /// Structural checks used after deserialization.
  void validate() const;

  bool operator==(const CompiledModel&) const = default;
};

CompiledModel compile(const ModelSpec& model, const CompileConfig& config);

struct MemoryBreakdown {
  std::size_t tables = 0;        // quantized table entries, one byte each
  std::size_t quant_params = 0;  // per-segment s (and v_min), binary32
  std::size_t scales = 0;        // per-edge alpha and beta, binary32
  std::size_t header = 0;        // file header, per-layer headers, threshold trailer
  std::size_t total = 0;         // equals the serialized size
};

MemoryBreakdown measure_memory(const CompiledModel& compiled);

/// "KLUT" little-endian binary format.
std::vector<std::uint8_t> serialize(const CompiledModel& compiled);
CompiledModel deserialize(std::span<const std::uint8_t> bytes);

void save_compiled(const CompiledModel& compiled, const std::filesystem::path& path);
CompiledModel load_compiled(const std::filesystem::path& path);

}  // namespace lutkan
