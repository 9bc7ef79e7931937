#include "lutkan/compiler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "lutkan/error.hpp"

namespace lutkan {

namespace {

constexpr std::uint16_t kFormatVersion = 1;
constexpr std::size_t kFileHeaderBytes = 4 + 2 + 1 + 1 + 1 + 1 + 2 + 2;
constexpr std::size_t kLayerHeaderBytes = 4 + 4 + 8 + 8 + 2 + 2;
constexpr std::size_t kTrailerBytes = 8;

[[noreturn]] void compile_error(const std::string& what) {
  throw Error(ErrorKind::compile, what);
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorKind::malformed_model, "compiled model: " + what);
}

void require_finite(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      compile_error("non-finite table value at index " + std::to_string(i));
    }
  }
}

float float_at_least(double v) {
  if (v > static_cast<double>(std::numeric_limits<float>::max())) {
    compile_error("quantization parameter exceeds binary32 range");
  }
  float f = static_cast<float>(v);
  if (static_cast<double>(f) < v) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  return f;
}

float float_at_most(double v) {
  if (std::fabs(v) > static_cast<double>(std::numeric_limits<float>::max())) {
    compile_error("quantization parameter exceeds binary32 range");
  }
  float f = static_cast<float>(v);
  if (static_cast<double>(f) > v) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return f;
}

template <typename E>
E enum_from(std::string_view s, std::initializer_list<std::pair<std::string_view, E>> table,
            const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  std::string options;
  for (const auto& [name, value] : table) {
    if (!options.empty()) options += ", ";
    options += name;
  }
  throw Error(ErrorKind::config,
              std::string("unknown ") + what + " '" + std::string(s) + "' (expected one of " +
                  options + ")");
}

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { out_.reserve(reserve); }

  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) malformed(std::string("truncated while reading ") + what);
  }
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(le(8, what)); }

 private:
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(QuantScheme v) {
  return v == QuantScheme::sym_int8 ? "sym_int8" : "asym_uint8";
}
std::string_view to_string(BoundaryMode v) {
  return v == BoundaryMode::closed ? "closed" : "half_open";
}
std::string_view to_string(OobPolicy v) {
  return v == OobPolicy::clip_x ? "clip_x" : "zero_spline";
}
std::string_view to_string(ValueRepr v) {
  return v == ValueRepr::spline_component ? "spline_component" : "full_phi";
}

QuantScheme parse_quant_scheme(std::string_view s) {
  return enum_from<QuantScheme>(
      s, {{"sym_int8", QuantScheme::sym_int8}, {"asym_uint8", QuantScheme::asym_uint8}},
      "quantization scheme");
}
BoundaryMode parse_boundary_mode(std::string_view s) {
  return enum_from<BoundaryMode>(
      s, {{"closed", BoundaryMode::closed}, {"half_open", BoundaryMode::half_open}},
      "boundary mode");
}
OobPolicy parse_oob_policy(std::string_view s) {
  return enum_from<OobPolicy>(
      s, {{"clip_x", OobPolicy::clip_x}, {"zero_spline", OobPolicy::zero_spline}}, "OOB policy");
}
ValueRepr parse_value_repr(std::string_view s) {
  return enum_from<ValueRepr>(
      s, {{"spline_component", ValueRepr::spline_component}, {"full_phi", ValueRepr::full_phi}},
      "value representation");
}

void CompileConfig::validate() const {
  if (lut_size < kMinLutSize || lut_size > kMaxLutSize) {
    throw Error(ErrorKind::range, "lut_size " + std::to_string(lut_size) + " outside [" +
                                      std::to_string(kMinLutSize) + ", " +
                                      std::to_string(kMaxLutSize) + "]");
  }
}

double round_half_even(double v) noexcept {
  const double lower = std::floor(v);
  const double diff = v - lower;
  if (diff > 0.5) return lower + 1.0;
  if (diff < 0.5) return lower;
  return std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
}

SymmetricQuantized quantize_symmetric(std::span<const double> values, ParamPrecision precision) {
  require_finite(values);
  SymmetricQuantized out;
  out.values.assign(values.size(), 0);
  double max_abs = 0.0;
  for (double v : values) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0) return out;

  double s = max_abs / 127.0;
  if (precision == ParamPrecision::binary32) s = float_at_least(s);
  out.scale = s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double q = std::clamp(round_half_even(values[i] / s), -127.0, 127.0);
    out.values[i] = static_cast<std::int8_t>(q);
  }
  return out;
}

AsymmetricQuantized quantize_asymmetric(std::span<const double> values, ParamPrecision precision) {
  require_finite(values);
  AsymmetricQuantized out;
  out.values.assign(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double v_min = *lo_it;
  const double v_max = *hi_it;
  if (precision == ParamPrecision::binary32) v_min = float_at_most(v_min);
  out.v_min = v_min;
  const double range = v_max - v_min;
  if (range == 0.0) return out;

  double s = range / 255.0;
  if (precision == ParamPrecision::binary32) {
    float fs = float_at_least(s);
    while (range / static_cast<double>(fs) > 255.0) {
      fs = std::nextafter(fs, std::numeric_limits<float>::infinity());
    }
    s = fs;
  }
  out.scale = s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double q = std::clamp(round_half_even((values[i] - v_min) / s), 0.0, 255.0);
    out.values[i] = static_cast<std::uint8_t>(q);
  }
  return out;
}

std::vector<double> sample_segment(const EdgeFunction& edge, const KnotGrid& grid, int segment,
                                   int lut_size, ValueRepr repr) {
  if (segment < 0 || segment >= grid.intervals()) {
    throw Error(ErrorKind::range, "segment index " + std::to_string(segment) + " outside [0, " +
                                      std::to_string(grid.intervals()) + ")");
  }
  if (lut_size < kMinLutSize) throw Error(ErrorKind::range, "lut_size must be >= 2");
  const double a = grid.interval_start(segment);
  const double b = grid.interval_end(segment);
  const double delta = (b - a) / (lut_size - 1);
  std::vector<double> out(static_cast<std::size_t>(lut_size));
  for (int q = 0; q < lut_size; ++q) {
    // The last sample sits exactly on b.
    const double x = q == lut_size - 1 ? b : a + q * delta;
    out[static_cast<std::size_t>(q)] = repr == ValueRepr::full_phi
                                           ? eval_phi(x, edge, grid)
                                           : eval_spline(x, grid, edge.coefficients);
  }
  return out;
}

double SegmentTable::dequantize(std::size_t q) const {
  const double s = scale;
  if (scheme == QuantScheme::sym_int8) return s * values.at(q);
  return static_cast<double>(v_min.value_or(0.0f)) + s * values.at(q);
}

void CompiledLayer::derive(int lut_size) {
  const KnotGrid grid(domain_min, domain_max, intervals, degree);
  boundaries.resize(static_cast<std::size_t>(intervals) + 1);
  inv_delta.resize(static_cast<std::size_t>(intervals));
  for (int u = 0; u <= intervals; ++u) {
    boundaries[static_cast<std::size_t>(u)] = grid.knots()[static_cast<std::size_t>(degree + u)];
  }
  for (int u = 0; u < intervals; ++u) {
    const double a = boundaries[static_cast<std::size_t>(u)];
    const double b = boundaries[static_cast<std::size_t>(u) + 1];
    inv_delta[static_cast<std::size_t>(u)] = 1.0 / ((b - a) / (lut_size - 1));
  }

  const auto G = static_cast<std::size_t>(intervals);
  const auto L = static_cast<std::size_t>(lut_size);
  if (codes.size() != edge_count() * G * L || scale.size() != edge_count() * G) return;
  codes_by_input.resize(codes.size());
  scale_by_input.resize(scale.size());
  v_min_by_input.resize(v_min.size() == scale.size() ? v_min.size() : 0);
  for (std::size_t i = 0; i < n_in; ++i) {
    for (std::size_t j = 0; j < n_out; ++j) {
      const std::size_t e = i * n_out + j;
      for (std::size_t u = 0; u < G; ++u) {
        const std::size_t src = e * G + u;
        const std::size_t dst = (i * G + u) * n_out + j;
        scale_by_input[dst] = scale[src];
        if (!v_min_by_input.empty()) v_min_by_input[dst] = v_min[src];
        for (std::size_t q = 0; q < L; ++q) {
          codes_by_input[((i * G + u) * L + q) * n_out + j] = codes[src * L + q];
        }
      }
    }
  }
}

std::size_t CompiledModel::edge_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.edge_count();
  return n;
}

SegmentTable CompiledModel::segment(std::size_t layer, std::size_t edge, int u) const {
  const auto& l = layers.at(layer);
  if (edge >= l.edge_count() || u < 0 || u >= l.intervals) {
    throw Error(ErrorKind::range, "segment lookup out of range");
  }
  const auto L = static_cast<std::size_t>(config.lut_size);
  const std::size_t seg = edge * static_cast<std::size_t>(l.intervals) + static_cast<std::size_t>(u);
  SegmentTable t;
  t.a = l.boundaries[static_cast<std::size_t>(u)];
  t.b = l.boundaries[static_cast<std::size_t>(u) + 1];
  t.scheme = config.quant;
  t.scale = l.scale[seg];
  t.values.resize(L);
  for (std::size_t q = 0; q < L; ++q) {
    const std::uint8_t raw = l.codes[seg * L + q];
    t.values[q] = config.quant == QuantScheme::sym_int8 ? static_cast<int>(static_cast<std::int8_t>(raw))
                                                        : static_cast<int>(raw);
  }
  if (config.quant == QuantScheme::asym_uint8) t.v_min = l.v_min[seg];
  return t;
}

double CompiledModel::dequantize(std::size_t layer, std::size_t edge, int u, int q) const {
  return segment(layer, edge, u).dequantize(static_cast<std::size_t>(q));
}

void CompiledModel::validate() const {
  config.validate();
  if (layers.empty()) malformed("no layers");
  const auto L = static_cast<std::size_t>(config.lut_size);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string path = "layers[" + std::to_string(l) + "]";
    if (layer.n_in == 0 || layer.n_out == 0) malformed(path + ": zero-sized layer");
    if (l > 0 && layer.n_in != layers[l - 1].n_out) malformed(path + ": layers do not chain");
    if (!(layer.domain_min < layer.domain_max) || !std::isfinite(layer.domain_min) ||
        !std::isfinite(layer.domain_max)) {
      malformed(path + ": invalid domain bounds");
    }
    if (layer.intervals < 1 || layer.degree < 0) malformed(path + ": invalid G or k");
    const std::size_t edges = layer.edge_count();
    const std::size_t segs = edges * static_cast<std::size_t>(layer.intervals);
    if (layer.alpha.size() != edges || layer.beta.size() != edges || layer.scale.size() != segs ||
        layer.codes.size() != segs * L ||
        layer.v_min.size() != (config.quant == QuantScheme::asym_uint8 ? segs : 0)) {
      malformed(path + ": table sizes inconsistent with topology");
    }
    if (layer.boundaries.size() != static_cast<std::size_t>(layer.intervals) + 1) {
      malformed(path + ": derived boundaries missing");
    }
    for (float s : layer.scale) {
      if (!std::isfinite(s) || s < 0.0f) malformed(path + ": invalid segment scale");
    }
    for (float v : layer.v_min) {
      if (!std::isfinite(v)) malformed(path + ": invalid v_min");
    }
    for (std::size_t e = 0; e < edges; ++e) {
      if (!std::isfinite(layer.alpha[e]) || !std::isfinite(layer.beta[e])) {
        malformed(path + ": non-finite edge scale");
      }
    }
    if (config.quant == QuantScheme::sym_int8) {
      for (std::uint8_t c : layer.codes) {
        if (c == 0x80) malformed(path + ": int8 code -128 outside [-127, 127]");
      }
    }
  }
  if (layers.back().n_out != 1) malformed("last layer must have n_out == 1");
  if (!(threshold > 0.0 && threshold < 1.0)) malformed("threshold outside (0, 1)");
}

CompiledModel compile(const ModelSpec& model, const CompileConfig& config) {
  config.validate();
  model.validate();
  if (model.layers.size() > std::numeric_limits<std::uint16_t>::max()) {
    compile_error("too many layers for the compiled format");
  }
  CompiledModel out;
  out.config = config;
  out.threshold = model.threshold;
  const auto L = static_cast<std::size_t>(config.lut_size);

  for (const auto& src : model.layers) {
    if (src.grid.intervals() > std::numeric_limits<std::uint16_t>::max() ||
        src.grid.degree() > std::numeric_limits<std::uint16_t>::max() ||
        src.n_in > std::numeric_limits<std::uint32_t>::max() ||
        src.n_out > std::numeric_limits<std::uint32_t>::max()) {
      compile_error("layer dimensions exceed the compiled format limits");
    }
    CompiledLayer layer;
    layer.n_in = src.n_in;
    layer.n_out = src.n_out;
    layer.domain_min = src.grid.domain_min();
    layer.domain_max = src.grid.domain_max();
    layer.intervals = src.grid.intervals();
    layer.degree = src.grid.degree();
    const std::size_t edges = src.edges.size();
    const auto G = static_cast<std::size_t>(layer.intervals);
    layer.alpha.resize(edges);
    layer.beta.resize(edges);
    layer.scale.resize(edges * G);
    if (config.quant == QuantScheme::asym_uint8) layer.v_min.resize(edges * G);
    layer.codes.resize(edges * G * L);

    for (std::size_t e = 0; e < edges; ++e) {
      const auto& edge = src.edges[e];
      layer.alpha[e] = static_cast<float>(edge.base_scale);
      layer.beta[e] = static_cast<float>(edge.spline_scale);
      for (std::size_t u = 0; u < G; ++u) {
        const auto samples =
            sample_segment(edge, src.grid, static_cast<int>(u), config.lut_size, config.value_repr);
        const std::size_t seg = e * G + u;
        std::uint8_t* dst = layer.codes.data() + seg * L;
        if (config.quant == QuantScheme::sym_int8) {
          const auto q = quantize_symmetric(samples, ParamPrecision::binary32);
          layer.scale[seg] = static_cast<float>(q.scale);
          for (std::size_t i = 0; i < L; ++i) dst[i] = static_cast<std::uint8_t>(q.values[i]);
        } else {
          const auto q = quantize_asymmetric(samples, ParamPrecision::binary32);
          layer.scale[seg] = static_cast<float>(q.scale);
          layer.v_min[seg] = static_cast<float>(q.v_min);
          std::copy(q.values.begin(), q.values.end(), dst);
        }
      }
    }
    layer.derive(config.lut_size);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

MemoryBreakdown measure_memory(const CompiledModel& compiled) {
  MemoryBreakdown m;
  const auto L = static_cast<std::size_t>(compiled.config.lut_size);
  const std::size_t param_bytes = compiled.config.quant == QuantScheme::sym_int8 ? 4 : 8;
  m.header = kFileHeaderBytes + kTrailerBytes;
  for (const auto& layer : compiled.layers) {
    const std::size_t segs = layer.edge_count() * static_cast<std::size_t>(layer.intervals);
    m.tables += segs * L;
    m.quant_params += segs * param_bytes;
    m.scales += layer.edge_count() * 8;
    m.header += kLayerHeaderBytes;
  }
  m.total = m.tables + m.quant_params + m.scales + m.header;
  return m;
}

std::vector<std::uint8_t> serialize(const CompiledModel& compiled) {
  compiled.validate();
  const auto L = static_cast<std::size_t>(compiled.config.lut_size);
  const bool asym = compiled.config.quant == QuantScheme::asym_uint8;
  ByteWriter w(measure_memory(compiled).total);
  const std::uint8_t magic[4] = {'K', 'L', 'U', 'T'};
  w.bytes(magic);
  w.u16(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(compiled.config.quant));
  w.u8(static_cast<std::uint8_t>(compiled.config.boundary));
  w.u8(static_cast<std::uint8_t>(compiled.config.oob));
  w.u8(static_cast<std::uint8_t>(compiled.config.value_repr));
  w.u16(static_cast<std::uint16_t>(compiled.config.lut_size));
  w.u16(static_cast<std::uint16_t>(compiled.layers.size()));
  for (const auto& layer : compiled.layers) {
    w.u32(static_cast<std::uint32_t>(layer.n_in));
    w.u32(static_cast<std::uint32_t>(layer.n_out));
    w.f64(layer.domain_min);
    w.f64(layer.domain_max);
    w.u16(static_cast<std::uint16_t>(layer.intervals));
    w.u16(static_cast<std::uint16_t>(layer.degree));
    const auto G = static_cast<std::size_t>(layer.intervals);
    for (std::size_t e = 0; e < layer.edge_count(); ++e) {
      w.f32(layer.alpha[e]);
      w.f32(layer.beta[e]);
      for (std::size_t u = 0; u < G; ++u) {
        const std::size_t seg = e * G + u;
        w.f32(layer.scale[seg]);
        if (asym) w.f32(layer.v_min[seg]);
        w.bytes(std::span(layer.codes).subspan(seg * L, L));
      }
    }
  }
  w.f64(compiled.threshold);
  return w.take();
}

CompiledModel deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (!(magic[0] == 'K' && magic[1] == 'L' && magic[2] == 'U' && magic[3] == 'T')) {
    malformed("bad magic (expected \"KLUT\")");
  }
  const auto version = r.u16("version");
  if (version != kFormatVersion) {
    throw Error(ErrorKind::unsupported_version,
                "compiled model version " + std::to_string(version) + " is not supported");
  }
  CompiledModel out;
  const auto quant = r.u8("quant_scheme");
  const auto boundary = r.u8("boundary_mode");
  const auto oob = r.u8("oob_policy");
  const auto repr = r.u8("value_repr");
  if (quant > 1 || boundary > 1 || oob > 1 || repr > 1) malformed("unknown enum value in header");
  out.config.quant = static_cast<QuantScheme>(quant);
  out.config.boundary = static_cast<BoundaryMode>(boundary);
  out.config.oob = static_cast<OobPolicy>(oob);
  out.config.value_repr = static_cast<ValueRepr>(repr);
  out.config.lut_size = r.u16("L");
  if (out.config.lut_size < kMinLutSize) malformed("L must be >= 2");
  const auto layer_count = r.u16("layer_count");
  if (layer_count == 0) malformed("layer_count must be positive");
  const auto L = static_cast<std::size_t>(out.config.lut_size);
  const bool asym = out.config.quant == QuantScheme::asym_uint8;
  const std::size_t segment_bytes = (asym ? 8 : 4) + L;

  for (std::uint16_t l = 0; l < layer_count; ++l) {
    CompiledLayer layer;
    layer.n_in = r.u32("n_in");
    layer.n_out = r.u32("n_out");
    layer.domain_min = r.f64("domain_min");
    layer.domain_max = r.f64("domain_max");
    layer.intervals = r.u16("G");
    layer.degree = r.u16("k");
    if (layer.n_in == 0 || layer.n_out == 0 || layer.intervals == 0) {
      malformed("layer " + std::to_string(l) + " has a zero dimension");
    }
    if (!(layer.domain_min < layer.domain_max) || !std::isfinite(layer.domain_min) ||
        !std::isfinite(layer.domain_max)) {
      malformed("layer " + std::to_string(l) + " has invalid domain bounds");
    }
    const std::size_t edges = layer.n_in * layer.n_out;
    const auto G = static_cast<std::size_t>(layer.intervals);
    if (edges > r.remaining() / (8 + G * segment_bytes)) malformed("truncated edge tables");
    layer.alpha.resize(edges);
    layer.beta.resize(edges);
    layer.scale.resize(edges * G);
    if (asym) layer.v_min.resize(edges * G);
    layer.codes.resize(edges * G * L);
    for (std::size_t e = 0; e < edges; ++e) {
      layer.alpha[e] = r.f32("alpha");
      layer.beta[e] = r.f32("beta");
      for (std::size_t u = 0; u < G; ++u) {
        const std::size_t seg = e * G + u;
        layer.scale[seg] = r.f32("scale");
        if (asym) layer.v_min[seg] = r.f32("v_min");
        const auto table = r.bytes(L, "table");
        std::copy(table.begin(), table.end(), layer.codes.begin() + static_cast<std::ptrdiff_t>(seg * L));
      }
    }
    try {
      layer.derive(out.config.lut_size);
    } catch (const Error& e) {
      malformed(std::string("layer grid: ") + e.what());
    }
    out.layers.push_back(std::move(layer));
  }
  out.threshold = r.f64("threshold");
  if (r.remaining() != 0) malformed("trailing bytes after threshold");
  out.validate();
  return out;
}

void save_compiled(const CompiledModel& compiled, const std::filesystem::path& path) {
  const auto bytes = serialize(compiled);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write compiled model " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

CompiledModel load_compiled(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open compiled model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace lutkan
