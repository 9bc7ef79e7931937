#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "lutkan/lutkan.hpp"
#include "oracles.hpp"

using namespace lutkan;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return xs;
}

ErrorKind deserialize_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::usage;  // sentinel: no error
}

// Slack for rounding in the bound checks: a few ulps of the largest value.
double ulps(double v) { return 8.0 * std::numeric_limits<double>::epsilon() * std::fabs(v); }

}  // namespace

TEST_CASE("round_half_even") {
  CHECK(round_half_even(0.5) == 0.0);
  CHECK(round_half_even(1.5) == 2.0);
  CHECK(round_half_even(2.5) == 2.0);
  CHECK(round_half_even(-0.5) == 0.0);
  CHECK(round_half_even(-1.5) == -2.0);
  CHECK(round_half_even(-2.5) == -2.0);
  CHECK(round_half_even(2.4) == 2.0);
  CHECK(round_half_even(2.6) == 3.0);
  CHECK(round_half_even(-2.6) == -3.0);
  CHECK(round_half_even(127.0) == 127.0);
}

TEST_CASE("quantize_symmetric examples") {
  const std::vector<double> ends{-1.0, 0.0, 1.0};
  const auto a = quantize_symmetric(ends);
  CHECK(a.values == std::vector<std::int8_t>{-127, 0, 127});
  CHECK(a.scale == 1.0 / 127.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.scale * a.values[i] == ends[i]);

  const auto z = quantize_symmetric(std::vector<double>(5, 0.0));
  CHECK(z.scale == 0.0);
  CHECK(z.values == std::vector<std::int8_t>(5, 0));

  const std::vector<double> v{0.1, -0.3, 0.25};
  const auto q = quantize_symmetric(v);
  const double s = 0.3 / 127.0;
  CHECK(q.scale == s);
  // 0.1 / s = 42.33, -0.3 / s = -127, 0.25 / s = 105.83
  CHECK(q.values == std::vector<std::int8_t>{42, -127, 106});
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(s * q.values[i] - v[i]) <= s / 2);
}

TEST_CASE("quantize_asymmetric examples") {
  const std::vector<double> v{0.0, 2.55};
  const auto q = quantize_asymmetric(v);
  CHECK(q.values == std::vector<std::uint8_t>{0, 255});
  CHECK(oracle::near(q.scale, 0.01, 1e-15));
  CHECK(q.v_min == 0.0);
  for (std::size_t i = 0; i < 2; ++i) CHECK(oracle::near(q.v_min + q.scale * q.values[i], v[i], 1e-12));

  const auto c = quantize_asymmetric(std::vector<double>(4, -0.75));
  CHECK(c.scale == 0.0);
  CHECK(c.v_min == -0.75);
  CHECK(c.values == std::vector<std::uint8_t>(4, 0));
}

TEST_CASE("quantization error is at most half a step for any vector") {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(300);
    const double spread = std::pow(10.0, rng.uniform(-6.0, 4.0));
    const double offset = rng.uniform(-3.0, 3.0) * spread;
    std::vector<double> v(n);
    for (double& x : v) x = offset + spread * rng.uniform(-1.0, 1.0);
    double max_abs = 0.0;
    for (double x : v) max_abs = std::max(max_abs, std::fabs(x));
    for (auto precision : {ParamPrecision::binary64, ParamPrecision::binary32}) {
      const auto s = quantize_symmetric(v, precision);
      const auto a = quantize_asymmetric(v, precision);
      if (precision == ParamPrecision::binary32) {
        CHECK(static_cast<double>(static_cast<float>(s.scale)) == s.scale);
        CHECK(static_cast<double>(static_cast<float>(a.scale)) == a.scale);
        CHECK(static_cast<double>(static_cast<float>(a.v_min)) == a.v_min);
        CHECK(a.v_min <= *std::min_element(v.begin(), v.end()));
      }
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(s.values[i] >= -127);
        CHECK(std::fabs(s.scale * s.values[i] - v[i]) <= s.scale / 2 + ulps(max_abs));
        CHECK(std::fabs(a.v_min + a.scale * a.values[i] - v[i]) <= a.scale / 2 + ulps(max_abs));
      }
    }
  }
}

TEST_CASE("quantizers reject non-finite input") {
  const std::vector<double> bad{0.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(quantize_symmetric(bad), Error);
  CHECK_THROWS_AS(quantize_asymmetric(bad), Error);
}

TEST_CASE("sample_segment examples") {
  const KnotGrid g(-1.0, 1.0, 5, 3);
  Rng rng(4);
  EdgeFunction edge{0.3, -0.8, std::vector<double>(8)};
  for (double& c : edge.coefficients) c = rng.uniform(-2.0, 2.0);

  SUBCASE("L = 2 gives the segment endpoint values") {
    for (int u = 0; u < 5; ++u) {
      const auto s = sample_segment(edge, g, u, 2);
      CHECK(s[0] == eval_spline(g.interval_start(u), g, edge.coefficients));
      CHECK(s[1] == eval_spline(g.interval_end(u), g, edge.coefficients));
    }
  }
  SUBCASE("constant spline") {
    const EdgeFunction flat{0.0, 1.0, std::vector<double>(8, 0.625)};
    for (double v : sample_segment(flat, g, 3, 9)) CHECK(oracle::near(v, 0.625, 1e-12));
  }
  SUBCASE("identity fit reproduces the sample positions") {
    const KnotGrid g2(0.0, 2.0, 5, 3);
    const auto xs = linspace(0.0, 2.0, 500);
    const EdgeFunction id{0.0, 1.0, fit_spline_lsq(xs, xs, g2)};
    const auto s = sample_segment(id, g2, 0, 5);
    const double expected[] = {0.0, 0.1, 0.2, 0.3, 0.4};
    for (int q = 0; q < 5; ++q) CHECK(oracle::near(s[static_cast<std::size_t>(q)], expected[q], 1e-6));
  }
  SUBCASE("full_phi samples include the base branch") {
    const auto s = sample_segment(edge, g, 2, 4, ValueRepr::full_phi);
    CHECK(s[3] == eval_phi(g.interval_end(2), edge, g));
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(sample_segment(edge, g, 5, 8), Error);
    CHECK_THROWS_AS(sample_segment(edge, g, -1, 8), Error);
    CHECK_THROWS_AS(sample_segment(edge, g, 0, 1), Error);
  }
}

TEST_CASE("compile config validation and parsing") {
  CHECK_NOTHROW(CompileConfig{}.validate());
  for (int L : {1, 0, -3, 65536}) {
    try {
      CompileConfig{L}.validate();
      FAIL("expected range error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::range);
    }
  }
  CHECK(parse_quant_scheme("asym_uint8") == QuantScheme::asym_uint8);
  CHECK(parse_boundary_mode("closed") == BoundaryMode::closed);
  CHECK(parse_oob_policy("clip_x") == OobPolicy::clip_x);
  CHECK(parse_value_repr("full_phi") == ValueRepr::full_phi);
  CHECK(to_string(QuantScheme::sym_int8) == "sym_int8");
  CHECK(to_string(BoundaryMode::half_open) == "half_open");
  CHECK_THROWS_AS(parse_quant_scheme("int4"), Error);
  const CompileConfig d;
  CHECK(d.lut_size == 8);
  CHECK(d.quant == QuantScheme::sym_int8);
  CHECK(d.boundary == BoundaryMode::half_open);
  CHECK(d.oob == OobPolicy::zero_spline);
}

TEST_CASE("compiled tables dequantize within half a step of the spline at grid points") {
  const auto m = synth_model(std::vector<std::size_t>{4, 3, 1}, 42);
  for (auto quant : {QuantScheme::sym_int8, QuantScheme::asym_uint8}) {
    for (auto repr : {ValueRepr::spline_component, ValueRepr::full_phi}) {
      CompileConfig cfg;
      cfg.lut_size = 6;
      cfg.quant = quant;
      cfg.value_repr = repr;
      const auto c = compile(m, cfg);
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        for (std::size_t e = 0; e < layer.edges.size(); ++e) {
          for (int u = 0; u < layer.grid.intervals(); ++u) {
            const auto seg = c.segment(l, e, u);
            const double a = layer.grid.interval_start(u), b = layer.grid.interval_end(u);
            for (int q = 0; q < cfg.lut_size; ++q) {
              const double x = q == cfg.lut_size - 1 ? b : a + q * ((b - a) / (cfg.lut_size - 1));
              const double exact = repr == ValueRepr::full_phi
                                       ? oracle::phi(x, layer.edges[e], layer.grid)
                                       : oracle::spline(x, layer.grid, layer.edges[e].coefficients);
              CHECK(std::fabs(seg.dequantize(static_cast<std::size_t>(q)) - exact) <=
                    seg.scale / 2.0 + 1e-12);
              CHECK(seg.dequantize(static_cast<std::size_t>(q)) == c.dequantize(l, e, u, q));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("compilation is deterministic") {
  const auto m = synth_model(std::vector<std::size_t>{6, 4, 1}, 3);
  for (auto quant : {QuantScheme::sym_int8, QuantScheme::asym_uint8}) {
    CompileConfig cfg;
    cfg.quant = quant;
    CHECK(serialize(compile(m, cfg)) == serialize(compile(m, cfg)));
  }
}

TEST_CASE("L = 256 dense-probe error on a seeded 4-3-1 model") {
  const auto m = synth_model(std::vector<std::size_t>{4, 3, 1}, 42);
  CompileConfig cfg;
  cfg.lut_size = 256;
  cfg.boundary = BoundaryMode::closed;
  const auto c = compile(m, cfg);
  double max_err = 0.0, max_floor = 0.0, max_interp = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    for (std::size_t e = 0; e < layer.edges.size(); ++e) {
      const auto& edge = layer.edges[e];
      for (int u = 0; u < layer.grid.intervals(); ++u) {
        const double a = layer.grid.interval_start(u), b = layer.grid.interval_end(u);
        const double delta = (b - a) / 255.0;
        max_floor = std::max(max_floor, c.segment(l, e, u).scale / 2.0);
        max_interp = std::max(max_interp, oracle::max_second_derivative(layer.grid, edge.coefficients, a, b, 200) /
                                              8.0 * delta * delta);
        for (int p = 0; p < 10000; ++p) {
          const double x = a + (b - a) * p / 9999.0;
          const double spline_part = (lut_eval(x, c, l, e) - edge.base_scale * oracle::silu(x)) /
                                     static_cast<double>(c.layers[l].beta[e]);
          max_err = std::max(max_err, std::fabs(spline_part - eval_spline(x, layer.grid, edge.coefficients)));
        }
      }
    }
  }
  MESSAGE("golden: max |s_lut - s| = " << max_err << " (floor " << max_floor << ", interp " << max_interp << ")");
  CHECK(max_err <= 4.0 * max_floor + max_interp);
  CHECK(oracle::near(max_err, 0.009328, 2e-6));
}

TEST_CASE("memory accounting") {
  const auto big = synth_model(default_topology(), 1);
  CHECK(big.edge_count() == 3024u);
  const auto sym8 = measure_memory(compile(big, CompileConfig{8}));
  CHECK(sym8.tables == 3024u * 5u * 8u);
  CHECK(sym8.tables == 120960u);
  CHECK(sym8.quant_params == 3024u * 5u * 4u);
  CHECK(sym8.scales == 3024u * 8u);
  CHECK(sym8.header == 14u + 3u * 28u + 8u);
  CHECK(sym8.total == sym8.tables + sym8.quant_params + sym8.scales + sym8.header);

  const auto m = synth_model(std::vector<std::size_t>{5, 3, 1}, 2);
  std::size_t prev = 0;
  for (int L : {2, 4, 8, 16, 32}) {
    CompileConfig sym{L};
    CompileConfig asym{L, QuantScheme::asym_uint8};
    const auto cs = compile(m, sym);
    const auto ms = measure_memory(cs);
    const auto ma = measure_memory(compile(m, asym));
    if (prev) CHECK(ms.tables == 2 * prev);
    prev = ms.tables;
    CHECK(ma.quant_params == 2 * ms.quant_params);
    CHECK(ma.tables == ms.tables);
    CHECK(ms.total == serialize(cs).size());
    CHECK(ma.total == serialize(compile(m, asym)).size());
  }
}

TEST_CASE("serialize round trip") {
  const auto m = synth_model(std::vector<std::size_t>{3, 2, 1}, 6);
  const auto dir = oracle::temp_dir("klut");
  for (auto quant : {QuantScheme::sym_int8, QuantScheme::asym_uint8}) {
    for (auto boundary : {BoundaryMode::closed, BoundaryMode::half_open}) {
      for (auto oob : {OobPolicy::clip_x, OobPolicy::zero_spline}) {
        for (auto repr : {ValueRepr::spline_component, ValueRepr::full_phi}) {
          auto c = compile(m, CompileConfig{5, quant, boundary, oob, repr});
          c.threshold = 0.3;
          const auto bytes = serialize(c);
          const auto back = deserialize(bytes);
          CHECK(back == c);
          CHECK(back.layers[0].boundaries == c.layers[0].boundaries);
          CHECK(serialize(back) == bytes);
          const auto path = dir / "m.klut";
          save_compiled(c, path);
          CHECK(load_compiled(path) == c);
        }
      }
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("binary layout") {
  const auto m = synth_model(std::vector<std::size_t>{2, 1}, 1);
  const auto c = compile(m, CompileConfig{4});
  const auto b = serialize(c);
  CHECK(std::string(b.begin(), b.begin() + 4) == "KLUT");
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[6] == 0);   // sym_int8
  CHECK(b[7] == 1);   // half_open
  CHECK(b[8] == 1);   // zero_spline
  CHECK(b[9] == 0);   // spline_component
  CHECK(b[10] == 4);  // L
  CHECK(b[12] == 1);  // layer count
  CHECK(b[14] == 2);  // n_in
  CHECK(b[18] == 1);  // n_out
  // Codes of edge 0, segment 0 follow alpha, beta and the segment scale.
  for (int q = 0; q < 4; ++q) {
    CHECK(b[54 + static_cast<std::size_t>(q)] == c.layers[0].codes[static_cast<std::size_t>(q)]);
  }
}

TEST_CASE("deserialize rejects corrupt input") {
  const auto m = synth_model(std::vector<std::size_t>{2, 2, 1}, 1);
  const auto good = serialize(compile(m, CompileConfig{4}));
  CHECK(deserialize_kind(good) == ErrorKind::usage);

  for (std::size_t cut = 0; cut < good.size(); cut += 7) {
    CHECK(deserialize_kind({good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut)}) ==
          ErrorKind::malformed_model);
  }
  auto extra = good;
  extra.push_back(0);
  CHECK(deserialize_kind(extra) == ErrorKind::malformed_model);

  auto bad = good;
  bad[0] = 'X';
  CHECK(deserialize_kind(bad) == ErrorKind::malformed_model);
  bad = good;
  bad[4] = 2;
  CHECK(deserialize_kind(bad) == ErrorKind::unsupported_version);
  bad = good;
  bad[6] = 7;
  CHECK(deserialize_kind(bad) == ErrorKind::malformed_model);
  bad = good;
  bad[10] = 1;
  CHECK(deserialize_kind(bad) == ErrorKind::malformed_model);
  bad = good;
  bad[54] = 0x80;  // int8 -128 is outside the symmetric range
  CHECK(deserialize_kind(bad) == ErrorKind::malformed_model);
  bad = good;
  bad[18] = 3;  // n_out of layer 0 inconsistent with layer 1
  CHECK(deserialize_kind(bad) == ErrorKind::malformed_model);

  try {
    load_compiled("/nonexistent/model.klut");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("compile rejects invalid models") {
  auto m = synth_model(std::vector<std::size_t>{2, 1}, 1);
  m.layers[0].edges[0].coefficients.pop_back();
  CHECK_THROWS_AS(compile(m, CompileConfig{}), Error);
  CHECK_THROWS_AS(compile(synth_model(std::vector<std::size_t>{2, 1}, 1), CompileConfig{1}), Error);
}
