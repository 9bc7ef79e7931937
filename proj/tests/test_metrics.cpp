#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include <json.hpp>

#include "lutkan/lutkan.hpp"
#include "oracles.hpp"

using namespace lutkan;

namespace {

// Average precision by direct enumeration of the distinct thresholds.
double ap_oracle(const std::vector<int>& y, const std::vector<double>& s) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double positives = 0.0;
  for (int v : y) positives += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
      if (s[n] >= t) (y[n] == 1 ? tp : fp) += 1.0;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return ap;
}

void random_scored(Rng& rng, std::size_t n, std::vector<int>& y, std::vector<double>& s) {
  y.assign(n, 0);
  s.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform01() < 0.3 ? 1 : 0;
    // Coarse scores so ties are common.
    s[i] = std::round(rng.uniform(0.0, 20.0)) + 2.0 * y[i];
  }
  y[0] = 1;
  y[1] = 0;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::usage;
}

}  // namespace

TEST_CASE("confusion examples") {
  const std::vector<int> y{1, 1, 0, 0, 1, 0};
  const std::vector<int> p{1, 0, 0, 1, 1, 0};
  const auto c = confusion(y, p);
  CHECK(c == ConfusionCounts{2, 1, 2, 1});
  CHECK(c.total() == 6u);
  CHECK(kind_of([] { confusion(std::vector<int>{1}, std::vector<int>{1, 0}); }) == ErrorKind::input_shape);
  CHECK(kind_of([] { confusion(std::vector<int>{2}, std::vector<int>{1}); }) == ErrorKind::input_domain);
}

TEST_CASE("confusion agrees with the tally oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(500);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(2));
      p[i] = static_cast<int>(rng.index(2));
    }
    const auto t = oracle::tally(y, p);
    CHECK(confusion(y, p) == ConfusionCounts{t.tp, t.fp, t.tn, t.fn});
  }
}

TEST_CASE("thresholded metric examples") {
  const auto perfect = thresholded_metrics({2, 0, 2, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto half = thresholded_metrics({1, 1, 1, 1});
  CHECK(half.accuracy == 0.5);
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == 0.5);

  const auto none = thresholded_metrics({0, 0, 5, 3});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.accuracy == 5.0 / 8.0);

  const auto m = thresholded_metrics({3, 1, 4, 2});
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.6);
  CHECK(oracle::near(m.f1, 2 * 0.75 * 0.6 / 1.35, 1e-15));
}

TEST_CASE("roc_auc examples") {
  CHECK(roc_auc(std::vector<int>{0, 0, 1, 1}, std::vector<double>{0.1, 0.2, 0.8, 0.9}) == 1.0);
  CHECK(roc_auc(std::vector<int>{1, 1, 0, 0}, std::vector<double>{0.1, 0.2, 0.8, 0.9}) == 0.0);
  CHECK(roc_auc(std::vector<int>{0, 1, 0, 1}, std::vector<double>(4, 0.4)) == 0.5);
  CHECK(roc_auc(std::vector<int>{0, 1, 1}, std::vector<double>{0.5, 0.5, 0.9}) == 0.75);
  CHECK(pr_auc(std::vector<int>{0, 0, 1, 1}, std::vector<double>{0.1, 0.2, 0.8, 0.9}) == 1.0);
  CHECK(pr_auc(std::vector<int>{0, 1, 0, 1}, std::vector<double>(4, 0.4)) == 0.5);
}

TEST_CASE("roc_auc and pr_auc agree with brute-force oracles") {
  Rng rng(2);
  std::vector<int> y;
  std::vector<double> s;
  for (int trial = 0; trial < 100; ++trial) {
    random_scored(rng, 2 + rng.index(300), y, s);
    CHECK(oracle::near(roc_auc(y, s), oracle::pairwise_auc(y, s), 1e-12));
    CHECK(oracle::near(pr_auc(y, s), ap_oracle(y, s), 1e-12));
  }
}

TEST_CASE("threshold-free metrics are invariant under increasing transforms") {
  Rng rng(3);
  std::vector<int> y;
  std::vector<double> s;
  for (int trial = 0; trial < 50; ++trial) {
    random_scored(rng, 50 + rng.index(200), y, s);
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(0.15 * s[i]) - 7.0;
    CHECK(roc_auc(y, t) == doctest::Approx(roc_auc(y, s)));
    CHECK(pr_auc(y, t) == doctest::Approx(pr_auc(y, s)));
    const double a = roc_auc(y, s);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    // Relabel-and-negate symmetry.
    std::vector<int> flipped(y.size());
    std::vector<double> neg(s.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      flipped[i] = 1 - y[i];
      neg[i] = -s[i];
    }
    CHECK(oracle::near(roc_auc(flipped, neg), a, 1e-12));
  }
}

TEST_CASE("degenerate inputs") {
  const std::vector<int> ones(5, 1);
  const std::vector<double> s(5, 0.3);
  CHECK(kind_of([&] { roc_auc(ones, s); }) == ErrorKind::degenerate_metric);
  CHECK(kind_of([&] { pr_auc(std::vector<int>(5, 0), s); }) == ErrorKind::degenerate_metric);
  CHECK(kind_of([&] { roc_auc(std::vector<int>{1, 0}, s); }) == ErrorKind::input_shape);
  CHECK(kind_of([&] {
          evaluate_scores(std::vector<int>{1, 0}, std::vector<double>{0.1, 0.2}, 0.5, {false});
        }) == ErrorKind::input_shape);
}

TEST_CASE("evaluate_scores bookkeeping") {
  const std::vector<int> y{1, 0, 1, 0, 1};
  const std::vector<double> s{0.9, 0.2, 0.4, 0.6, 0.7};
  const std::vector<bool> mask{false, false, true, false, true};
  const auto r = evaluate_scores(y, s, 0.5, mask);
  CHECK(r.n_samples == 5u);
  CHECK(r.counts == ConfusionCounts{2, 1, 1, 1});
  CHECK(r.n_oob_samples == 2u);
  // In range: rows 0, 1, 3 give tp=1, fp=1, tn=1.
  CHECK(oracle::near(r.in_range_f1, 2.0 / 3.0, 1e-15));
  CHECK_FALSE(r.delta_f1_vs_baseline.has_value());
  const auto again = evaluate_scores(y, s, 0.5, mask, &r);
  CHECK(again.delta_f1_vs_baseline.value() == 0.0);
}

TEST_CASE("evaluate on models") {
  const auto m = synth_model(std::vector<std::size_t>{6, 4, 1}, 10);
  const auto data = synth_dataset(m, 3000, 11, 0.05);
  const auto ref = evaluate(m, data.features, data.labels, 0.5);
  CHECK(ref.backend == "reference_bspline");
  // Labels come from the float model.
  CHECK(ref.f1 == 1.0);
  CHECK(ref.n_oob_samples == 150u);
  CHECK(evaluate(m, data.features, data.labels, 0.5, &ref).delta_f1_vs_baseline.value() == 0.0);

  const auto lo = evaluate(compile(m, CompileConfig{2}), data.features, data.labels, 0.5, &ref);
  const auto hi = evaluate(compile(m, CompileConfig{256}), data.features, data.labels, 0.5, &ref);
  CHECK(lo.backend == "lut");
  CHECK(hi.f1 >= lo.f1);
  CHECK(hi.n_oob_samples == 150u);
  CHECK(hi.delta_f1_vs_baseline.value() == doctest::Approx(hi.f1 - ref.f1));
  CHECK(kind_of([&] { evaluate(m, data.features, std::vector<int>{1}, 0.5); }) == ErrorKind::input_shape);
}

TEST_CASE("report JSON round trip and table") {
  const std::vector<int> y{1, 0, 1, 0};
  const std::vector<double> s{0.9, 0.2, 0.4, 0.6};
  auto r = evaluate_scores(y, s, 0.5, std::vector<bool>(4, false));
  r.backend = "lut";
  r.delta_f1_vs_baseline = -0.125;
  const auto text = report_to_json(r);
  const auto j = nlohmann::json::parse(text);
  for (const char* key : {"backend", "n_samples", "threshold", "confusion", "accuracy", "precision", "recall",
                          "f1", "roc_auc", "pr_auc", "delta_f1_vs_baseline", "in_range_f1", "n_oob_samples"}) {
    CHECK_MESSAGE(j.contains(key), key);
  }
  const auto back = report_from_json(text);
  CHECK(back.f1 == r.f1);
  CHECK(back.counts == r.counts);
  CHECK(back.delta_f1_vs_baseline == r.delta_f1_vs_baseline);
  CHECK(report_to_json(back) == text);

  r.delta_f1_vs_baseline.reset();
  CHECK(nlohmann::json::parse(report_to_json(r))["delta_f1_vs_baseline"].is_null());
  CHECK(kind_of([] { report_from_json("{}"); }) == ErrorKind::malformed_model);

  const auto table = report_to_table(r);
  CHECK(table.find("backend") != std::string::npos);
  CHECK(table.find("roc_auc") != std::string::npos);
  CHECK(table.find("0.750000") != std::string::npos);
}
