#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lutkan/lutkan.hpp"

namespace lutkan::cli {

namespace {

namespace fs = std::filesystem;

struct CompileFlags {
  int lut_size = 8;
  std::string quant = "sym_int8";
  std::string boundary = "half_open";
  std::string oob = "zero_spline";
  std::string value_repr = "spline_component";

  CompileConfig resolve() const {
    CompileConfig c;
    c.lut_size = lut_size;
    c.quant = parse_quant_scheme(quant);
    c.boundary = parse_boundary_mode(boundary);
    c.oob = parse_oob_policy(oob);
    c.value_repr = parse_value_repr(value_repr);
    c.validate();
    return c;
  }
};

struct BenchFlags {
  std::size_t batch = 256;
  std::size_t warmup = 10;
  std::size_t iters = 100;
  std::size_t seeds = 5;
  int threads = 1;
  std::string backend = "lut";
};

struct Options {
  // shared paths
  std::string model = "model.json";
  std::string compiled = "model.klut";
  std::string data = "data.csv";
  std::string out;
  std::string label_column = "label";
  std::optional<double> threshold;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // synth
  std::string topology = "78,32,16,1";
  std::size_t rows = 1000;
  double oob_fraction = 0.0;
  std::optional<std::uint64_t> data_seed;

  // infer / eval
  std::string backend = "lut";
  std::string format = "json";
  std::string stats_out;
  bool no_baseline = false;

  // sweep
  std::string lut_sizes = "2,4,8,16,32,64,128,256";
  std::string quants = "sym_int8";
  std::string boundaries = "half_open";
  std::string oobs = "zero_spline";
  bool no_latency = false;

  // preprocess
  std::string config;
  std::vector<std::string> positive{"1"};
  std::vector<std::string> negative{"0"};
  std::string test_out;
  std::string transform_out;

  CompileFlags compile;
  BenchFlags bench;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

template <class T>
T parse_number(const std::string& s, const char* what) {
  std::istringstream in(s);
  T v{};
  in >> v;
  if (!in || !in.eof()) throw Error(ErrorKind::usage, std::string("bad ") + what + " '" + s + "'");
  return v;
}

std::vector<std::size_t> parse_topology(const std::string& s) {
  std::vector<std::size_t> topo;
  for (const auto& p : split_list(s)) {
    if (p.front() == '-') throw Error(ErrorKind::usage, "topology widths must be positive");
    topo.push_back(parse_number<std::size_t>(p, "topology width"));
  }
  return topo;
}

// Writes to `path`, or to `out` when the path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path);
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
  if (!f) throw Error(ErrorKind::io, "write failed for " + path);
}

double resolve_threshold(const std::optional<double>& flag, double model_default) {
  const double tau = flag.value_or(model_default);
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::config, "threshold must lie in (0, 1)");
  return tau;
}

std::string memory_json(const MemoryBreakdown& m) {
  nlohmann::ordered_json j;
  j["tables"] = m.tables;
  j["quant_params"] = m.quant_params;
  j["scales"] = m.scales;
  j["header"] = m.header;
  j["total"] = m.total;
  return j.dump(2);
}

std::string config_json(const CompileConfig& c) {
  nlohmann::ordered_json j;
  j["lut_size"] = c.lut_size;
  j["quant"] = to_string(c.quant);
  j["boundary"] = to_string(c.boundary);
  j["oob"] = to_string(c.oob);
  j["value_repr"] = to_string(c.value_repr);
  return j.dump(2);
}

std::string stats_json(const InferenceStats& s) {
  nlohmann::ordered_json j;
  j["total_inputs"] = s.total_inputs;
  j["oob_events"] = s.oob_events;
  j["clipped_events"] = s.clipped_events;
  j["hidden_oob_events"] = s.hidden_oob_events;
  return j.dump(2);
}

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

// ---------------------------------------------------------------------------

int run_synth(const Options& o, std::ostream& out) {
  const auto topo = parse_topology(o.topology);
  const ModelSpec model = synth_model(topo, o.seed);
  save_model(model, o.model);
  nlohmann::ordered_json j;
  j["model"] = o.model;
  j["topology"] = model.topology();
  j["parameters"] = model.parameter_count();
  if (o.rows > 0 && !o.data.empty()) {
    const Dataset d = synth_dataset(model, o.rows, o.data_seed.value_or(o.seed + 1), o.oob_fraction);
    write_csv(d, o.data, o.label_column);
    std::size_t pos = 0;
    for (int y : d.labels) pos += static_cast<std::size_t>(y);
    j["data"] = o.data;
    j["rows"] = d.size();
    j["positives"] = pos;
  }
  out << j.dump(2) << '\n';
  return kSuccess;
}

int run_compile(const Options& o, std::ostream& out) {
  const CompileConfig cfg = o.compile.resolve();
  const ModelSpec model = load_model(o.model);
  CompiledModel compiled = compile(model, cfg);
  if (o.threshold) compiled.threshold = resolve_threshold(o.threshold, model.threshold);
  save_compiled(compiled, o.compiled);
  nlohmann::ordered_json j;
  j["compiled"] = o.compiled;
  j["config"] = nlohmann::ordered_json::parse(config_json(cfg));
  j["memory"] = nlohmann::ordered_json::parse(memory_json(measure_memory(compiled)));
  out << j.dump(2) << '\n';
  return kSuccess;
}

int run_infer(const Options& o, std::ostream& out) {
  const Backend backend = parse_backend(o.backend);
  const Matrix batch = read_batch(o.data, o.label_column);
  std::vector<double> probs;
  double tau = 0.5;
  std::optional<InferenceStats> stats;
  if (backend == Backend::lut) {
    const CompiledModel model = load_compiled(o.compiled);
    tau = resolve_threshold(o.threshold, model.threshold);
    auto r = forward_lut(model, batch, static_cast<int>(o.threads));
    probs = std::move(r.probabilities);
    stats = r.stats;
  } else {
    const ModelSpec model = load_model(o.model);
    tau = resolve_threshold(o.threshold, model.threshold);
    probs = forward_reference(model, batch, static_cast<int>(o.threads));
  }
  const auto labels = predict(probs, tau);
  std::string csv = "probability,prediction\n";
  for (std::size_t n = 0; n < probs.size(); ++n) {
    csv += format_prob(probs[n]) + ',' + std::to_string(labels[n]) + '\n';
  }
  emit(o.out, csv, out);
  if (!o.stats_out.empty()) {
    if (!stats) throw Error(ErrorKind::usage, "--stats is only available with --backend lut");
    emit(o.stats_out, stats_json(*stats), out);
  }
  return kSuccess;
}

int run_eval(const Options& o, std::ostream& out) {
  const Backend backend = parse_backend(o.backend);
  if (o.format != "json" && o.format != "table") {
    throw Error(ErrorKind::usage, "--format must be json or table");
  }
  const Dataset data = ingest_csv(o.data, o.label_column);
  EvalReport report;
  if (backend == Backend::lut) {
    const CompiledModel compiled = load_compiled(o.compiled);
    const double tau = resolve_threshold(o.threshold, compiled.threshold);
    if (o.no_baseline) {
      report = evaluate(compiled, data.features, data.labels, tau);
    } else {
      const ModelSpec model = load_model(o.model);
      const EvalReport base = evaluate(model, data.features, data.labels, tau);
      report = evaluate(compiled, data.features, data.labels, tau, &base);
    }
  } else {
    const ModelSpec model = load_model(o.model);
    report = evaluate(model, data.features, data.labels, resolve_threshold(o.threshold, model.threshold));
  }
  emit(o.out, o.format == "json" ? report_to_json(report) : report_to_table(report), out);
  return kSuccess;
}

Matrix bench_rows(const Options& o, const ModelSpec* model, const CompiledModel* compiled) {
  if (!o.data.empty() && fs::exists(o.data)) return read_batch(o.data, o.label_column);
  // No data file: uniform rows over the first-layer domain.
  std::size_t d = 0;
  double lo = 0.0, hi = 1.0;
  if (model) {
    d = model->feature_count;
    lo = model->layers.front().grid.domain_min();
    hi = model->layers.front().grid.domain_max();
  } else {
    d = compiled->feature_count();
    lo = compiled->layers.front().domain_min;
    hi = compiled->layers.front().domain_max;
  }
  Rng rng(o.seed);
  Matrix m(4096, d);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

int run_bench_cmd(const Options& o, std::ostream& out) {
  BenchConfig cfg;
  cfg.batch_size = o.bench.batch;
  cfg.warmup_iters = o.bench.warmup;
  cfg.timed_iters = o.bench.iters;
  cfg.seeds = o.bench.seeds;
  cfg.threads = o.bench.threads;
  cfg.backend = parse_backend(o.bench.backend);
  cfg.validate();

  const bool have_model = fs::exists(o.model);
  std::optional<ModelSpec> model;
  if (have_model || cfg.backend == Backend::reference_bspline) model = load_model(o.model);
  if (cfg.backend == Backend::reference_bspline) {
    const Matrix rows = bench_rows(o, &*model, nullptr);
    const BenchReport r = run_bench(*model, rows, cfg);
    emit(o.out, bench_report_to_json(r), out);
    return r.measurement_unreliable ? kUnreliable : kSuccess;
  }

  const CompiledModel compiled = load_compiled(o.compiled);
  const Matrix rows = bench_rows(o, model ? &*model : nullptr, &compiled);
  BenchReport r = run_bench(compiled, rows, cfg);
  bool unreliable = r.measurement_unreliable;
  if (model && !o.no_baseline) {
    const BenchReport base = run_bench(*model, rows, cfg);
    r.speedup_vs_baseline = speedup(base, r);
    unreliable = unreliable || base.measurement_unreliable;
  }
  emit(o.out, bench_report_to_json(r), out);
  return unreliable ? kUnreliable : kSuccess;
}

int run_sweep(const Options& o, std::ostream& out) {
  SweepGrid grid;
  grid.lut_sizes.clear();
  for (const auto& s : split_list(o.lut_sizes)) grid.lut_sizes.push_back(parse_number<int>(s, "LUT size"));
  grid.quants.clear();
  for (const auto& s : split_list(o.quants)) grid.quants.push_back(parse_quant_scheme(s));
  grid.boundaries.clear();
  for (const auto& s : split_list(o.boundaries)) grid.boundaries.push_back(parse_boundary_mode(s));
  grid.oobs.clear();
  for (const auto& s : split_list(o.oobs)) grid.oobs.push_back(parse_oob_policy(s));
  grid.value_repr = parse_value_repr(o.compile.value_repr);

  BenchConfig cfg;
  cfg.warmup_iters = o.bench.warmup;
  cfg.timed_iters = o.bench.iters;
  cfg.seeds = o.bench.seeds;
  cfg.threads = o.bench.threads;

  ModelSpec model = load_model(o.model);
  model.threshold = resolve_threshold(o.threshold, model.threshold);
  const Dataset data = ingest_csv(o.data, o.label_column);
  SweepOptions opts;
  opts.measure_latency = !o.no_latency;

  if (o.out.empty() || o.out == "-") {
    sweep(model, data, grid, cfg, &out, opts);
    return kSuccess;
  }
  std::ofstream f(o.out, std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot write " + o.out);
  sweep(model, data, grid, cfg, &f, opts);
  if (!f) throw Error(ErrorKind::io, "write failed for " + o.out);
  return kSuccess;
}

int run_inspect(const Options& o, std::ostream& out) {
  const CompiledModel m = load_compiled(o.compiled);
  const MemoryBreakdown mem = measure_memory(m);
  nlohmann::ordered_json j;
  j["magic"] = "KLUT";
  j["version"] = 1;
  j["config"] = nlohmann::ordered_json::parse(config_json(m.config));
  j["threshold"] = m.threshold;
  j["layer_count"] = m.layers.size();
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : m.layers) {
    nlohmann::ordered_json lj;
    lj["n_in"] = l.n_in;
    lj["n_out"] = l.n_out;
    lj["domain_min"] = l.domain_min;
    lj["domain_max"] = l.domain_max;
    lj["G"] = l.intervals;
    lj["k"] = l.degree;
    lj["edges"] = l.edge_count();
    layers.push_back(lj);
  }
  j["layers"] = layers;
  j["edges"] = m.edge_count();
  j["memory"] = nlohmann::ordered_json::parse(memory_json(mem));
  out << j.dump(2) << '\n';
  return kSuccess;
}

int run_preprocess(const Options& o, std::ostream& out) {
  PipelineConfig pipeline;
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) throw Error(ErrorKind::io, "cannot open pipeline config " + o.config);
    std::stringstream ss;
    ss << f.rdbuf();
    pipeline = pipeline_from_json(ss.str());
  } else {
    pipeline.steps = {{StepKind::drop_constant_duplicate}, {StepKind::outlier_3sigma},
                      {StepKind::impute_median},           {StepKind::standardize},
                      {StepKind::stratified_balance},      {StepKind::stratified_split}};
  }
  if (o.seed != 0) pipeline.seed = o.seed;
  pipeline.validate();

  LabelMap labels;
  labels.positive = {o.positive.begin(), o.positive.end()};
  labels.negative = {o.negative.begin(), o.negative.end()};
  const Dataset raw = ingest_csv(o.data, o.label_column, labels);
  const PreprocessResult result = preprocess(raw, pipeline);

  const std::string train_path = o.out.empty() ? "train.csv" : o.out;
  write_csv(result.train, train_path, o.label_column);
  nlohmann::ordered_json j;
  j["input_rows"] = raw.size();
  j["input_columns"] = raw.width();
  j["train"] = train_path;
  j["train_rows"] = result.train.size();
  j["columns"] = result.transform.kept_names;
  if (result.test) {
    const std::string test_path = o.test_out.empty() ? "test.csv" : o.test_out;
    write_csv(*result.test, test_path, o.label_column);
    j["test"] = test_path;
    j["test_rows"] = result.test->size();
  }
  if (!o.transform_out.empty()) {
    nlohmann::ordered_json t;
    t["kept_columns"] = result.transform.kept_columns;
    t["kept_names"] = result.transform.kept_names;
    if (result.transform.medians) t["medians"] = *result.transform.medians;
    if (result.transform.standardization) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& [mean, sd] : *result.transform.standardization) arr.push_back({mean, sd});
      t["standardization"] = arr;
    }
    emit(o.transform_out, t.dump(2), out);
    j["transform"] = o.transform_out;
  }
  j["pipeline"] = nlohmann::ordered_json::parse(pipeline_to_json(pipeline));
  j["warnings"] = result.warnings;
  out << j.dump(2) << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------

void add_compile_flags(CLI::App* app, CompileFlags& f) {
  app->add_option("--lut-size", f.lut_size, "Samples per segment L (>= 2)")->capture_default_str();
  app->add_option("--quant", f.quant, "sym_int8 | asym_uint8")->capture_default_str();
  app->add_option("--boundary", f.boundary, "closed | half_open")->capture_default_str();
  app->add_option("--oob", f.oob, "clip_x | zero_spline")->capture_default_str();
  app->add_option("--value-repr", f.value_repr, "spline_component | full_phi")->capture_default_str();
}

void add_bench_flags(CLI::App* app, BenchFlags& f, bool with_batch) {
  if (with_batch) {
    app->add_option("--batch", f.batch, "Batch size")->capture_default_str();
    app->add_option("--backend", f.backend, "bspline | lut")->capture_default_str();
  }
  app->add_option("--warmup", f.warmup, "Untimed warm-up iterations")->capture_default_str();
  app->add_option("--iters", f.iters, "Timed iterations per seed")->capture_default_str();
  app->add_option("--seeds", f.seeds, "Independent seeds")->capture_default_str();
  app->add_option("--threads", f.threads, "Backend threads (capped by LUTKAN_THREADS)")
      ->capture_default_str();
}

std::vector<std::string> flag_names(const CLI::App* app) {
  std::vector<std::string> names;
  for (const CLI::Option* opt : app->get_options()) {
    for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
  }
  return names;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

int fail(std::ostream& err, std::string_view kind, const std::string& msg, int code) {
  err << "error: " << kind << ": " << one_line(msg) << '\n';
  return code;
}

}  // namespace

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config:
    case ErrorKind::range:
    case ErrorKind::comparison:
      return kUsage;
    case ErrorKind::malformed_model:
    case ErrorKind::unsupported_version:
    case ErrorKind::input_shape:
    case ErrorKind::input_domain:
    case ErrorKind::compile:
    case ErrorKind::degenerate_metric:
    case ErrorKind::fit:
    case ErrorKind::io:
      return kMalformedInput;
  }
  return kInternal;
}

std::string suggest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& c : candidates) {
    std::vector<std::size_t> prev(c.size() + 1), cur(c.size() + 1);
    for (std::size_t j = 0; j <= c.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= word.size(); ++i) {
      cur[0] = i;
      for (std::size_t j = 1; j <= c.size(); ++j) {
        const std::size_t sub = prev[j - 1] + (word[i - 1] == c[j - 1] ? 0 : 1);
        cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
      }
      std::swap(prev, cur);
    }
    if (prev[c.size()] < best_d) {
      best_d = prev[c.size()];
      best = c;
    }
  }
  const std::size_t limit = std::max<std::size_t>(2, word.size() / 3);
  return best_d <= limit ? best : std::string{};
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"LUT-compiled KAN inference toolkit", "lutkan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic model and oracle-labeled data");
  synth->add_option("--topology", o.topology, "Comma-separated layer widths ending in 1")
      ->capture_default_str();
  synth->add_option("--seed", o.seed, "Model seed")->capture_default_str();
  synth->add_option("--out,--model", o.model, "Model JSON output")->capture_default_str();
  synth->add_option("--data", o.data, "Dataset CSV output (empty to skip)")->capture_default_str();
  synth->add_option("--rows", o.rows, "Dataset rows (0 to skip)")->capture_default_str();
  synth->add_option("--oob-fraction", o.oob_fraction, "Fraction of rows with one displaced feature")
      ->capture_default_str();
  synth->add_option("--data-seed", o.data_seed, "Dataset seed (default: seed + 1)");
  synth->add_option("--label-column", o.label_column, "Label column name")->capture_default_str();

  auto* comp = app.add_subcommand("compile", "Compile a model JSON into a KLUT table file");
  comp->add_option("--model", o.model, "Model JSON input")->capture_default_str();
  comp->add_option("--out,--compiled", o.compiled, "KLUT output")->capture_default_str();
  comp->add_option("--threshold", o.threshold, "Override the decision threshold");
  add_compile_flags(comp, o.compile);

  auto* infer = app.add_subcommand("infer", "Score a batch (CSV or KBAT)");
  infer->add_option("--compiled", o.compiled, "KLUT input (lut backend)")->capture_default_str();
  infer->add_option("--model", o.model, "Model JSON input (bspline backend)")->capture_default_str();
  infer->add_option("--data", o.data, "Batch input, CSV or KBAT")->capture_default_str();
  infer->add_option("--backend", o.backend, "bspline | lut")->capture_default_str();
  infer->add_option("--threshold", o.threshold, "Decision threshold (default: model's)");
  infer->add_option("--threads", o.threads, "Backend threads")->capture_default_str();
  infer->add_option("--label-column", o.label_column, "CSV column ignored if present")
      ->capture_default_str();
  infer->add_option("--out", o.out, "Scores CSV output (default: stdout)");
  infer->add_option("--stats", o.stats_out, "Inference counters JSON output");

  auto* eval = app.add_subcommand("eval", "Evaluate decision quality on labeled data");
  eval->add_option("--compiled", o.compiled, "KLUT input")->capture_default_str();
  eval->add_option("--model", o.model, "Model JSON (baseline, or bspline backend)")
      ->capture_default_str();
  eval->add_option("--data", o.data, "Labeled CSV")->capture_default_str();
  eval->add_option("--label-column", o.label_column, "Label column name")->capture_default_str();
  eval->add_option("--backend", o.backend, "bspline | lut")->capture_default_str();
  eval->add_option("--threshold", o.threshold, "Decision threshold (default: model's)");
  eval->add_option("--format", o.format, "json | table")->capture_default_str();
  eval->add_flag("--no-baseline", o.no_baseline, "Skip the float baseline and delta_f1");
  eval->add_option("--out", o.out, "Report output (default: stdout)");

  auto* bench = app.add_subcommand("bench", "Latency protocol: warm-up, timed iterations, seeds");
  bench->add_option("--model", o.model, "Model JSON (reference backend and speedup baseline)")
      ->capture_default_str();
  bench->add_option("--compiled", o.compiled, "KLUT input")->capture_default_str();
  bench->add_option("--data", o.data, "Rows to sample batches from (default: uniform synthetic)")
      ->capture_default_str();
  bench->add_option("--label-column", o.label_column, "CSV column ignored if present")
      ->capture_default_str();
  bench->add_option("--seed", o.seed, "Seed for synthetic rows")->capture_default_str();
  bench->add_flag("--no-baseline", o.no_baseline, "Skip the reference run and speedup");
  bench->add_option("--out", o.out, "Report output (default: stdout)");
  add_bench_flags(bench, o.bench, true);

  auto* sw = app.add_subcommand("sweep", "Quality, latency and memory over a configuration grid");
  sw->add_option("--model", o.model, "Model JSON input")->capture_default_str();
  sw->add_option("--data", o.data, "Labeled CSV")->capture_default_str();
  sw->add_option("--label-column", o.label_column, "Label column name")->capture_default_str();
  sw->add_option("--threshold", o.threshold, "Decision threshold (default: model's)");
  sw->add_option("--lut-sizes", o.lut_sizes, "Comma-separated L values")->capture_default_str();
  sw->add_option("--quants", o.quants, "Comma-separated quantization schemes")->capture_default_str();
  sw->add_option("--boundaries", o.boundaries, "Comma-separated boundary modes")->capture_default_str();
  sw->add_option("--oobs", o.oobs, "Comma-separated OOB policies")->capture_default_str();
  sw->add_option("--value-repr", o.compile.value_repr, "spline_component | full_phi")
      ->capture_default_str();
  sw->add_flag("--no-latency", o.no_latency, "Skip timing; latency columns become nan");
  sw->add_option("--out", o.out, "CSV output (default: stdout)");
  add_bench_flags(sw, o.bench, false);

  auto* insp = app.add_subcommand("inspect", "Dump a KLUT header and size totals");
  insp->add_option("compiled,--compiled", o.compiled, "KLUT input")->capture_default_str();

  auto* pre = app.add_subcommand("preprocess", "Clean, standardize, balance and split a CSV");
  pre->add_option("--data", o.data, "Raw labeled CSV")->capture_default_str();
  pre->add_option("--label-column", o.label_column, "Label column name")->capture_default_str();
  pre->add_option("--positive", o.positive, "Label values mapped to 1 ('*' = any non-negative)")
      ->delimiter(',')
      ->capture_default_str();
  pre->add_option("--negative", o.negative, "Label values mapped to 0")->delimiter(',')->capture_default_str();
  pre->add_option("--config", o.config, "Pipeline JSON (default: all steps)");
  pre->add_option("--seed", o.seed, "Override the pipeline seed");
  pre->add_option("--out", o.out, "Training CSV output (default: train.csv)");
  pre->add_option("--test-out", o.test_out, "Test CSV output (default: test.csv)");
  pre->add_option("--transform-out", o.transform_out, "Fitted transform JSON output");

  auto unknown_subcommand = [&](const std::string& fallback) {
    if (args.empty() || args.front().rfind("-", 0) == 0) return fallback;
    std::vector<std::string> names;
    for (const auto* sub : app.get_subcommands({})) names.push_back(sub->get_name());
    const std::string hint = suggest(args.front(), names);
    return "unknown subcommand '" + args.front() + "'" + (hint.empty() ? "" : "; did you mean " + hint + "?");
  };

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ExtrasError& e) {
    const auto subs = app.get_subcommands();
    if (subs.empty()) return fail(err, "usage", unknown_subcommand(e.what()), kUsage);
    const CLI::App* target = subs.front();
    std::string msg = e.what();
    for (const auto& a : args) {
      if (a.rfind("--", 0) != 0) continue;
      const std::string name = a.substr(0, a.find('='));
      const auto known = flag_names(target);
      if (std::find(known.begin(), known.end(), name) != known.end()) continue;
      const std::string hint = suggest(name, known);
      msg = "unknown flag " + name + (hint.empty() ? "" : "; did you mean " + hint + "?");
      break;
    }
    return fail(err, "usage", msg, kUsage);
  } catch (const CLI::ParseError& e) {
    if (app.get_subcommands().empty()) return fail(err, "usage", unknown_subcommand(e.what()), kUsage);
    return fail(err, "usage", e.what(), kUsage);
  }

  try {
    if (synth->parsed()) return run_synth(o, out);
    if (comp->parsed()) return run_compile(o, out);
    if (infer->parsed()) return run_infer(o, out);
    if (eval->parsed()) return run_eval(o, out);
    if (bench->parsed()) return run_bench_cmd(o, out);
    if (sw->parsed()) return run_sweep(o, out);
    if (insp->parsed()) return run_inspect(o, out);
    if (pre->parsed()) return run_preprocess(o, out);
    return fail(err, "usage", "no subcommand given", kUsage);
  } catch (const Error& e) {
    return fail(err, to_string(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what(), kInternal);
  }
}

}  // namespace lutkan::cli
