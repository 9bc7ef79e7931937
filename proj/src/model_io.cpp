#include "lutkan/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lutkan/error.hpp"

namespace lutkan {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::malformed_model, path + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) malformed(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) malformed(path.empty() ? key : path + "." + key, "missing required key");
  return *it;
}

double as_real(const json& v, const std::string& path) {
  if (!v.is_number()) malformed(path, "expected a number");
  return v.get<double>();
}

long long as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) malformed(path, "expected an integer");
  return v.get<long long>();
}

std::vector<double> as_reals(const json& v, const std::string& path, std::size_t expected) {
  if (!v.is_array()) malformed(path, "expected an array");
  if (v.size() != expected) {
    malformed(path, "expected " + std::to_string(expected) + " entries, got " +
                        std::to_string(v.size()));
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_real(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

KanLayer layer_from_json(const json& j, const std::string& path) {
  KanLayer layer;
  const auto n_in = as_int(require(j, "n_in", path), path + ".n_in");
  const auto n_out = as_int(require(j, "n_out", path), path + ".n_out");
  if (n_in <= 0) malformed(path + ".n_in", "must be positive");
  if (n_out <= 0) malformed(path + ".n_out", "must be positive");
  layer.n_in = static_cast<std::size_t>(n_in);
  layer.n_out = static_cast<std::size_t>(n_out);

  const std::string gpath = path + ".grid";
  const auto& g = require(j, "grid", path);
  const double lo = as_real(require(g, "domain_min", gpath), gpath + ".domain_min");
  const double hi = as_real(require(g, "domain_max", gpath), gpath + ".domain_max");
  const auto intervals = as_int(require(g, "G", gpath), gpath + ".G");
  const auto degree = as_int(require(g, "k", gpath), gpath + ".k");
  if (intervals <= 0 || intervals > 1 << 20) malformed(gpath + ".G", "must be a positive integer");
  if (degree < 0 || degree > 32) malformed(gpath + ".k", "must be in [0, 32]");
  try {
    layer.grid = KnotGrid(lo, hi, static_cast<int>(intervals), static_cast<int>(degree));
  } catch (const Error& e) {
    malformed(gpath, e.what());
  }

  const std::size_t edges = layer.n_in * layer.n_out;
  const auto alpha = as_reals(require(j, "alpha", path), path + ".alpha", edges);
  const auto beta = as_reals(require(j, "beta", path), path + ".beta", edges);
  const auto& coeffs = require(j, "coeffs", path);
  if (!coeffs.is_array() || coeffs.size() != edges) {
    malformed(path + ".coeffs", "expected an array of " + std::to_string(edges) + " rows");
  }
  const auto p = static_cast<std::size_t>(layer.grid.basis_count());
  layer.edges.resize(edges);
  for (std::size_t e = 0; e < edges; ++e) {
    layer.edges[e].base_scale = alpha[e];
    layer.edges[e].spline_scale = beta[e];
    layer.edges[e].coefficients =
        as_reals(coeffs[e], path + ".coeffs[" + std::to_string(e) + "]", p);
  }
  return layer;
}

}  // namespace

std::string model_to_json(const ModelSpec& model, int indent) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["feature_count"] = model.feature_count;
  doc["threshold"] = model.threshold;
  doc["metadata"] = json::object();
  for (const auto& [k, v] : model.metadata) doc["metadata"][k] = v;
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json l;
    l["n_in"] = layer.n_in;
    l["n_out"] = layer.n_out;
    l["grid"] = {{"domain_min", layer.grid.domain_min()},
                 {"domain_max", layer.grid.domain_max()},
                 {"G", layer.grid.intervals()},
                 {"k", layer.grid.degree()}};
    json alpha = json::array(), beta = json::array(), coeffs = json::array();
    for (const auto& edge : layer.edges) {
      alpha.push_back(edge.base_scale);
      beta.push_back(edge.spline_scale);
      coeffs.push_back(edge.coefficients);
    }
    l["alpha"] = std::move(alpha);
    l["beta"] = std::move(beta);
    l["coeffs"] = std::move(coeffs);
    layers.push_back(std::move(l));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(indent);
}

ModelSpec model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::malformed_model, std::string("model document is not valid JSON: ") +
                                                e.what());
  }
  if (!doc.is_object()) malformed("$", "model document must be an object");
  const auto version = as_int(require(doc, "format_version", ""), "format_version");
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::unsupported_version,
                "format_version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kModelFormatVersion) + ")");
  }
  ModelSpec model;
  const auto features = as_int(require(doc, "feature_count", ""), "feature_count");
  if (features <= 0) malformed("feature_count", "must be positive");
  model.feature_count = static_cast<std::size_t>(features);
  model.threshold = as_real(require(doc, "threshold", ""), "threshold");
  if (auto it = doc.find("metadata"); it != doc.end()) {
    if (!it->is_object()) malformed("metadata", "expected an object");
    for (const auto& [k, v] : it->items()) {
      model.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  const auto& layers = require(doc, "layers", "");
  if (!layers.is_array()) malformed("layers", "expected an array");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    model.layers.push_back(layer_from_json(layers[l], "layers[" + std::to_string(l) + "]"));
  }
  model.validate();
  return model;
}

ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

void save_model(const ModelSpec& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write model file " + path.string());
  out << model_to_json(model, 1) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace lutkan
