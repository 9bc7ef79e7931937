#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "lutkan/data.hpp"
#include "lutkan/error.hpp"

namespace lutkan {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

bool parse_cell(const std::string& cell, double& out) {
  if (cell.empty()) {
    out = kMissing;
    return true;
  }
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') return false;
  out = std::isfinite(v) ? v : kMissing;
  return true;
}

std::string format_real(double v) {
  if (std::isnan(v)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

RawTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open CSV file " + path.string());
  RawTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      t.header = split_record(line);
      continue;
    }
    t.rows.push_back(split_record(line));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw Error(ErrorKind::input_shape, "CSV file has no header: " + path.string());
  return t;
}

std::string list_rows(const std::vector<std::size_t>& rows) {
  std::string s;
  for (std::size_t i = 0; i < rows.size() && i < 20; ++i) {
    if (i) s += ", ";
    s += std::to_string(rows[i]);
  }
  if (rows.size() > 20) s += ", ... (" + std::to_string(rows.size()) + " total)";
  return s;
}

}  // namespace

std::size_t Dataset::missing_count() const {
  return static_cast<std::size_t>(std::count_if(features.data().begin(), features.data().end(),
                                                [](double v) { return std::isnan(v); }));
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.select_rows(rows);
  out.feature_names = feature_names;
  out.standardization = standardization;
  if (!labels.empty()) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
  }
  return out;
}

int LabelMap::map(const std::string& raw) const {
  if (negative.count(raw)) return 0;
  if (positive.count(raw) || positive.count("*")) return 1;
  throw Error(ErrorKind::input_domain, "unknown label value '" + raw + "'");
}

Dataset ingest_csv(const std::filesystem::path& path, const std::string& label_column,
                   const LabelMap& label_map) {
  const RawTable t = read_table(path);
  std::optional<std::size_t> label_idx;
  if (!label_column.empty()) {
    auto it = std::find(t.header.begin(), t.header.end(), label_column);
    if (it == t.header.end()) {
      throw Error(ErrorKind::input_shape, "label column '" + label_column + "' not found");
    }
    label_idx = static_cast<std::size_t>(it - t.header.begin());
  }

  Dataset d;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (!label_idx || c != *label_idx) d.feature_names.push_back(t.header[c]);
  }
  const std::size_t width = d.feature_names.size();
  std::vector<double> values;
  values.reserve(t.rows.size() * width);
  std::vector<std::size_t> bad_rows, bad_labels;
  std::string first_bad_label;

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cells = t.rows[r];
    if (cells.size() != t.header.size()) {
      bad_rows.push_back(t.line_numbers[r]);
      continue;
    }
    bool ok = true;
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (label_idx && c == *label_idx) continue;
      double v;
      if (!parse_cell(cells[c], v)) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      bad_rows.push_back(t.line_numbers[r]);
      continue;
    }
    if (label_idx) {
      try {
        d.labels.push_back(label_map.map(cells[*label_idx]));
      } catch (const Error&) {
        if (bad_labels.empty()) first_bad_label = cells[*label_idx];
        bad_labels.push_back(t.line_numbers[r]);
        continue;
      }
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  if (!bad_rows.empty()) {
    throw Error(ErrorKind::input_shape,
                "unparseable CSV rows in " + path.string() + " at lines " + list_rows(bad_rows));
  }
  if (!bad_labels.empty()) {
    throw Error(ErrorKind::input_domain, "unknown label value '" + first_bad_label +
                                             "' at lines " + list_rows(bad_labels));
  }
  const std::size_t n = width == 0 ? 0 : values.size() / width;
  d.features = Matrix(n, width, std::move(values));
  return d;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write CSV file " + path.string());
  const bool with_labels = !data.labels.empty();
  for (std::size_t c = 0; c < data.feature_names.size(); ++c) {
    if (c) out << ',';
    out << data.feature_names[c];
  }
  if (with_labels) out << (data.feature_names.empty() ? "" : ",") << label_column;
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = data.features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << format_real(row[c]);
    }
    if (with_labels) out << (row.empty() ? "" : ",") << data.labels[r];
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

Matrix read_kbat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open batch file " + path.string());
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  if (in.gcount() != 16 || std::memcmp(header, "KBAT", 4) != 0) {
    throw Error(ErrorKind::input_shape, "not a KBAT batch file: " + path.string());
  }
  const std::size_t n = le32(header + 4);
  const std::size_t d = le32(header + 8);
  const auto expected = n * d * 4;
  std::vector<unsigned char> body(expected);
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected || in.peek() != EOF) {
    throw Error(ErrorKind::input_shape, "KBAT payload size does not match N x d");
  }
  Matrix m(n, d);
  for (std::size_t i = 0; i < n * d; ++i) {
    m.data()[i] = static_cast<double>(std::bit_cast<float>(le32(body.data() + 4 * i)));
  }
  return m;
}

void write_kbat(const Matrix& batch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write batch file " + path.string());
  out.write("KBAT", 4);
  put32(out, static_cast<std::uint32_t>(batch.rows()));
  put32(out, static_cast<std::uint32_t>(batch.cols()));
  put32(out, 0);
  for (double v : batch.data()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

Matrix read_batch(const std::filesystem::path& path, const std::string& skip_column) {
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open batch file " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, "KBAT", 4) == 0) return read_kbat(path);
  }
  const RawTable t = read_table(path);
  const bool has_skip = std::find(t.header.begin(), t.header.end(), skip_column) != t.header.end();
  return ingest_csv(path, has_skip ? skip_column : std::string{},
                    LabelMap{{"*"}, {}})
      .features;
}

}  // namespace lutkan
