#include "seqbal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "seqbal/error.hpp"

namespace seqbal {

std::string_view to_string(ColumnKind k) { return k == ColumnKind::discrete ? "discrete" : "continuous"; }

ColumnKind parse_column_kind(std::string_view s) {
  if (s == "discrete") return ColumnKind::discrete;
  if (s == "continuous") return ColumnKind::continuous;
  throw ParseError("unknown column kind \"" + std::string(s) + "\" (expected continuous or discrete)");
}

double RowView::at(std::size_t j) const {
  if (j >= values_.size()) throw ContractError("column index out of range");
  if (!observed_[j]) throw ContractError("column " + std::to_string(j + 1) + " is missing in this row");
  return values_[j];
}

Dataset::Dataset(std::vector<std::string> column_names, std::vector<ColumnKind> kinds, std::vector<double> values,
                 std::vector<std::uint8_t> observed)
    : names_(std::move(column_names)), kinds_(std::move(kinds)), values_(std::move(values)),
      observed_(std::move(observed)) {
  const auto d = names_.size();
  if (d == 0) throw ContractError("dataset needs at least one column");
  if (kinds_.size() != d) throw ContractError("column kind count does not match column count");
  if (values_.size() % d != 0 || observed_.size() != values_.size())
    throw ContractError("value and mask sizes are inconsistent with the column count");
  n_rows_ = values_.size() / d;
  row_pattern_.reserve(n_rows_);
  std::string bits(d, '0');
  for (std::size_t i = 0; i < n_rows_; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      auto& m = observed_[i * d + j];
      m = m ? 1 : 0;
      if (!m) values_[i * d + j] = 0.0;
      bits[j] = m ? '1' : '0';
    }
    row_pattern_.push_back(parse_pattern(bits));
    pattern_index_[row_pattern_.back()].push_back(i);
  }
}

std::size_t Dataset::column_index(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw LookupError("unknown column \"" + std::string(name) + "\"");
  return static_cast<std::size_t>(it - names_.begin());
}

double Dataset::value(std::size_t i, std::size_t j) const {
  if (!observed(i, j))
    throw ContractError("cell (row " + std::to_string(i + 1) + ", column " + names_[j] + ") is missing");
  return values_[i * n_cols() + j];
}

RowView Dataset::row(std::size_t i) const {
  const auto d = n_cols();
  return RowView(std::span<const double>(values_).subspan(i * d, d),
                 std::span<const std::uint8_t>(observed_).subspan(i * d, d));
}

const std::vector<std::size_t>& Dataset::rows_with(const Pattern& r) const {
  static const std::vector<std::size_t> empty;
  auto it = pattern_index_.find(r);
  return it == pattern_index_.end() ? empty : it->second;
}

const std::vector<std::size_t>& Dataset::complete_rows() const { return rows_with(Pattern::complete(n_cols())); }

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  const auto d = n_cols();
  std::vector<double> v;
  std::vector<std::uint8_t> m;
  v.reserve(rows.size() * d);
  m.reserve(rows.size() * d);
  for (auto i : rows) {
    if (i >= n_rows_) throw ContractError("row index out of range");
    v.insert(v.end(), values_.begin() + i * d, values_.begin() + (i + 1) * d);
    m.insert(m.end(), observed_.begin() + i * d, observed_.begin() + (i + 1) * d);
  }
  return Dataset(names_, kinds_, std::move(v), std::move(m));
}

// ---------------------------------------------------------------------------

namespace {

// Reads one RFC-4180 record. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  ++line;
  for (int c; (c = in.get()) != std::char_traits<char>::eof();) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else if (c == '\n') {
      break;
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
  if (quoted) throw LoadError("unterminated quoted field at line " + std::to_string(line));
  fields.push_back(std::move(field));
  return any;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

ColumnKind infer_kind(std::span<const double> values) {
  std::set<double> distinct;
  for (double v : values) {
    if (v != std::floor(v)) return ColumnKind::continuous;
    distinct.insert(v);
    if (distinct.size() > 10) return ColumnKind::continuous;
  }
  return distinct.empty() ? ColumnKind::continuous : ColumnKind::discrete;
}

Dataset read_csv(std::istream& in, const CsvOptions& opts) {
  std::vector<std::string> header;
  std::size_t line = 0;
  if (!read_record(in, header, line) || (header.size() == 1 && trim(header[0]).empty()))
    throw LoadError("empty CSV: a header row is required");
  for (auto& h : header) h = trim(h);
  const auto d = header.size();

  std::vector<double> values;
  std::vector<std::uint8_t> observed;
  std::vector<std::string> fields;
  std::size_t row = 0;
  while (read_record(in, fields, line)) {
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
    ++row;
    if (fields.size() != d)
      throw LoadError("row " + std::to_string(row) + " (line " + std::to_string(line) + ") has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) {
      const auto cell = trim(fields[j]);
      if (cell == opts.na_token) {
        values.push_back(0.0);
        observed.push_back(0);
        continue;
      }
      double v = 0.0;
      if (!parse_double(cell, v))
        throw LoadError("unparsable numeric cell \"" + cell + "\" at row " + std::to_string(row) + ", column " +
                        std::to_string(j + 1) + " (" + header[j] + ")");
      values.push_back(v);
      observed.push_back(1);
    }
  }
  if (row == 0) throw LoadError("CSV has a header but no data rows");

  std::vector<ColumnKind> kinds(d);
  for (std::size_t j = 0; j < d; ++j) {
    if (auto it = opts.kind_overrides.find(header[j]); it != opts.kind_overrides.end()) {
      kinds[j] = it->second;
      continue;
    }
    std::vector<double> col;
    for (std::size_t i = 0; i < row; ++i)
      if (observed[i * d + j]) col.push_back(values[i * d + j]);
    kinds[j] = infer_kind(col);
  }
  for (const auto& [name, k] : opts.kind_overrides)
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw LoadError("column kind override for unknown column \"" + name + "\"");
  return Dataset(std::move(header), std::move(kinds), std::move(values), std::move(observed));
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open data file " + path.string());
  return read_csv(in, opts);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv(const Dataset& ds, std::ostream& out, const std::string& na_token) {
  const auto d = ds.n_cols();
  for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << csv_escape(ds.column_names()[j]);
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) out << ',';
      if (!ds.observed(i, j)) {
        out << csv_escape(na_token);
        continue;
      }
      // Shortest representation that round-trips exactly.
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, ds.value(i, j));
      out << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

void write_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& na_token) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  write_csv(ds, out, na_token);
}

// ---------------------------------------------------------------------------

std::string GraphCheckReport::to_string() const {
  std::ostringstream os;
  for (const auto& f : fatal) os << "fatal: " << f << '\n';
  for (const auto& w : warnings) os << "warning: " << w << '\n';
  os << "complete cases: " << complete_cases << '\n';
  return os.str();
}

GraphCheckReport check_against_graph(const Dataset& ds, const PatternGraph& g, double overlap_floor) {
  if (ds.n_cols() != g.dim())
    throw ContractError("dataset has " + std::to_string(ds.n_cols()) + " columns but the graph has d = " +
                        std::to_string(g.dim()));
  GraphCheckReport report;
  for (const auto& [p, rows] : ds.pattern_index())
    if (!g.contains(p))
      report.fatal.push_back("pattern not in graph: " + p.str() + " (" + std::to_string(rows.size()) + " rows)");
  for (const auto& n : g.nodes())
    if (ds.rows_with(n).empty() && !n.is_complete()) report.warnings.push_back("graph node " + n.str() + " has no rows");
  report.complete_cases = ds.complete_rows().size();
  if (report.complete_cases == 0) {
    report.fatal.push_back("no complete cases");
  } else if (static_cast<double>(report.complete_cases) < overlap_floor * static_cast<double>(ds.n_rows())) {
    std::ostringstream os;
    os << "complete-case proportion " << static_cast<double>(report.complete_cases) / ds.n_rows()
       << " is below the overlap floor " << overlap_floor;
    report.warnings.push_back(os.str());
  }
  return report;
}

ObservedView observed_view(const Dataset& ds, const Pattern& r, std::span<const std::size_t> rows) {
  if (r.size() != ds.n_cols()) throw ContractError("pattern length does not match dataset dimension");
  ObservedView view;
  view.rows.assign(rows.begin(), rows.end());
  view.columns = r.observed_columns();
  view.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(view.columns.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < view.columns.size(); ++b)
      view.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = ds.value(rows[a], view.columns[b]);
  return view;
}

}  // namespace seqbal
