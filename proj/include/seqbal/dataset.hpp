#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqbal/pattern_graph.hpp"

namespace seqbal {

enum class ColumnKind { continuous, discrete };

std::string_view to_string(ColumnKind k);
ColumnKind parse_column_kind(std::string_view s);

/// Read-only view of one observation row.
class RowView {
 public:
  RowView(std::span<const double> values, std::span<const std::uint8_t> observed)
      : values_(values), observed_(observed) {}

  std::size_t size() const { return values_.size(); }
  bool observed(std::size_t j) const { return observed_[j] != 0; }
  /// Throws ContractError if column j is flagged missing in this row.
  double at(std::size_t j) const;

 private:
  std::span<const double> values_;
  std::span<const std::uint8_t> observed_;
};

/// N x d table with a parallel observed mask. Missing cells hold 0.0 and are
/// never handed out: every accessor checks the mask.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> column_names, std::vector<ColumnKind> kinds, std::vector<double> values,
          std::vector<std::uint8_t> observed);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return names_.size(); }
  const std::vector<std::string>& column_names() const { return names_; }
  std::size_t column_index(std::string_view name) const;
  ColumnKind kind(std::size_t j) const { return kinds_[j]; }
  const std::vector<ColumnKind>& kinds() const { return kinds_; }

  bool observed(std::size_t i, std::size_t j) const { return observed_[i * n_cols() + j] != 0; }
  double value(std::size_t i, std::size_t j) const;
  RowView row(std::size_t i) const;

  const Pattern& row_pattern(std::size_t i) const { return row_pattern_[i]; }
  const std::map<Pattern, std::vector<std::size_t>>& pattern_index() const { return pattern_index_; }
  /// Row ids with pattern r (empty when r never occurs).
  const std::vector<std::size_t>& rows_with(const Pattern& r) const;
  const std::vector<std::size_t>& complete_rows() const;

  /// New dataset made of the given rows (repeats allowed), in that order.
  Dataset select_rows(std::span<const std::size_t> rows) const;

 private:
  std::size_t n_rows_ = 0;
  std::vector<std::string> names_;
  std::vector<ColumnKind> kinds_;
  std::vector<double> values_;
  std::vector<std::uint8_t> observed_;
  std::vector<Pattern> row_pattern_;
  std::map<Pattern, std::vector<std::size_t>> pattern_index_;
};

struct CsvOptions {
  std::string na_token = "NA";
  /// Column name -> kind; columns not listed are inferred.
  std::map<std::string, ColumnKind> kind_overrides;
};

/// Parses an RFC-4180 CSV with a header row. Throws LoadError with row and
/// column location on ragged rows or unparsable cells.
Dataset read_csv(std::istream& in, const CsvOptions& opts = {});
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});
void write_csv(const Dataset& ds, std::ostream& out, const std::string& na_token = "NA");
void write_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& na_token = "NA");

/// Quotes a field when it contains a delimiter, quote or newline.
std::string csv_escape(const std::string& field);

/// Integral with at most 10 distinct observed values -> discrete.
ColumnKind infer_kind(std::span<const double> observed_values);

struct GraphCheckReport {
  std::vector<std::string> fatal;
  std::vector<std::string> warnings;
  std::size_t complete_cases = 0;

  bool ok() const { return fatal.empty(); }
  std::string to_string() const;
};

/// Compares the data's patterns against the graph. Throws ContractError when
/// the dimensions differ.
GraphCheckReport check_against_graph(const Dataset& ds, const PatternGraph& g, double overlap_floor = 0.05);

struct ObservedView {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> columns;
  Eigen::MatrixXd values;  // rows.size() x columns.size()
};

/// Values of the columns observed under r on the given rows. Throws
/// ContractError if any requested cell is flagged missing.
ObservedView observed_view(const Dataset& ds, const Pattern& r, std::span<const std::size_t> rows);

}  // namespace seqbal
