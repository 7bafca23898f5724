#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "seqbal/dataset.hpp"
#include "seqbal/error.hpp"
#include "seqbal/simulator.hpp"

using namespace seqbal;
using th::P;

namespace {

Dataset parse(const std::string& text, const CsvOptions& opts = {}) {
  std::istringstream in(text);
  return read_csv(in, opts);
}

}  // namespace

TEST_CASE("one NA cell gives exactly one masked entry") {
  const auto ds = parse("a,b\n1,2\n3,NA\n5,6\n");
  CHECK(ds.n_rows() == 3);
  CHECK(ds.n_cols() == 2);
  int masked = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) masked += ds.observed(i, j) ? 0 : 1;
  CHECK(masked == 1);
  CHECK_FALSE(ds.observed(1, 1));
  CHECK(ds.value(2, 1) == 6.0);
  CHECK_THROWS_AS(ds.value(1, 1), ContractError);
  CHECK_THROWS_AS(ds.row(1).at(1), ContractError);
}

TEST_CASE("pattern index partitions the rows") {
  const auto ds = parse("a,b\n1,2\n3,NA\n5,6\n7,NA\n");
  const auto& idx = ds.pattern_index();
  CHECK(idx.size() == 2);
  CHECK(idx.at(P("11")) == std::vector<std::size_t>{0, 2});
  CHECK(idx.at(P("10")) == std::vector<std::size_t>{1, 3});
  CHECK(ds.complete_rows() == std::vector<std::size_t>{0, 2});
  CHECK(ds.rows_with(P("01")).empty());
  CHECK(ds.row_pattern(3) == P("10"));
}

TEST_CASE("unparsable cell names row and column") {
  try {
    parse("a,b\n1,2\n3,abc\n");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
    CHECK(msg.find("abc") != std::string::npos);
  }
}

TEST_CASE("malformed files") {
  CHECK_THROWS_AS(parse(""), LoadError);
  CHECK_THROWS_AS(parse("a,b\n"), LoadError);
  CHECK_THROWS_AS(parse("a,b\n1,2\n3\n"), LoadError);
  CHECK_THROWS_AS(parse("a,b\n1,\"2\n"), LoadError);
  CHECK_THROWS_AS(load_csv(th::source_dir() / "data" / "missing.csv"), LoadError);
  CsvOptions bad;
  bad.kind_overrides["zzz"] = ColumnKind::discrete;
  CHECK_THROWS_AS(parse("a,b\n1,2\n", bad), LoadError);
}

TEST_CASE("quoted fields and custom NA token") {
  CsvOptions opts;
  opts.na_token = ".";
  const auto ds = parse("\"x, first\",\"y\"\"q\"\n\"1.5\",.\r\n2,3\r\n", opts);
  CHECK(ds.column_names()[0] == "x, first");
  CHECK(ds.column_names()[1] == "y\"q");
  CHECK(ds.value(0, 0) == 1.5);
  CHECK_FALSE(ds.observed(0, 1));
  CHECK(ds.value(1, 1) == 3.0);
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("plain") == "plain");
}

TEST_CASE("column kind inference and overrides") {
  const auto ds = parse("y,x,z\n0,0.5,1\n1,1.5,2\n1,2.5,3\n0,NA,4\n");
  CHECK(ds.kind(0) == ColumnKind::discrete);
  CHECK(ds.kind(1) == ColumnKind::continuous);
  CHECK(ds.kind(2) == ColumnKind::discrete);
  CsvOptions opts;
  opts.kind_overrides["z"] = ColumnKind::continuous;
  CHECK(parse("y,x,z\n0,0.5,1\n1,1.5,2\n", opts).kind(2) == ColumnKind::continuous);
  std::vector<double> many;
  for (int k = 0; k < 11; ++k) many.push_back(k);
  CHECK(infer_kind(many) == ColumnKind::continuous);
  many.pop_back();
  CHECK(infer_kind(many) == ColumnKind::discrete);
  CHECK(parse_column_kind("discrete") == ColumnKind::discrete);
  CHECK_THROWS_AS(parse_column_kind("ordinal"), ParseError);
}

TEST_CASE("CSV round trip reproduces values, mask and patterns") {
  SimConfig cfg = default_sim_config();
  cfg.n = 300;
  const auto gen = generate(cfg, 3);
  const auto& ds = gen.data;
  std::ostringstream out;
  write_csv(ds, out, "NA");
  std::istringstream in(out.str());
  CsvOptions opts;
  for (std::size_t j = 0; j < ds.n_cols(); ++j) opts.kind_overrides[ds.column_names()[j]] = ds.kind(j);
  const auto back = read_csv(in, opts);
  REQUIRE(back.n_rows() == ds.n_rows());
  REQUIRE(back.n_cols() == ds.n_cols());
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    CHECK(back.row_pattern(i) == ds.row_pattern(i));
    for (std::size_t j = 0; j < ds.n_cols(); ++j) {
      REQUIRE(back.observed(i, j) == ds.observed(i, j));
      if (ds.observed(i, j)) CHECK(back.value(i, j) == ds.value(i, j));
    }
  }
  CHECK(back.pattern_index() == ds.pattern_index());
  std::size_t total = 0;
  for (const auto& [p, rows] : ds.pattern_index()) total += rows.size();
  CHECK(total == ds.n_rows());
}

TEST_CASE("check_against_graph") {
  const auto g = simulation_graph();
  SUBCASE("clean data") {
    SimConfig cfg = default_sim_config();
    const auto gen = generate(cfg, 0);
    const auto rep = check_against_graph(gen.data, g);
    CHECK(rep.ok());
    CHECK(rep.complete_cases == gen.data.complete_rows().size());
  }
  SUBCASE("pattern outside the graph is fatal") {
    Eigen::MatrixXd m(3, 5);
    m << 1, 1, 1, 1, 1, 0, 2, 3, 4, 5, NAN, NAN, 1, 1, NAN;
    const auto ds = oracle::make_dataset(m);
    REQUIRE(ds.row_pattern(2) == P("00110"));
    const auto rep = check_against_graph(ds, g);
    CHECK_FALSE(rep.ok());
    CHECK(rep.to_string().find("pattern not in graph") != std::string::npos);
  }
  SUBCASE("no complete cases is fatal") {
    Eigen::MatrixXd m(2, 5);
    m << NAN, 1, 1, 1, 1, 1, NAN, 1, 1, 1;
    const auto rep = check_against_graph(oracle::make_dataset(m), g);
    CHECK_FALSE(rep.ok());
    CHECK(rep.to_string().find("no complete cases") != std::string::npos);
  }
  SUBCASE("low overlap and empty nodes are warnings") {
    Eigen::MatrixXd m(30, 5);
    m.setOnes();
    for (int i = 1; i < 30; ++i) m(i, 0) = NAN;
    const auto rep = check_against_graph(oracle::make_dataset(m), g);
    CHECK(rep.ok());
    CHECK(rep.complete_cases == 1);
    CHECK(rep.warnings.size() >= 2);
  }
  SUBCASE("dimension mismatch") {
    Eigen::MatrixXd m(2, 3);
    m.setOnes();
    CHECK_THROWS_AS(check_against_graph(oracle::make_dataset(m), g), ContractError);
  }
}

TEST_CASE("observed_view") {
  Eigen::MatrixXd m(4, 3);
  m << 1, 2, 3, 4, 5, 6, NAN, 8, 9, 10, NAN, 12;
  const auto ds = oracle::make_dataset(m);
  const std::vector<std::size_t> cc{0, 1};
  const auto v = observed_view(ds, P("101"), cc);
  CHECK(v.columns == std::vector<std::size_t>{0, 2});
  CHECK(v.values(1, 0) == 4.0);
  CHECK(v.values(1, 1) == 6.0);

  const auto full = observed_view(ds, P("111"), cc);
  CHECK(full.values.rows() == 2);
  CHECK(full.values.cols() == 3);

  const std::vector<std::size_t> r011{2};
  CHECK_THROWS_AS(observed_view(ds, P("110"), r011), ContractError);
  const std::vector<std::size_t> r101{3};
  CHECK(observed_view(ds, P("101"), r101).values(0, 1) == 12.0);
}

TEST_CASE("complete-case views have no masked cells for any graph node") {
  SimConfig cfg = default_sim_config();
  const auto gen = generate(cfg, 1);
  for (const auto& r : cfg.graph.nodes()) CHECK_NOTHROW(observed_view(gen.data, r, gen.data.complete_rows()));
}

TEST_CASE("select_rows") {
  const auto ds = parse("a,b\n1,2\n3,NA\n5,6\n");
  const std::vector<std::size_t> rows{2, 1, 2};
  const auto s = ds.select_rows(rows);
  CHECK(s.n_rows() == 3);
  CHECK(s.value(0, 0) == 5.0);
  CHECK_FALSE(s.observed(1, 1));
  CHECK(s.complete_rows() == std::vector<std::size_t>{0, 2});
  CHECK(ds.column_index("b") == 1);
  CHECK_THROWS_AS(ds.column_index("c"), LookupError);
}
