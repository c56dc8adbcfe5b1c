#include <cmath>
#include <fstream>
#include <string>

#include "doctest.h"
#include "robglm/io.hpp"
#include "robglm/types.hpp"

using namespace robglm;

namespace {

Dataset parse_nb(const std::string& text, ColumnSpec spec = {}) {
  return parse_csv(text, spec, negbin_family());
}

}  // namespace

TEST_CASE("csv: response defaults to the first column, intercept is prepended") {
  Dataset d = parse_nb("y,x1\n3,0.5\n1,-0.2\n7,1.0\n");
  CHECK(d.n() == 3);
  CHECK(d.p() == 1);  // no covariates requested: intercept only
  CHECK(d.y(0) == 3.0);
  CHECK(d.y(2) == 7.0);
  CHECK(d.X(0, 0) == 1.0);
  CHECK(d.X(2, 0) == 1.0);
}

TEST_CASE("csv: covariates selected by name, in the requested order") {
  ColumnSpec spec;
  spec.response = "y";
  spec.covariates = {"x2", "x1"};
  Dataset d = parse_csv("x1,y,x2\n0.5,3,10\n-0.25,1,20\n", spec, negbin_family());
  CHECK(d.n() == 2);
  CHECK(d.p() == 3);
  CHECK(d.X(0, 0) == 1.0);   // intercept
  CHECK(d.X(0, 1) == 10.0);  // x2 first, as requested
  CHECK(d.X(0, 2) == 0.5);
  CHECK(d.X(1, 1) == 20.0);
  CHECK(d.X(1, 2) == -0.25);
}

TEST_CASE("csv: frequency expansion replicates each row by its count") {
  ColumnSpec spec;
  spec.count = "count";
  Dataset d = parse_csv("los,count\n0,2\n3,1\n5,3\n", spec, negbin_family());
  CHECK(d.n() == 6);
  CHECK(d.y(0) == 0.0);
  CHECK(d.y(1) == 0.0);
  CHECK(d.y(2) == 3.0);
  CHECK(d.y(3) == 5.0);
  CHECK(d.y(5) == 5.0);
  double mean = d.y.mean();
  CHECK(mean == doctest::Approx((0.0 * 2 + 3.0 + 5.0 * 3) / 6.0));
}

TEST_CASE("csv: a zero count drops the row entirely") {
  ColumnSpec spec;
  spec.count = "count";
  Dataset d = parse_csv("v,count\n4,0\n2,25\n", spec, negbin_family());
  CHECK(d.n() == 25);
  for (Eigen::Index i = 0; i < d.n(); ++i) CHECK(d.y(i) == 2.0);
}

TEST_CASE("csv: shift subtracts a constant before validation") {
  ColumnSpec spec;
  spec.shift = 1.0;
  Dataset d = parse_nb("stay\n1\n4\n116\n", spec);
  CHECK(d.y(0) == 0.0);
  CHECK(d.y(1) == 3.0);
  CHECK(d.y(2) == 115.0);

  // shifting below zero is a validation error mentioning the shift
  try {
    parse_nb("stay\n0\n", spec);
    FAIL("expected data_error");
  } catch (const data_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("after shift") != std::string::npos);
  }
}

TEST_CASE("csv: malformed rows fail with their line number") {
  auto expect_line = [](const std::string& text, const char* needle) {
    try {
      parse_csv(text, {}, negbin_family());
      FAIL_CHECK("expected data_error for: " << text);
    } catch (const data_error& e) {
      std::string msg = e.what();
      CAPTURE(msg);
      CHECK(msg.find(needle) != std::string::npos);
    }
  };
  expect_line("y\n1\nfoo\n", "line 3");        // non-numeric cell
  expect_line("y,x\n1,2\n3\n", "line 3");      // wrong cell count
  expect_line("y\n1\n-2\n", "line 3");         // negative count response
  expect_line("y\n1\n2.5\n", "line 3");        // non-integer count response
  expect_line("y\n1\nnan\n", "line 3");        // non-finite value
}

TEST_CASE("csv: count-column errors carry line numbers too") {
  ColumnSpec spec;
  spec.count = "n";
  auto expect = [&](const std::string& text, const char* needle) {
    try {
      parse_csv(text, spec, negbin_family());
      FAIL_CHECK("expected data_error");
    } catch (const data_error& e) {
      std::string msg = e.what();
      CAPTURE(msg);
      CHECK(msg.find(needle) != std::string::npos);
    }
  };
  expect("y,n\n1,2\n2,-1\n", "line 3");
  expect("y,n\n1,0.5\n", "line 2");
  expect("y,m\n1,2\n", "missing column");  // count column absent from header
}

TEST_CASE("csv: beta responses must lie strictly inside (0,1)") {
  FamilySpec fam = beta_family();
  Dataset d = parse_csv("r\n0.25\n0.5\n0.99\n", {}, fam);
  CHECK(d.n() == 3);
  CHECK_THROWS_AS(parse_csv("r\n0.5\n1.0\n", {}, fam), data_error);
  CHECK_THROWS_AS(parse_csv("r\n0.0\n", {}, fam), data_error);
  // a negative shift moves data up into range
  ColumnSpec spec;
  spec.shift = -0.5;
  Dataset shifted = parse_csv("r\n0.2\n-0.2\n", spec, fam);
  CHECK(shifted.y(0) == doctest::Approx(0.7));
  CHECK(shifted.y(1) == doctest::Approx(0.3));
}

TEST_CASE("csv: structural errors") {
  CHECK_THROWS_AS(parse_nb(""), data_error);                       // no header
  CHECK_THROWS_AS(parse_nb("y\n"), data_error);                    // no data rows
  CHECK_THROWS_AS(parse_nb("y,x\n1,2\n", {"", {"zz"}}), data_error);  // unknown covariate
  ColumnSpec collide;
  collide.covariates = {"y"};
  CHECK_THROWS_AS(parse_nb("y,x\n1,2\n", collide), data_error);  // response as covariate

  // blank lines and trailing carriage returns are tolerated
  Dataset d = parse_nb("y\r\n1\r\n\n2\r\n");
  CHECK(d.n() == 2);
  CHECK(d.y(1) == 2.0);
}

TEST_CASE("csv: ingest_csv reads files and reports unopenable paths") {
  std::string path = "io_roundtrip_tmp.csv";
  {
    std::ofstream f(path, std::ios::binary);
    f << "visits,count\n0,3\n2,4\n9,1\n";
  }
  ColumnSpec spec;
  spec.count = "count";
  Dataset d = ingest_csv(path, spec, negbin_family());
  CHECK(d.n() == 8);
  CHECK(d.y(7) == 9.0);
  std::remove(path.c_str());

  CHECK_THROWS_AS(ingest_csv("definitely_not_a_file_8421.csv", {}, negbin_family()), data_error);
}
