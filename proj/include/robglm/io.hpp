#pragma once

#include <string>
#include <vector>

#include "robglm/family.hpp"
#include "robglm/types.hpp"

namespace robglm {

// Column selection and response preprocessing for CSV ingestion.
struct ColumnSpec {
  std::string response;                 // response column; "" = first column
  std::vector<std::string> covariates;  // slope columns; empty = intercept-only
  // Frequency format: each file row stands for `count` identical
  // observations.  Names the multiplicity column; "" disables expansion.
  std::string count;
  double shift = 0.0;  // recorded response -> response - shift
};

// Parse UTF-8 comma-separated text with a header row into a modeling dataset
// with a leading intercept column.  Cells are plain `.`-decimal numbers.
// Count responses must be nonnegative integers and proportion responses must
// lie strictly inside (0,1) after the shift; violations, non-numeric cells,
// and missing columns are reported with their 1-based line numbers.
Dataset parse_csv(const std::string& text, const ColumnSpec& spec, const FamilySpec& fam);

// parse_csv on the contents of the file at `path`.
Dataset ingest_csv(const std::string& path, const ColumnSpec& spec, const FamilySpec& fam);

}  // namespace robglm
