#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"

namespace confbal {

/// Column roles for CSV ingestion. Covariates may be listed explicitly (kept
/// in the given order) or left empty, meaning every column that is neither
/// outcome nor treatment, in file order.
struct CsvSchema {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
};

/// Reads a comma-separated file (header row required, decimal-point numerals).
/// Treatment cells must be 0 or 1; any missing or non-numeric cell rejects the
/// whole file. Throws ParseError / SchemaError / InvariantError.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

/// Writes outcome, treatment, then covariates with 17 significant digits so a
/// subsequent load reproduces every double bit for bit.
void write_csv(const Dataset& d, const std::string& path);

/// %.17g formatting used for all numeric text the library emits.
std::string format_double(double v);

}  // namespace confbal
