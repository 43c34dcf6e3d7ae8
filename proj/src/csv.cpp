#include "csv.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace confbal {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, int row, const std::string& col) {
  const std::string s = strip(raw);
  if (s.empty())
    raise(ErrorCode::ParseError, "empty cell in column '" + col + "' at data row " +
                                     std::to_string(row));
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    raise(ErrorCode::ParseError, "non-numeric cell '" + s + "' in column '" +
                                     col + "' at data row " + std::to_string(row));
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    raise(ErrorCode::ParseError, "empty file '" + path + "'");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = strip(h);

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      raise(ErrorCode::SchemaError, "column '" + name + "' not found in '" + path + "'");
    return static_cast<int>(it - header.begin());
  };

  if (schema.outcome.empty() || schema.treatment.empty())
    raise(ErrorCode::SchemaError, "schema must name outcome and treatment columns");
  const int y_col = column_of(schema.outcome);
  const int a_col = column_of(schema.treatment);
  if (y_col == a_col)
    raise(ErrorCode::SchemaError, "outcome and treatment must be distinct columns");

  std::vector<std::string> covariate_names = schema.covariates;
  if (covariate_names.empty()) {
    for (int j = 0; j < static_cast<int>(header.size()); ++j)
      if (j != y_col && j != a_col) covariate_names.push_back(header[j]);
  }
  if (covariate_names.empty())
    raise(ErrorCode::SchemaError, "no covariate columns in '" + path + "'");
  std::vector<int> x_cols;
  for (const auto& name : covariate_names) {
    const int c = column_of(name);
    if (c == y_col || c == a_col)
      raise(ErrorCode::SchemaError,
            "covariate '" + name + "' collides with outcome/treatment");
    x_cols.push_back(c);
  }

  std::vector<double> y_vals;
  std::vector<int> a_vals;
  std::vector<double> x_vals;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (strip(line).empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size())
      raise(ErrorCode::ParseError,
            "data row " + std::to_string(row) + " has " +
                std::to_string(fields.size()) + " fields, expected " +
                std::to_string(header.size()));
    const double y = parse_cell(fields[y_col], row, schema.outcome);
    const double a_raw = parse_cell(fields[a_col], row, schema.treatment);
    if (a_raw != 0.0 && a_raw != 1.0)
      raise(ErrorCode::InvariantError,
            "treatment must be 0 or 1, got '" + strip(fields[a_col]) +
                "' at data row " + std::to_string(row));
    if (!std::isfinite(y))
      raise(ErrorCode::InvariantError,
            "non-finite outcome at data row " + std::to_string(row));
    y_vals.push_back(y);
    a_vals.push_back(static_cast<int>(a_raw));
    for (size_t k = 0; k < x_cols.size(); ++k) {
      const double x = parse_cell(fields[x_cols[k]], row, covariate_names[k]);
      if (!std::isfinite(x))
        raise(ErrorCode::InvariantError,
              "non-finite covariate at data row " + std::to_string(row));
      x_vals.push_back(x);
    }
  }
  if (row == 0) raise(ErrorCode::ParseError, "no data rows in '" + path + "'");

  const int n = row;
  const int p = static_cast<int>(x_cols.size());
  MatrixXd X(n, p);
  VectorXi A(n);
  VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    Y[i] = y_vals[i];
    A[i] = a_vals[i];
    for (int j = 0; j < p; ++j) X(i, j) = x_vals[static_cast<size_t>(i) * p + j];
  }
  Dataset d = Dataset::make(std::move(X), std::move(A), std::move(Y),
                            covariate_names);
  d.outcome_name = schema.outcome;
  d.treatment_name = schema.treatment;
  return d;
}

void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
  out << d.outcome_name << ',' << d.treatment_name;
  for (const auto& name : d.covariate_names) out << ',' << name;
  out << '\n';
  for (int i = 0; i < d.n(); ++i) {
    out << format_double(d.Y[i]) << ',' << d.A[i];
    for (int j = 0; j < d.p(); ++j) out << ',' << format_double(d.X(i, j));
    out << '\n';
  }
  if (!out) raise(ErrorCode::IoError, "write failed for '" + path + "'");
}

}  // namespace confbal
