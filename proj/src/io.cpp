#include "robglm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace robglm {

namespace {

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trimmed(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw data_error("line " + std::to_string(line) + ": " + what);
}

double parse_cell(const std::string& cell, const std::string& column, int line) {
  if (cell.empty()) fail(line, "empty cell in column '" + column + "'");
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + cell.size())
    fail(line, "cell '" + cell + "' in column '" + column + "' is not numeric");
  if (!std::isfinite(v))
    fail(line, "cell '" + cell + "' in column '" + column + "' is not finite");
  return v;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw data_error("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

Dataset parse_csv(const std::string& text, const ColumnSpec& spec, const FamilySpec& fam) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw data_error("empty file: no header row");
  std::vector<std::string> header = split_row(line);
  if (header.empty() || (header.size() == 1 && header[0].empty()))
    throw data_error("empty file: no header row");

  std::size_t y_col = spec.response.empty() ? 0 : find_column(header, spec.response);
  std::vector<std::size_t> x_cols;
  for (const std::string& name : spec.covariates) {
    std::size_t c = find_column(header, name);
    if (c == y_col)
      throw data_error("column '" + name + "' is both response and covariate");
    x_cols.push_back(c);
  }
  bool freq = !spec.count.empty();
  std::size_t n_col = freq ? find_column(header, spec.count) : 0;
  if (freq && n_col == y_col)
    throw data_error("column '" + spec.count + "' is both response and count");

  std::vector<double> ys;
  std::vector<std::vector<double>> xs;
  int line_no = 1;
  while (std::getline(ss, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    std::vector<std::string> cells = split_row(line);
    if (cells.size() != header.size())
      fail(line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                        std::to_string(cells.size()));

    double y = parse_cell(cells[y_col], header[y_col], line_no) - spec.shift;
    if (fam.discrete()) {
      if (!(y >= 0.0) || y != std::floor(y))
        fail(line_no, "response " + cells[y_col] + (spec.shift != 0.0 ? " (after shift)" : "") +
                          " is not a nonnegative count");
    } else if (!(y > 0.0 && y < 1.0)) {
      fail(line_no, "response " + cells[y_col] + (spec.shift != 0.0 ? " (after shift)" : "") +
                        " must lie strictly inside (0,1)");
    }

    std::vector<double> row;
    row.reserve(x_cols.size());
    for (std::size_t c : x_cols) row.push_back(parse_cell(cells[c], header[c], line_no));

    long long copies = 1;
    if (freq) {
      double m = parse_cell(cells[n_col], header[n_col], line_no);
      if (!(m >= 0.0) || m != std::floor(m))
        fail(line_no, "count '" + cells[n_col] + "' is not a nonnegative integer");
      copies = static_cast<long long>(m);
    }
    for (long long k = 0; k < copies; ++k) {
      ys.push_back(y);
      xs.push_back(row);
    }
  }
  if (ys.empty()) throw data_error("no observations: file has a header but no data rows");

  Eigen::Index n = static_cast<Eigen::Index>(ys.size());
  Eigen::Index p = static_cast<Eigen::Index>(x_cols.size()) + 1;
  Dataset data;
  data.y.resize(n);
  data.X.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.y(i) = ys[static_cast<std::size_t>(i)];
    data.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j)
      data.X(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
  }
  return data;
}

Dataset ingest_csv(const std::string& path, const ColumnSpec& spec, const FamilySpec& fam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), spec, fam);
}

}  // namespace robglm
