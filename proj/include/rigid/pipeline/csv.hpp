#pragma once

// Comma-separated numeric tables with a header row. Missing cells are empty
// or one of the configured NA tokens; they are written back as empty cells.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rigid/types.hpp"

namespace rigid {

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // NaN where missing
  Mask mask;      // true = observed

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  Index column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Index>(j);
    return -1;
  }
};

/// Feature table plus response, as produced by load_csv.
struct Dataset {
  std::vector<std::string> feature_names;
  std::string target;
  IncompleteMatrix data;
};

inline const std::set<std::string>& default_na_tokens() {
  static const std::set<std::string> tokens = {"", "NA", "NaN"};
  return tokens;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(unquote(trim(cur)));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(unquote(trim(cur)));
  return out;
}

inline std::string location(Index row, Index col, const std::string& name) {
  return "row " + std::to_string(row) + ", column " + std::to_string(col + 1) + " ('" + name + "')";
}

}  // namespace detail

/// Parses CSV text. Rows are numbered from 1 for the first data line.
inline CsvTable parse_csv(std::istream& in, const std::set<std::string>& na_tokens = default_na_tokens()) {
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "missing header row");
  t.header = detail::split_fields(line);
  const Index p = static_cast<Index>(t.header.size());
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> observed;
  Index row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_fields(line);
    require(static_cast<Index>(fields.size()) == p, ErrorCode::ParseError,
            "row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields, expected " +
                std::to_string(p));
    std::vector<double> vals(static_cast<std::size_t>(p));
    std::vector<bool> obs(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(j)];
      if (na_tokens.count(f)) {
        vals[static_cast<std::size_t>(j)] = std::numeric_limits<double>::quiet_NaN();
        obs[static_cast<std::size_t>(j)] = false;
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      require(ec == std::errc() && ptr == f.data() + f.size() && std::isfinite(v), ErrorCode::ParseError,
              "cannot parse '" + f + "' at " + detail::location(row, j, t.header[static_cast<std::size_t>(j)]));
      vals[static_cast<std::size_t>(j)] = v;
      obs[static_cast<std::size_t>(j)] = true;
    }
    rows.push_back(std::move(vals));
    observed.push_back(std::move(obs));
  }
  const Index n = static_cast<Index>(rows.size());
  t.values.resize(n, p);
  t.mask.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) {
      t.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      t.mask(i, j) = observed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  return t;
}

inline CsvTable read_csv(const std::string& path, const std::set<std::string>& na_tokens = default_na_tokens()) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open '" + path + "'");
  return parse_csv(in, na_tokens);
}

/// Splits a table into features and a fully observed target column.
inline Dataset to_dataset(const CsvTable& t, const std::string& target) {
  const Index tc = t.column(target);
  require(tc >= 0, ErrorCode::InvalidArgument, "target column '" + target + "' not found");
  for (Index i = 0; i < t.rows(); ++i)
    require(t.mask(i, tc), ErrorCode::TargetHasMissing,
            "target '" + target + "' is missing in row " + std::to_string(i + 1));
  Dataset d;
  d.target = target;
  const Index p = t.cols() - 1;
  Matrix v(t.rows(), p);
  Mask m(t.rows(), p);
  Index k = 0;
  for (Index j = 0; j < t.cols(); ++j) {
    if (j == tc) continue;
    d.feature_names.push_back(t.header[static_cast<std::size_t>(j)]);
    v.col(k) = t.values.col(j);
    m.col(k) = t.mask.col(j);
    ++k;
  }
  d.data = IncompleteMatrix(std::move(v), std::move(m), t.values.col(tc));
  return d;
}

inline Dataset load_csv(const std::string& path, const std::string& target,
                        const std::set<std::string>& na_tokens = default_na_tokens()) {
  return to_dataset(read_csv(path, na_tokens), target);
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values,
                      const Mask& mask) {
  require(static_cast<Index>(header.size()) == values.cols() && mask.rows() == values.rows() &&
              mask.cols() == values.cols(),
          ErrorCode::DimensionMismatch, "write_csv: header, values and mask disagree");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      if (mask(i, j)) out << format_double(values(i, j));
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& values,
                      const Mask& mask) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write '" + path + "'");
  write_csv(out, header, values, mask);
  require(out.good(), ErrorCode::IoError, "write to '" + path + "' failed");
}

/// Features followed by the target column.
inline void write_dataset(const std::string& path, const Dataset& d) {
  std::vector<std::string> header = d.feature_names;
  header.push_back(d.target);
  const Index p = d.data.cols();
  Matrix v(d.data.rows(), p + 1);
  Mask m(d.data.rows(), p + 1);
  v.leftCols(p) = d.data.values;
  v.col(p) = d.data.response;
  m.leftCols(p) = d.data.mask;
  m.col(p).setConstant(true);
  write_csv(path, header, v, m);
}

}  // namespace rigid
