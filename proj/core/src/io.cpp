#include "plnpca/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "plnpca/errors.hpp"
#include "sha1.hpp"

namespace plnpca::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path,
                  std::size_t line, std::size_t col) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  // Tolerate surrounding spaces, nothing else.
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && *(end - 1) == ' ') --end;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw SchemaError(path.string() + ":" + std::to_string(line) + ": column " +
                      std::to_string(col) + ": cannot parse '" + cell + "' as a number");
  }
  return value;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

arma::mat load_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError(path.string() + ": empty file (expected a header row)");
  }
  const std::size_t ncols = split_line(strip_cr(line)).size();
  if (ncols == 0) throw SchemaError(path.string() + ":1: empty header row");

  std::vector<double> values;
  std::size_t nrows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != ncols) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(ncols) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      values.push_back(parse_cell(cells[c], path, lineno, c + 1));
    }
    ++nrows;
  }

  arma::mat out(nrows, ncols);
  for (std::size_t r = 0; r < nrows; ++r) {
    for (std::size_t c = 0; c < ncols; ++c) out(r, c) = values[r * ncols + c];
  }
  return out;
}

void save_csv_matrix(const std::filesystem::path& path, const arma::mat& m,
                     const std::string& col_prefix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  for (arma::uword c = 0; c < m.n_cols; ++c) {
    out << (c ? "," : "") << col_prefix << (c + 1);
  }
  out << '\n';
  for (arma::uword r = 0; r < m.n_rows; ++r) {
    for (arma::uword c = 0; c < m.n_cols; ++c) {
      out << (c ? "," : "") << format_double(m(r, c));
    }
    out << '\n';
  }
  if (!out) throw SchemaError("write failed for '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& y_path,
                     const std::filesystem::path& x_path,
                     const std::filesystem::path& o_path) {
  Dataset data;
  data.Y = load_csv_matrix(y_path);
  data.X = load_csv_matrix(x_path);
  if (o_path.empty()) {
    data.O = arma::zeros(data.Y.n_rows, data.Y.n_cols);
  } else {
    data.O = load_csv_matrix(o_path);
  }
  try {
    data.validate();
  } catch (const SchemaError& e) {
    throw SchemaError(y_path.string() + ": " + e.what());
  }
  return data;
}

void save_theta(const std::filesystem::path& path, const ModelParams& theta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << "block,row,col,value\n";
  for (arma::uword r = 0; r < theta.B.n_rows; ++r) {
    for (arma::uword c = 0; c < theta.B.n_cols; ++c) {
      out << "B," << r << ',' << c << ',' << format_double(theta.B(r, c)) << '\n';
    }
  }
  for (arma::uword r = 0; r < theta.C.n_rows; ++r) {
    for (arma::uword c = 0; c < theta.C.n_cols; ++c) {
      out << "C," << r << ',' << c << ',' << format_double(theta.C(r, c)) << '\n';
    }
  }
  if (!out) throw SchemaError("write failed for '" + path.string() + "'");
}

ModelParams load_theta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "block,row,col,value") {
    throw SchemaError(path.string() + ": expected header 'block,row,col,value'");
  }

  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> b_entries, c_entries;
  std::size_t lineno = 1;
  std::size_t b_rows = 0, b_cols = 0, c_rows = 0, c_cols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 4) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'block,row,col,value'");
    }
    Entry e;
    e.row = static_cast<std::size_t>(parse_cell(cells[1], path, lineno, 2));
    e.col = static_cast<std::size_t>(parse_cell(cells[2], path, lineno, 3));
    e.value = parse_cell(cells[3], path, lineno, 4);
    if (cells[0] == "B") {
      b_entries.push_back(e);
      b_rows = std::max(b_rows, e.row + 1);
      b_cols = std::max(b_cols, e.col + 1);
    } else if (cells[0] == "C") {
      c_entries.push_back(e);
      c_rows = std::max(c_rows, e.row + 1);
      c_cols = std::max(c_cols, e.col + 1);
    } else {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": unknown block '" +
                        cells[0] + "'");
    }
  }
  if (b_entries.size() != b_rows * b_cols || c_entries.size() != c_rows * c_cols) {
    throw SchemaError(path.string() + ": incomplete B or C block");
  }
  ModelParams theta = ModelParams::zeros(b_rows, b_cols, c_cols);
  if (c_rows != b_cols) {
    throw SchemaError(path.string() + ": C row count does not match B column count");
  }
  for (const auto& e : b_entries) theta.B(e.row, e.col) = e.value;
  for (const auto& e : c_entries) theta.C(e.row, e.col) = e.value;
  theta.validate();
  return theta;
}

std::string file_content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path.string() + "' for hashing");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::Sha1 sha;
  const std::string header = "blob " + std::to_string(content.size());
  sha.update(header.data(), header.size() + 1);  // include the trailing NUL
  sha.update(content.data(), content.size());
  return sha.hex_digest();
}

}  // namespace plnpca::io
