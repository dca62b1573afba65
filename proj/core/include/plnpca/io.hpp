#pragma once

#include <armadillo>
#include <filesystem>
#include <string>

#include "plnpca/model.hpp"

namespace plnpca::io {

/// Reads a numeric CSV (comma-separated, one header row, LF). Parse failures
/// raise SchemaError citing file, line and column.
arma::mat load_csv_matrix(const std::filesystem::path& path);

/// Writes a matrix as CSV with header `<prefix>1,...,<prefix>k` and
/// round-trip-exact "%.17g" cells. Byte-stable across reruns.
void save_csv_matrix(const std::filesystem::path& path, const arma::mat& m,
                     const std::string& col_prefix);

/// Loads and validates a dataset. An empty offsets path means zero offsets.
Dataset load_dataset(const std::filesystem::path& y_path,
                     const std::filesystem::path& x_path,
                     const std::filesystem::path& o_path = {});

/// theta CSV, long format: header "block,row,col,value", the B block (d x p)
/// followed by the C block (p x q).
void save_theta(const std::filesystem::path& path, const ModelParams& theta);
ModelParams load_theta(const std::filesystem::path& path);

/// Hex digest of the file content, git blob style
/// (sha1 of "blob <size>\0<bytes>").
std::string file_content_hash(const std::filesystem::path& path);

/// Fixed shortest-exact formatting used by every writer ("%.17g").
std::string format_double(double v);

}  // namespace plnpca::io
