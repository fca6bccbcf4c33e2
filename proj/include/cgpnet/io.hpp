#pragma once

// Plain-text matrix files. Numbers are written with 17 significant digits
// so a write/read cycle is lossless.

#include <string>

#include "cgpnet/model.hpp"

namespace cgpnet {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double v);

/// Comma-separated rows. A first line that does not parse as numbers is
/// treated as a header and skipped.
Matrix<double> read_matrix_csv(const std::string& path);

/// Writes `m` row by row; with `time_header` a `t0,t1,...` line comes first.
void write_matrix_csv(const std::string& path, const Matrix<double>& m, bool time_header = false);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace cgpnet
