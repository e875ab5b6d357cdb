#include "svperturb/dense_matrix.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace svperturb {

namespace {

void check_shape(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw DimensionMismatchError("matrix dimensions must be positive");
  }
}

void check_finite(const std::vector<double>& entries) {
  for (double v : entries) {
    if (!std::isfinite(v)) {
      throw NonFiniteError("matrix entry is NaN or Inf");
    }
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, 0.0) {
  check_shape(rows, cols);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  check_shape(rows, cols);
  if (entries_.size() != rows_ * cols_) {
    throw DimensionMismatchError("entry count does not match rows*cols");
  }
  check_finite(entries_);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_eigen(const Eigen::Ref<const EigenMatrix>& m) {
  DenseMatrix out(static_cast<std::size_t>(m.rows()),
                  static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      if (!std::isfinite(v)) {
        throw NonFiniteError("matrix entry is NaN or Inf");
      }
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = v;
    }
  }
  return out;
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : entries_) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatchError("max_abs_diff: shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    m = std::max(m, std::abs(a.entries()[i] - b.entries()[i]));
  }
  return m;
}

void write_matrix_csv(const DenseMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << m.rows() << "," << m.cols() << "\n";
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf << (j + 1 == m.cols() ? "" : ",");
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

DenseMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty matrix file: " + path);
  std::size_t rows = 0, cols = 0;
  {
    std::istringstream header(line);
    char comma = 0;
    if (!(header >> rows >> comma >> cols) || comma != ',') {
      throw IoError("bad matrix header in " + path);
    }
  }
  std::vector<double> entries;
  entries.reserve(rows * cols);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      entries.push_back(std::stod(cell));
    }
  }
  if (entries.size() != rows * cols) {
    throw IoError("matrix body does not match header in " + path);
  }
  return DenseMatrix(rows, cols, std::move(entries));
}

}  // namespace svperturb
