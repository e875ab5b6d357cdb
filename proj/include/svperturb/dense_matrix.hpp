#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "svperturb/errors.hpp"

namespace svperturb {

using EigenMatrix = Eigen::MatrixXd;
using EigenVector = Eigen::VectorXd;

/// Dense rectangular matrix of doubles, row-major storage.
///
/// Construction validates that every entry is finite, so downstream code can
/// rely on clean inputs. Values are immutable-by-convention after they leave
/// the building code: all library operations take `const DenseMatrix&` and
/// return fresh values.
class DenseMatrix {
 public:
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_eigen(const Eigen::Ref<const EigenMatrix>& m);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t i, std::size_t j) const {
    return entries_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return entries_[i * cols_ + j];
  }

  const std::vector<double>& entries() const { return entries_; }

  /// Zero-copy Eigen view of the row-major storage.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
  map() const {
    return {entries_.data(), static_cast<Eigen::Index>(rows_),
            static_cast<Eigen::Index>(cols_)};
  }

  EigenMatrix to_eigen() const { return map(); }

  double max_abs() const;
  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> entries_;
};

/// Maximum absolute entry of the difference; matrices must share shape.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

/// CSV round-trip format: first line "rows,cols", then one comma-separated
/// line per row with 17 significant digits.
void write_matrix_csv(const DenseMatrix& m, const std::string& path);
DenseMatrix read_matrix_csv(const std::string& path);

}  // namespace svperturb
