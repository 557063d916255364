#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace meshless::linsolve {

struct Triplet {
  int row;
  int col;
  double value;
};

/// Compressed row storage with sorted, unique column ids in each row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols), offsets_(static_cast<std::size_t>(rows) + 1, 0) {}

  /// Duplicates are summed; explicit zeros are kept.
  static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> entries);
  static SparseMatrix identity(int n);
  /// Adopts raw CSR arrays; throws if offsets are not monotone or a row has
  /// unsorted or repeated columns.
  static SparseMatrix from_csr(int rows, int cols, std::vector<std::int64_t> offsets, std::vector<int> columns,
                               std::vector<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  std::span<const int> row_cols(int r) const {
    return {cols_idx_.data() + offsets_[static_cast<std::size_t>(r)],
            cols_idx_.data() + offsets_[static_cast<std::size_t>(r) + 1]};
  }
  std::span<const double> row_values(int r) const {
    return {values_.data() + offsets_[static_cast<std::size_t>(r)],
            values_.data() + offsets_[static_cast<std::size_t>(r) + 1]};
  }
  const std::vector<std::int64_t>& offsets() const { return offsets_; }
  const std::vector<int>& column_ids() const { return cols_idx_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  /// Entry (r, c), zero when not stored.
  double coeff(int r, int c) const;

  /// y = A x, parallel over rows; each row is summed in storage order so the
  /// result does not depend on the thread count.
  void multiply(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) const;
  /// y += alpha * A x.
  void multiply_add(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y,
                    double alpha = 1.0) const;
  Eigen::VectorXd operator*(const Eigen::VectorXd& x) const;

  Eigen::MatrixXd to_dense() const;
  Eigen::SparseMatrix<double, Eigen::RowMajor> to_eigen() const;

  class Builder;

  /// Concatenates independently built rows (as produced by parallel row
  /// assembly) in order.
  static SparseMatrix from_rows(int cols, std::vector<std::vector<std::pair<int, double>>>& rows);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::int64_t> offsets_{0};
  std::vector<int> cols_idx_;
  std::vector<double> values_;
};

/// Row-wise builder: rows must be appended in order.
class SparseMatrix::Builder {
 public:
  Builder(int rows, int cols, std::size_t reserve = 0);
  /// Sorts the entries and merges duplicates before appending.
  void append_row(std::vector<std::pair<int, double>>& entries);
  SparseMatrix finish();

 private:
  SparseMatrix m_;
  int next_ = 0;
};

/// Matrix Market `coordinate real general`, 1-based indices.
void write_matrix_market(const SparseMatrix& m, std::ostream& out);
SparseMatrix read_matrix_market(std::istream& in);

}  // namespace meshless::linsolve
