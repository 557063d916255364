#include "meshless/sparse.hpp"

#include "meshless/errors.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace meshless::linsolve {

namespace {

void sort_merge(std::vector<std::pair<int, double>>& entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (out > 0 && entries[out - 1].first == entries[i].first) {
      entries[out - 1].second += entries[i].second;
    } else {
      entries[out++] = entries[i];
    }
  }
  entries.resize(out);
}

}  // namespace

SparseMatrix::Builder::Builder(int rows, int cols, std::size_t reserve) : m_(rows, cols) {
  m_.cols_idx_.reserve(reserve);
  m_.values_.reserve(reserve);
}

void SparseMatrix::Builder::append_row(std::vector<std::pair<int, double>>& entries) {
  if (next_ >= m_.rows_) throw Error("sparse builder received too many rows");
  sort_merge(entries);
  for (const auto& [c, v] : entries) {
    if (c < 0 || c >= m_.cols_) throw Error("sparse column index out of range");
    m_.cols_idx_.push_back(c);
    m_.values_.push_back(v);
  }
  ++next_;
  m_.offsets_[static_cast<std::size_t>(next_)] = static_cast<std::int64_t>(m_.values_.size());
}

SparseMatrix SparseMatrix::Builder::finish() {
  while (next_ < m_.rows_) {
    ++next_;
    m_.offsets_[static_cast<std::size_t>(next_)] = static_cast<std::int64_t>(m_.values_.size());
  }
  return std::move(m_);
}

SparseMatrix SparseMatrix::from_rows(int cols, std::vector<std::vector<std::pair<int, double>>>& rows) {
  std::size_t total = 0;
  for (auto& r : rows) {
    sort_merge(r);
    total += r.size();
  }
  Builder b(static_cast<int>(rows.size()), cols, total);
  for (auto& r : rows) {
    b.append_row(r);
    std::vector<std::pair<int, double>>().swap(r);
  }
  return b.finish();
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  Builder b(rows, cols, entries.size());
  std::vector<std::pair<int, double>> row;
  std::size_t i = 0;
  for (int r = 0; r < rows; ++r) {
    row.clear();
    while (i < entries.size() && entries[i].row == r) {
      row.emplace_back(entries[i].col, entries[i].value);
      ++i;
    }
    b.append_row(row);
  }
  if (i != entries.size()) throw Error("triplet row index out of range");
  return b.finish();
}

SparseMatrix SparseMatrix::identity(int n) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

SparseMatrix SparseMatrix::from_csr(int rows, int cols, std::vector<std::int64_t> offsets, std::vector<int> columns,
                                    std::vector<double> values) {
  if (offsets.size() != static_cast<std::size_t>(rows) + 1 || offsets.front() != 0 ||
      offsets.back() != static_cast<std::int64_t>(columns.size()) || columns.size() != values.size()) {
    throw Error("inconsistent CSR arrays");
  }
  for (int r = 0; r < rows; ++r) {
    const auto b = offsets[static_cast<std::size_t>(r)];
    const auto e = offsets[static_cast<std::size_t>(r) + 1];
    if (e < b) throw Error("CSR offsets are not monotone");
    for (auto k = b; k < e; ++k) {
      const int c = columns[static_cast<std::size_t>(k)];
      if (c < 0 || c >= cols) throw Error("sparse column index out of range");
      if (k > b && columns[static_cast<std::size_t>(k) - 1] >= c) throw Error("CSR row columns are not sorted and unique");
    }
  }
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.offsets_ = std::move(offsets);
  m.cols_idx_ = std::move(columns);
  m.values_ = std::move(values);
  return m;
}

double SparseMatrix::coeff(int r, int c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return row_values(r)[static_cast<std::size_t>(it - cols.begin())];
}

void SparseMatrix::multiply(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) const {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (std::int64_t k = offsets_[static_cast<std::size_t>(r)]; k < offsets_[static_cast<std::size_t>(r) + 1]; ++k) {
      s += values_[static_cast<std::size_t>(k)] * x[cols_idx_[static_cast<std::size_t>(k)]];
    }
    y[r] = s;
  }
}

void SparseMatrix::multiply_add(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y,
                                double alpha) const {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (std::int64_t k = offsets_[static_cast<std::size_t>(r)]; k < offsets_[static_cast<std::size_t>(r) + 1]; ++k) {
      s += values_[static_cast<std::size_t>(k)] * x[cols_idx_[static_cast<std::size_t>(k)]];
    }
    y[r] += alpha * s;
  }
}

Eigen::VectorXd SparseMatrix::operator*(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(rows_);
  multiply(x, y);
  return y;
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
  for (int r = 0; r < rows_; ++r) {
    const auto c = row_cols(r);
    const auto v = row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) d(r, c[k]) += v[k];
  }
  return d;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> SparseMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(values_.size());
  for (int r = 0; r < rows_; ++r) {
    const auto c = row_cols(r);
    const auto v = row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) t.emplace_back(r, c[k], v[k]);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> m(rows_, cols_);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

void write_matrix_market(const SparseMatrix& m, std::ostream& out) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonzeros() << '\n';
  out.precision(17);
  for (int r = 0; r < m.rows(); ++r) {
    const auto c = m.row_cols(r);
    const auto v = m.row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) out << r + 1 << ' ' << c[k] + 1 << ' ' << v[k] << '\n';
  }
}

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0) throw Error("missing Matrix Market banner");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate" || (field != "real" && field != "integer") ||
      symmetry != "general") {
    throw Error("only `matrix coordinate real general` Matrix Market files are supported");
  }
  while (std::getline(in, line) && (line.empty() || line[0] == '%')) {
  }
  std::istringstream size_line(line);
  long long rows = 0, cols = 0, nnz = 0;
  if (!(size_line >> rows >> cols >> nnz)) throw Error("malformed Matrix Market size line");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    long long r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v)) throw Error("Matrix Market file ended early");
    t.push_back({static_cast<int>(r - 1), static_cast<int>(c - 1), v});
  }
  return SparseMatrix::from_triplets(static_cast<int>(rows), static_cast<int>(cols), std::move(t));
}

}  // namespace meshless::linsolve
