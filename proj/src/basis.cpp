#include "meshless/basis.hpp"

#include "meshless/errors.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <string>

namespace meshless::basis {

namespace {

constexpr int kMaxOrder = 15;

int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<int>(r);
}

const std::shared_ptr<const MonomialSet>& cached_set(int order) {
  static const auto cache = [] {
    std::array<std::shared_ptr<const MonomialSet>, kMaxOrder + 1> sets;
    for (int m = 0; m <= kMaxOrder; ++m) sets[static_cast<std::size_t>(m)] = std::make_shared<MonomialSet>(3, m);
    return sets;
  }();
  if (order < 0 || order > kMaxOrder) throw UnsupportedOrder("basis order " + std::to_string(order) + " out of range");
  return cache[static_cast<std::size_t>(order)];
}

}  // namespace

std::vector<MultiIndex> enumerate_multi_indices(int dimension, int order) {
  std::vector<MultiIndex> out;
  for (int d = 0; d <= order; ++d) {
    if (dimension == 2) {
      for (int ax = d; ax >= 0; --ax) out.push_back({ax, d - ax, 0});
    } else {
      for (int ax = d; ax >= 0; --ax) {
        for (int ay = d - ax; ay >= 0; --ay) out.push_back({ax, ay, d - ax - ay});
      }
    }
  }
  return out;
}

int scalar_dimension(int order) { return binomial(order + 3, 3); }
int vector_dimension(int order) { return 3 * scalar_dimension(order); }
int divfree_dimension(int order) { return 3 * binomial(order + 3, 3) - binomial(order + 2, 3); }

MonomialSet::MonomialSet(int dimension, int order)
    : dimension_(dimension), order_(order), indices_(enumerate_multi_indices(dimension, order)) {
  const int side = order + 1;
  lookup_.assign(static_cast<std::size_t>(side * side * side), -1);
  degree_begin_.assign(static_cast<std::size_t>(order + 2), 0);
  for (int i = 0; i < size(); ++i) {
    const MultiIndex& a = indices_[static_cast<std::size_t>(i)];
    lookup_[static_cast<std::size_t>(a[0] + side * (a[1] + side * a[2]))] = i;
  }
  for (int d = 0; d <= order; ++d) {
    int first = size();
    for (int i = 0; i < size(); ++i) {
      if (degree(indices_[static_cast<std::size_t>(i)]) == d) {
        first = i;
        break;
      }
    }
    degree_begin_[static_cast<std::size_t>(d)] = first;
  }
  degree_begin_[static_cast<std::size_t>(order + 1)] = size();
}

int MonomialSet::find(const MultiIndex& a) const {
  if (a[0] < 0 || a[1] < 0 || a[2] < 0 || degree(a) > order_) return -1;
  if (dimension_ == 2 && a[2] != 0) return -1;
  const int side = order_ + 1;
  return lookup_[static_cast<std::size_t>(a[0] + side * (a[1] + side * a[2]))];
}

Eigen::VectorXd MonomialSet::differentiate(const Eigen::VectorXd& coefficients, int dir) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (int i = 0; i < size(); ++i) {
    MultiIndex up = indices_[static_cast<std::size_t>(i)];
    ++up[static_cast<std::size_t>(dir)];
    const int j = find(up);
    if (j >= 0) out[i] = coefficients[j];
  }
  return out;
}

// ---------------------------------------------------------------------------

ScalarBasis::ScalarBasis(int order, const Vec3& center, double scale)
    : order_(order), center_(center), scale_(scale), set_(cached_set(order)) {}

void ScalarBasis::scaled_powers(const Vec3& x, std::array<std::array<double, 16>, 3>& powers) const {
  for (int d = 0; d < 3; ++d) {
    const double s = (x[d] - center_[d]) / scale_;
    auto& row = powers[static_cast<std::size_t>(d)];
    row[0] = 1.0;
    for (int k = 1; k <= order_; ++k) row[static_cast<std::size_t>(k)] = row[static_cast<std::size_t>(k - 1)] * s / k;
  }
}

Eigen::RowVectorXd ScalarBasis::eval(const Vec3& x) const {
  Eigen::RowVectorXd out(size());
  eval_into(x, out);
  return out;
}

void ScalarBasis::eval_into(const Vec3& x, Eigen::Ref<Eigen::RowVectorXd> out) const {
  std::array<std::array<double, 16>, 3> pw;
  scaled_powers(x, pw);
  const auto& idx = set_->indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = pw[0][static_cast<std::size_t>(idx[i][0])] *
                                        pw[1][static_cast<std::size_t>(idx[i][1])] *
                                        pw[2][static_cast<std::size_t>(idx[i][2])];
  }
}

Eigen::RowVectorXd ScalarBasis::derivative(const MultiIndex& beta, const Vec3& x) const {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(size());
  if (degree(beta) > order_) return out;
  std::array<std::array<double, 16>, 3> pw;
  scaled_powers(x, pw);
  const double chain = std::pow(scale_, -degree(beta));
  const auto& idx = set_->indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int ex = idx[i][0] - beta[0], ey = idx[i][1] - beta[1], ez = idx[i][2] - beta[2];
    if (ex < 0 || ey < 0 || ez < 0) continue;
    out[static_cast<Eigen::Index>(i)] = chain * pw[0][static_cast<std::size_t>(ex)] *
                                        pw[1][static_cast<std::size_t>(ey)] *
                                        pw[2][static_cast<std::size_t>(ez)];
  }
  return out;
}

Eigen::MatrixXd ScalarBasis::gradient(const Vec3& x) const {
  Eigen::MatrixXd g(3, size());
  g.row(0) = derivative({1, 0, 0}, x);
  g.row(1) = derivative({0, 1, 0}, x);
  g.row(2) = derivative({0, 0, 1}, x);
  return g;
}

Eigen::RowVectorXd ScalarBasis::laplacian(const Vec3& x) const {
  return derivative({2, 0, 0}, x) + derivative({0, 2, 0}, x) + derivative({0, 0, 2}, x);
}

// ---------------------------------------------------------------------------

VectorBasis::VectorBasis(int order, const Vec3& center, double scale) : scalar_(order, center, scale) {}

Eigen::MatrixXd VectorBasis::eval(const Vec3& x) const {
  const int q = scalar_.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3, 3 * q);
  const Eigen::RowVectorXd p = scalar_.eval(x);
  for (int c = 0; c < 3; ++c) out.block(c, c * q, 1, q) = p;
  return out;
}

Eigen::RowVectorXd VectorBasis::divergence(const Vec3& x) const {
  const int q = scalar_.size();
  Eigen::RowVectorXd out(3 * q);
  out.segment(0, q) = scalar_.derivative({1, 0, 0}, x);
  out.segment(q, q) = scalar_.derivative({0, 1, 0}, x);
  out.segment(2 * q, q) = scalar_.derivative({0, 0, 1}, x);
  return out;
}

Eigen::RowVectorXd VectorBasis::line_integrals(const Vec3& from, const Vec3& to) const {
  Eigen::RowVectorXd out(size());
  line_integrals_into(from, to, out);
  return out;
}

void VectorBasis::line_integrals_into(const Vec3& from, const Vec3& to,
                                      Eigen::Ref<Eigen::RowVectorXd> out) const {
  const int q = scalar_.size();
  const Vec3 delta = to - from;
  const QuadratureRule& rule = gauss_legendre(line_quadrature_points(scalar_.order()));
  Eigen::RowVectorXd averaged = Eigen::RowVectorXd::Zero(q);
  Eigen::RowVectorXd p(q);
  for (std::size_t s = 0; s < rule.nodes.size(); ++s) {
    scalar_.eval_into(from + rule.nodes[s] * delta, p);
    averaged += rule.weights[s] * p;
  }
  const Vec3 scaled = delta / scalar_.scale();
  for (int c = 0; c < 3; ++c) out.segment(c * q, q) = scaled[c] * averaged;
}

int line_quadrature_points(int order) { return (order + 2 + 1) / 2; }

const QuadratureRule& gauss_legendre(int points) {
  static const auto rules = [] {
    std::array<QuadratureRule, 17> table;
    for (int n = 1; n <= 16; ++n) {
      QuadratureRule& rule = table[static_cast<std::size_t>(n)];
      for (int i = 0; i < n; ++i) {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int iter = 0; iter < 100; ++iter) {
          double p0 = 1.0, p1 = t;
          for (int k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
          }
          if (n == 1) p0 = 1.0;
          dp = n * (t * p1 - p0) / (t * t - 1.0);
          const double step = p1 / dp;
          t -= step;
          if (std::abs(step) < 1e-16) break;
        }
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
          const double pk = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = pk;
        }
        if (n == 1) p0 = 1.0;
        dp = n * (t * p1 - p0) / (t * t - 1.0);
        const double w = 2.0 / ((1.0 - t * t) * dp * dp);
        rule.nodes.push_back(0.5 * (1.0 - t));
        rule.weights.push_back(0.5 * w);
      }
    }
    return table;
  }();
  if (points < 1 || points > 16) throw UnsupportedOrder("Gauss-Legendre rule size out of range");
  return rules[static_cast<std::size_t>(points)];
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd divergence_matrix(int dimension, int order) {
  const MonomialSet vec(dimension, order);
  const MonomialSet low(dimension, std::max(order - 1, 0));
  const int q = vec.size();
  const int rows = order >= 1 ? low.size() : 0;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, dimension * q);
  for (int c = 0; c < dimension; ++c) {
    for (int k = 0; k < q; ++k) {
      MultiIndex a = vec[k];
      if (a[static_cast<std::size_t>(c)] == 0) continue;
      --a[static_cast<std::size_t>(c)];
      d(low.find(a), c * q + k) = 1.0;
    }
  }
  return d;
}

Eigen::MatrixXd divergence_null_space(int dimension, int order, std::vector<int>* member_degrees) {
  const MonomialSet vec(dimension, order);
  const MonomialSet low(dimension, std::max(order - 1, 0));
  const int q = vec.size();
  const Eigen::MatrixXd full = divergence_matrix(dimension, order);
  std::vector<Eigen::VectorXd> columns;
  if (member_degrees) member_degrees->clear();
  for (int deg = 0; deg <= order; ++deg) {
    // Coordinates (component, monomial) of homogeneous degree `deg`.
    std::vector<int> coords;
    for (int c = 0; c < dimension; ++c) {
      for (int k = vec.degree_begin(deg); k < vec.degree_begin(deg + 1); ++k) coords.push_back(c * q + k);
    }
    const int n = static_cast<int>(coords.size());
    Eigen::MatrixXd null_block;
    if (deg == 0) {
      null_block = Eigen::MatrixXd::Identity(n, n);
    } else {
      const int r0 = low.degree_begin(deg - 1), r1 = low.degree_begin(deg);
      Eigen::MatrixXd block(r1 - r0, n);
      for (int j = 0; j < n; ++j) block.col(j) = full.block(r0, coords[static_cast<std::size_t>(j)], r1 - r0, 1);
      // Null space of block = trailing columns of Q in block^T = Q R.
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(block.transpose());
      const int rank = r1 - r0;
      const Eigen::MatrixXd r = qr.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
      for (int i = 0; i < rank; ++i) {
        if (std::abs(r(i, i)) < 1e-12) throw Error("divergence block is not surjective");
      }
      const Eigen::MatrixXd qfull = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
      null_block = qfull.rightCols(n - rank);
      // Zero out rounding noise so exact-zero coefficients stay exact.
      null_block = null_block.unaryExpr([](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; });
    }
    for (int j = 0; j < null_block.cols(); ++j) {
      Eigen::VectorXd col = Eigen::VectorXd::Zero(dimension * q);
      for (int i = 0; i < n; ++i) col[coords[static_cast<std::size_t>(i)]] = null_block(i, j);
      columns.push_back(std::move(col));
      if (member_degrees) member_degrees->push_back(deg);
    }
  }
  Eigen::MatrixXd out(dimension * q, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = columns[j];
  return out;
}

Eigen::VectorXd curl(const MonomialSet& set, const Eigen::VectorXd& field) {
  const int q = set.size();
  auto comp = [&](int c) -> Eigen::VectorXd { return field.segment(c * q, q); };
  Eigen::VectorXd out(3 * q);
  out.segment(0, q) = set.differentiate(comp(2), 1) - set.differentiate(comp(1), 2);
  out.segment(q, q) = set.differentiate(comp(0), 2) - set.differentiate(comp(2), 0);
  out.segment(2 * q, q) = set.differentiate(comp(1), 0) - set.differentiate(comp(0), 1);
  return out;
}

Eigen::VectorXd divergence(const MonomialSet& set, const Eigen::VectorXd& field) {
  const int q = set.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q);
  for (int c = 0; c < set.dimension(); ++c) out += set.differentiate(field.segment(c * q, q), c);
  return out;
}

DivFreeBasis DivFreeBasis::build(int order) {
  if (order < 1 || order > 6) {
    throw UnsupportedOrder("divergence-free basis supports orders 1..6, got " + std::to_string(order));
  }
  auto data = std::make_shared<Data>(Data{order, MonomialSet(3, order), {}, {}, {}, {}});
  data->coefficients = divergence_null_space(3, order, &data->member_degrees);
  const Eigen::Index qd = data->coefficients.cols();
  data->curl_curl.resize(data->coefficients.rows(), qd);
  for (Eigen::Index j = 0; j < qd; ++j) {
    data->curl_curl.col(j) = curl(data->set, curl(data->set, data->coefficients.col(j)));
  }
  data->degree_member_begin.assign(static_cast<std::size_t>(order + 2), static_cast<int>(qd));
  for (int j = static_cast<int>(qd) - 1; j >= 0; --j) {
    data->degree_member_begin[static_cast<std::size_t>(data->member_degrees[static_cast<std::size_t>(j)])] = j;
  }
  for (int d = order; d >= 0; --d) {
    auto& b = data->degree_member_begin;
    b[static_cast<std::size_t>(d)] = std::min(b[static_cast<std::size_t>(d)], b[static_cast<std::size_t>(d + 1)]);
  }
  return DivFreeBasis(std::move(data));
}

DivFreeBasis DivFreeBasis::at(const Vec3& center, double scale) const {
  DivFreeBasis out(data_);
  out.center_ = center;
  out.scale_ = scale;
  return out;
}

Eigen::MatrixXd DivFreeBasis::eval(const Vec3& x) const {
  Eigen::MatrixXd out(3, size());
  eval_into(x, out);
  return out;
}

void DivFreeBasis::eval_into(const Vec3& x, Eigen::Ref<Eigen::MatrixXd> out) const {
  // Members are homogeneous, so only the same-degree monomials contribute.
  const ScalarBasis scalar(data_->order, center_, scale_);
  const Eigen::RowVectorXd p = scalar.eval(x);
  const int q = scalar.size();
  const auto& set = data_->set;
  for (int d = 0; d <= data_->order; ++d) {
    const int m0 = data_->degree_member_begin[static_cast<std::size_t>(d)];
    const int m1 = data_->degree_member_begin[static_cast<std::size_t>(d + 1)];
    const int k0 = set.degree_begin(d), k1 = set.degree_begin(d + 1);
    for (int c = 0; c < 3; ++c) {
      out.block(c, m0, 1, m1 - m0).noalias() =
          p.segment(k0, k1 - k0) * data_->coefficients.block(c * q + k0, m0, k1 - k0, m1 - m0);
    }
  }
}

Eigen::MatrixXd DivFreeBasis::eval_coefficients(const Eigen::MatrixXd& coefficients, const Vec3& x) const {
  const ScalarBasis scalar(data_->order, center_, scale_);
  const Eigen::RowVectorXd p = scalar.eval(x);
  const int q = scalar.size();
  Eigen::MatrixXd out(3, coefficients.cols());
  for (int c = 0; c < 3; ++c) out.row(c) = p * coefficients.middleRows(c * q, q);
  return out;
}

Eigen::MatrixXd DivFreeBasis::eval_curl_curl(const Vec3& x) const {
  return eval_coefficients(data_->curl_curl, x) / (scale_ * scale_);
}

}  // namespace meshless::basis
