#pragma once

#include "meshless/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <memory>
#include <vector>

namespace meshless::basis {

using MultiIndex = std::array<int, 3>;

inline int degree(const MultiIndex& a) { return a[0] + a[1] + a[2]; }

/// Multi-indices of total degree <= order in `dimension` (2 or 3) variables,
/// ordered by ascending degree and, within a degree, by descending exponent
/// of the leading variable. The constant index always comes first. Unused
/// trailing exponents are zero.
std::vector<MultiIndex> enumerate_multi_indices(int dimension, int order);

/// C(order + 3, 3): number of scalar monomials of degree <= order in 3D.
int scalar_dimension(int order);
/// 3 * C(order + 3, 3).
int vector_dimension(int order);
/// 3 * C(order + 3, 3) - C(order + 2, 3).
int divfree_dimension(int order);

/// Monomial index set with O(1) lookup from exponents to position.
class MonomialSet {
 public:
  MonomialSet(int dimension, int order);

  int dimension() const { return dimension_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const MultiIndex& operator[](int i) const { return indices_[static_cast<std::size_t>(i)]; }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  /// Position of `a`, or -1 when its degree exceeds the order.
  int find(const MultiIndex& a) const;
  /// First position of each degree; entry order+1 equals size().
  int degree_begin(int d) const { return degree_begin_[static_cast<std::size_t>(d)]; }

  /// Coefficients of d/dx_dir of a polynomial given by Taylor coefficients.
  /// Taylor monomials satisfy d/dx_k p_a = p_{a - e_k}, so this is a shift.
  Eigen::VectorXd differentiate(const Eigen::VectorXd& coefficients, int dir) const;

 private:
  int dimension_;
  int order_;
  std::vector<MultiIndex> indices_;
  std::vector<int> lookup_;
  std::vector<int> degree_begin_;
};

/// Taylor monomials p_a(x) = prod_k ((x_k - c_k)/eps)^{a_k} / a_k! of degree
/// <= order about a center c with scale eps.
class ScalarBasis {
 public:
  ScalarBasis(int order, const Vec3& center, double scale);

  int order() const { return order_; }
  int size() const { return set_->size(); }
  const Vec3& center() const { return center_; }
  double scale() const { return scale_; }
  const MonomialSet& monomials() const { return *set_; }

  Eigen::RowVectorXd eval(const Vec3& x) const;
  void eval_into(const Vec3& x, Eigen::Ref<Eigen::RowVectorXd> out) const;
  /// D^beta of every member at x, including the eps^-|beta| chain factor.
  /// Returns a zero row when |beta| exceeds the order.
  Eigen::RowVectorXd derivative(const MultiIndex& beta, const Vec3& x) const;
  /// 3 x Q matrix of first derivatives.
  Eigen::MatrixXd gradient(const Vec3& x) const;
  Eigen::RowVectorXd laplacian(const Vec3& x) const;

 private:
  // powers[d][k] = s_d^k / k! with s = (x - c)/eps.
  void scaled_powers(const Vec3& x, std::array<std::array<double, 16>, 3>& powers) const;

  int order_;
  Vec3 center_;
  double scale_;
  std::shared_ptr<const MonomialSet> set_;
};

/// Vector polynomials e_c p_k; member c*Q + k is the k-th scalar monomial in
/// Cartesian component c.
class VectorBasis {
 public:
  VectorBasis(int order, const Vec3& center, double scale);

  const ScalarBasis& scalar() const { return scalar_; }
  int size() const { return 3 * scalar_.size(); }

  /// 3 x Q_v matrix whose columns are the members evaluated at x.
  Eigen::MatrixXd eval(const Vec3& x) const;
  /// Divergence of every member at x.
  Eigen::RowVectorXd divergence(const Vec3& x) const;

  /// xi_i = integral of phi_i . dx / eps along the straight segment from
  /// `from` to `to`, by Gauss-Legendre quadrature exact for the member degree.
  /// The 1/eps keeps entries dimensionless, matching the monomial scaling.
  Eigen::RowVectorXd line_integrals(const Vec3& from, const Vec3& to) const;
  void line_integrals_into(const Vec3& from, const Vec3& to, Eigen::Ref<Eigen::RowVectorXd> out) const;

 private:
  ScalarBasis scalar_;
};

/// Nodes and weights of the n-point Gauss-Legendre rule mapped to [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& gauss_legendre(int points);
/// Minimal rule exact for the line integrand of order-m vector members.
int line_quadrature_points(int order);

/// Integer divergence matrix mapping vector-polynomial Taylor coordinates
/// (component-major, degree <= order) to scalar Taylor coordinates of degree
/// <= order - 1.
Eigen::MatrixXd divergence_matrix(int dimension, int order);

/// Orthonormal basis of the divergence null space, built degree by degree
/// from an unpivoted Householder QR of each homogeneous block, so every
/// column is a homogeneous divergence-free polynomial. Columns ascend in
/// degree.
Eigen::MatrixXd divergence_null_space(int dimension, int order, std::vector<int>* member_degrees = nullptr);

/// Divergence-free vector polynomials of degree <= m in 3D.
///
/// The abstract coefficients (in unscaled Taylor coordinates) are shared;
/// `at()` binds a center and scale for evaluation.
class DivFreeBasis {
 public:
  static DivFreeBasis build(int order);

  int order() const { return data_->order; }
  int size() const { return static_cast<int>(data_->coefficients.cols()); }
  const Vec3& center() const { return center_; }
  double scale() const { return scale_; }
  DivFreeBasis at(const Vec3& center, double scale) const;

  /// Q_v x Q_d coefficients of the members over component-major Taylor monomials.
  const Eigen::MatrixXd& coefficients() const { return data_->coefficients; }
  /// Q_v x Q_d coefficients of curl(curl(member)) in unscaled variables.
  const Eigen::MatrixXd& curl_curl_coefficients() const { return data_->curl_curl; }
  const std::vector<int>& member_degrees() const { return data_->member_degrees; }
  const MonomialSet& monomials() const { return data_->set; }

  /// 3 x Q_d matrix of members at x.
  Eigen::MatrixXd eval(const Vec3& x) const;
  void eval_into(const Vec3& x, Eigen::Ref<Eigen::MatrixXd> out) const;
  /// 3 x Q_d matrix of curl(curl(member)) at x.
  Eigen::MatrixXd eval_curl_curl(const Vec3& x) const;

 private:
  struct Data {
    int order;
    MonomialSet set;
    Eigen::MatrixXd coefficients;
    Eigen::MatrixXd curl_curl;
    std::vector<int> member_degrees;
    std::vector<int> degree_member_begin;
  };
  explicit DivFreeBasis(std::shared_ptr<const Data> data) : data_(std::move(data)) {}
  Eigen::MatrixXd eval_coefficients(const Eigen::MatrixXd& coefficients, const Vec3& x) const;

  std::shared_ptr<const Data> data_;
  Vec3 center_ = Vec3::Zero();
  double scale_ = 1.0;
};

/// Symbolic curl of a 3D vector polynomial in component-major Taylor coordinates.
Eigen::VectorXd curl(const MonomialSet& set, const Eigen::VectorXd& field);
/// Symbolic divergence; result is indexed by the same monomial set.
Eigen::VectorXd divergence(const MonomialSet& set, const Eigen::VectorXd& field);

}  // namespace meshless::basis
