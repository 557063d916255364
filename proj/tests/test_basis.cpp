#include "meshless/basis.hpp"
#include "meshless/errors.hpp"

#include <Eigen/QR>
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

using namespace meshless;
using namespace meshless::basis;

namespace {

long long binom(int n, int k) {
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

// Direct evaluation of a scaled Taylor monomial.
double monomial(const MultiIndex& a, const Vec3& x, const Vec3& c, double eps) {
  double v = 1.0;
  for (int k = 0; k < 3; ++k) v *= std::pow((x[k] - c[k]) / eps, a[k]) / factorial(a[k]);
  return v;
}

// Divergence of a component-major Taylor vector polynomial, term by term.
std::map<MultiIndex, double> divergence_oracle(const MonomialSet& set, const Eigen::VectorXd& field) {
  std::map<MultiIndex, double> out;
  const int q = set.size();
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < q; ++i) {
      MultiIndex a = set[i];
      if (a[k] == 0) continue;
      --a[k];
      out[a] += field[k * q + i];
    }
  return out;
}

// Laplacian of a component-major Taylor vector polynomial (unscaled variables).
Eigen::VectorXd laplacian_oracle(const MonomialSet& set, const Eigen::VectorXd& field) {
  const int q = set.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(field.size());
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < q; ++i)
      for (int k = 0; k < 3; ++k) {
        MultiIndex a = set[i];
        if (a[k] < 2) continue;
        a[k] -= 2;
        out[c * q + set.find(a)] += field[c * q + i];
      }
  return out;
}

Vec3 random_point(std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_CASE("basis dimensions") {
  for (int m = 1; m <= 6; ++m) {
    const int q = static_cast<int>(binom(m + 3, 3));
    CHECK(scalar_dimension(m) == q);
    CHECK(q == (m + 1) * (m + 2) * (m + 3) / 6);
    CHECK(vector_dimension(m) == 3 * q);
    CHECK(divfree_dimension(m) == 3 * q - binom(m + 2, 3));
    CHECK(MonomialSet(3, m).size() == q);
    const auto basis = DivFreeBasis::build(m);
    CHECK(basis.size() == divfree_dimension(m));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis.coefficients());
    CHECK(qr.rank() == basis.size());
  }
  CHECK(divfree_dimension(2) == 26);
  CHECK(divfree_dimension(4) == 85);
  CHECK(divergence_null_space(2, 2).cols() == 9);
  CHECK_THROWS_AS(DivFreeBasis::build(0), UnsupportedOrder);
  CHECK_THROWS_AS(DivFreeBasis::build(7), UnsupportedOrder);
}

TEST_CASE("multi-index ordering") {
  const MonomialSet set(3, 3);
  CHECK(set[0] == MultiIndex{0, 0, 0});
  CHECK(set[1] == MultiIndex{1, 0, 0});
  CHECK(set.degree_begin(4) == set.size());
  for (int i = 0; i < set.size(); ++i) {
    CHECK(set.find(set[i]) == i);
    if (i > 0) CHECK(degree(set[i - 1]) <= degree(set[i]));
  }
  CHECK(set.find({4, 0, 0}) == -1);
  const auto ids2 = enumerate_multi_indices(2, 2);
  CHECK(ids2.size() == 6);
  for (const auto& a : ids2) CHECK(a[2] == 0);
}

TEST_CASE("scalar basis evaluation") {
  const Vec3 c(0.3, -0.1, 0.7);
  const ScalarBasis b0(3, c, 0.4);
  const auto at_center = b0.eval(c);
  CHECK(at_center[0] == 1.0);
  for (int i = 1; i < b0.size(); ++i) CHECK(at_center[i] == 0.0);

  const ScalarBasis b1(1, Vec3::Zero(), 2.0);
  const auto r1 = b1.eval(Vec3(2.0, 0.0, 0.0));
  CHECK(r1[0] == 1.0);
  CHECK(r1[b1.monomials().find({1, 0, 0})] == 1.0);
  CHECK(r1[b1.monomials().find({0, 1, 0})] == 0.0);
  CHECK(r1[b1.monomials().find({0, 0, 1})] == 0.0);

  const ScalarBasis b2(2, Vec3::Zero(), 1.0);
  const auto r2 = b2.eval(Vec3(1.0, 1.0, 0.0));
  CHECK(r2[b2.monomials().find({1, 1, 0})] == 1.0);
  CHECK(r2[b2.monomials().find({2, 0, 0})] == 0.5);

  std::mt19937 rng(7);
  const ScalarBasis b4(4, c, 0.6);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 x = c + random_point(rng, 0.6);
    const auto row = b4.eval(x);
    for (int i = 0; i < b4.size(); ++i)
      CHECK(row[i] == doctest::Approx(monomial(b4.monomials()[i], x, c, 0.6)).epsilon(1e-13));
    CHECK((b4.eval(x).array() == row.array()).all());
  }
}

TEST_CASE("scalar basis derivatives") {
  const Vec3 c(0.1, 0.2, -0.3);
  const ScalarBasis b(4, c, 0.5);
  const Vec3 x(0.35, 0.05, -0.1);
  CHECK((b.derivative({0, 0, 0}, x).array() == b.eval(x).array()).all());

  const ScalarBasis half(2, c, 0.5);
  const auto d2 = half.derivative({2, 0, 0}, Vec3(0.9, -0.4, 0.2));
  CHECK(d2[half.monomials().find({2, 0, 0})] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(half.derivative({3, 0, 0}, x).isZero(0.0));

  // Central differences of the evaluation.
  const double step = 1e-5;
  for (int k = 0; k < 3; ++k) {
    MultiIndex beta{0, 0, 0};
    beta[k] = 1;
    const Vec3 e = step * Vec3::Unit(k);
    const Eigen::RowVectorXd fd = (b.eval(x + e) - b.eval(x - e)) / (2.0 * step);
    const Eigen::RowVectorXd exact = b.derivative(beta, x);
    CHECK((fd - exact).norm() <= 1e-8 * exact.norm());
    CHECK((b.gradient(x).row(k) - exact).norm() <= 1e-14 * exact.norm());
  }
  const Eigen::RowVectorXd fd2 =
      (b.eval(x + step * 10 * Vec3::UnitY()) - 2.0 * b.eval(x) + b.eval(x - step * 10 * Vec3::UnitY())) /
      (1e-8);
  const Eigen::RowVectorXd exact2 = b.derivative({0, 2, 0}, x);
  CHECK((fd2 - exact2).norm() <= 1e-5 * exact2.norm());

  Eigen::RowVectorXd lap = b.derivative({2, 0, 0}, x) + b.derivative({0, 2, 0}, x) + b.derivative({0, 0, 2}, x);
  CHECK((b.laplacian(x) - lap).norm() <= 1e-13 * lap.norm());
}

TEST_CASE("vector basis divergence") {
  const Vec3 c(0.0, 0.5, 0.2);
  const VectorBasis vb(3, c, 0.7);
  CHECK(vb.size() == 60);
  const Vec3 x(0.2, 0.3, 0.4);
  const double step = 1e-5;
  Eigen::RowVectorXd fd = Eigen::RowVectorXd::Zero(vb.size());
  for (int k = 0; k < 3; ++k) {
    const Vec3 e = step * Vec3::Unit(k);
    fd += ((vb.eval(x + e) - vb.eval(x - e)) / (2.0 * step)).row(k);
  }
  const auto div = vb.divergence(x);
  CHECK((fd - div).norm() <= 1e-8 * div.norm());
}

TEST_CASE("divergence-free members have zero symbolic divergence") {
  for (int m = 1; m <= 6; ++m) {
    const auto basis = DivFreeBasis::build(m);
    const auto& set = basis.monomials();
    for (int i = 0; i < basis.size(); ++i) {
      const Eigen::VectorXd col = basis.coefficients().col(i);
      double worst = 0.0;
      for (const auto& [a, v] : divergence_oracle(set, col)) worst = std::max(worst, std::abs(v));
      CHECK(worst <= 1e-12);
      CHECK(divergence(set, col).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK((divergence_matrix(3, m) * basis.coefficients()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const auto n2 = divergence_null_space(2, 2);
  CHECK((divergence_matrix(2, 2) * n2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("divergence-free evaluation and curl-curl") {
  std::mt19937 rng(11);
  for (int m : {1, 2, 4}) {
    const Vec3 c = random_point(rng);
    const double eps = 0.8;
    const auto basis = DivFreeBasis::build(m).at(c, eps);
    const ScalarBasis scalar(m, c, eps);
    const int q = scalar.size();
    for (int trial = 0; trial < 5; ++trial) {
      const Vec3 x = c + random_point(rng, eps);
      const Eigen::RowVectorXd p = scalar.eval(x);
      const Eigen::MatrixXd psi = basis.eval(x);
      const Eigen::MatrixXd cc = basis.eval_curl_curl(x);
      for (int i = 0; i < basis.size(); ++i) {
        const Eigen::VectorXd col = basis.coefficients().col(i);
        const Eigen::VectorXd lap = laplacian_oracle(basis.monomials(), col);
        for (int k = 0; k < 3; ++k) {
          const double value = p.dot(col.segment(k * q, q));
          CHECK(std::abs(psi(k, i) - value) <= 1e-12 * (1.0 + std::abs(value)));
          const double minus_lap = -p.dot(lap.segment(k * q, q)) / (eps * eps);
          CHECK(std::abs(cc(k, i) - minus_lap) <= 1e-12 * (1.0 + std::abs(minus_lap)));
        }
        if (basis.member_degrees()[static_cast<std::size_t>(i)] == 0) CHECK(cc.col(i).norm() == 0.0);
      }
    }
  }
}

TEST_CASE("divergence-free members are pointwise solenoidal") {
  const Vec3 c(0.2, -0.4, 0.1);
  const auto basis = DivFreeBasis::build(4).at(c, 0.5);
  const Vec3 x(0.4, -0.2, 0.3);
  const double step = 1e-5;
  Eigen::RowVectorXd div = Eigen::RowVectorXd::Zero(basis.size());
  for (int k = 0; k < 3; ++k) {
    const Vec3 e = step * Vec3::Unit(k);
    div += ((basis.eval(x + e) - basis.eval(x - e)) / (2.0 * step)).row(k);
  }
  CHECK(div.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("gauss-legendre rules") {
  for (int n = 1; n <= 8; ++n) {
    const auto& rule = gauss_legendre(n);
    REQUIRE(rule.nodes.size() == static_cast<std::size_t>(n));
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double sum = 0.0;
      for (int s = 0; s < n; ++s) sum += rule.weights[s] * std::pow(rule.nodes[s], k);
      CHECK(sum == doctest::Approx(1.0 / (k + 1)).epsilon(1e-14));
    }
  }
  for (int m = 1; m <= 6; ++m) CHECK(line_quadrature_points(m) == (m + 3) / 2);
}

TEST_CASE("line integrals") {
  std::mt19937 rng(3);
  for (int m = 1; m <= 4; ++m) {
    const Vec3 from = random_point(rng);
    const double eps = 0.6;
    const VectorBasis vb(m, from, eps);
    const Vec3 to = from + random_point(rng, eps);
    const Eigen::RowVectorXd xi = vb.line_integrals(from, to);

    // Dense composite trapezoid oracle.
    const int steps = 100000;
    Eigen::RowVectorXd trap = Eigen::RowVectorXd::Zero(vb.size());
    const Vec3 delta = to - from;
    for (int s = 0; s <= steps; ++s) {
      const double w = (s == 0 || s == steps) ? 0.5 : 1.0;
      trap += w * (delta.transpose() * vb.eval(from + (double(s) / steps) * delta));
    }
    trap /= steps * eps;
    CHECK((xi - trap).cwiseAbs().maxCoeff() <= 1e-10);

    CHECK(vb.line_integrals(from, from).isZero(0.0));
    const int q = vb.scalar().size();
    CHECK(xi[0] == doctest::Approx(delta.x() / eps).epsilon(1e-14));
    CHECK(xi[q] == doctest::Approx(delta.y() / eps).epsilon(1e-14));
    CHECK(xi[2 * q] == doctest::Approx(delta.z() / eps).epsilon(1e-14));
  }
}

TEST_CASE("line integrals of gradients follow the fundamental theorem") {
  std::mt19937 rng(5);
  for (int m = 1; m <= 4; ++m) {
    const Vec3 c = random_point(rng);
    const double eps = 0.7;
    const VectorBasis vb(m, c, eps);
    const ScalarBasis potential(m + 1, c, eps);
    const MonomialSet& vset = vb.scalar().monomials();
    const int q = vset.size();
    const Vec3 to = c + random_point(rng, eps);
    const Eigen::RowVectorXd xi = vb.line_integrals(c, to);
    const Eigen::RowVectorXd s_to = potential.eval(to);
    const Eigen::RowVectorXd s_from = potential.eval(c);
    for (int i = 1; i < potential.size(); ++i) {
      const MultiIndex a = potential.monomials()[i];
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(vb.size());
      for (int k = 0; k < 3; ++k) {
        if (a[k] == 0) continue;
        MultiIndex b = a;
        --b[k];
        grad[k * q + vset.find(b)] = 1.0;
      }
      CHECK(std::abs(xi.dot(grad) - (s_to[i] - s_from[i])) <= 1e-12);
    }
  }
}
