#include "meshless/errors.hpp"
#include "meshless/linsolve.hpp"
#include "meshless/parallel.hpp"
#include "meshless/sparse.hpp"
#include "meshless/stokes.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

using namespace meshless;
using namespace meshless::linsolve;

namespace {

// Diagonally dominant random sparse matrix.
SparseMatrix random_sparse(int n, int per_row, unsigned seed, double diag = 4.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> col(0, n - 1);
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, diag + u(rng)});
    for (int k = 0; k < per_row; ++k) t.push_back({i, col(rng), u(rng) / per_row});
  }
  return SparseMatrix::from_triplets(n, n, t);
}

Eigen::VectorXd random_vector(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

LinearOperator as_operator(const SparseMatrix& a) {
  return [&a](const Eigen::VectorXd& x, Eigen::VectorXd& y) { a.multiply(x, y); };
}

// Block system with no coupling between velocity and pressure.
stokes::BlockSystem block_diagonal_system(int particles, unsigned seed) {
  stokes::BlockSystem s;
  s.particles = particles;
  s.K = random_sparse(3 * particles, 5, seed);
  s.G = SparseMatrix(3 * particles, particles);
  s.Nblk = SparseMatrix(particles, 3 * particles);
  s.L = random_sparse(particles, 4, seed + 1);
  s.b = random_vector(3 * particles, seed + 2);
  s.g = random_vector(particles, seed + 3);
  s.corner = particles;
  s.boundary.assign(static_cast<std::size_t>(particles), 0);
  for (int i = 0; i < particles; i += 3) s.boundary[static_cast<std::size_t>(i)] = 1;
  return s;
}

}  // namespace

TEST_CASE("csr construction") {
  const auto a = SparseMatrix::from_triplets(3, 4, {{2, 1, 1.0}, {0, 3, 2.0}, {0, 1, 3.0}, {0, 3, 4.0}, {1, 2, 0.0}});
  CHECK(a.rows() == 3);
  CHECK(a.cols() == 4);
  CHECK(a.nonzeros() == 4);
  CHECK(a.coeff(0, 3) == 6.0);
  CHECK(a.coeff(0, 1) == 3.0);
  CHECK(a.coeff(1, 2) == 0.0);
  CHECK(a.row_cols(1).size() == 1);
  CHECK(a.coeff(2, 0) == 0.0);
  CHECK(a.offsets() == std::vector<std::int64_t>{0, 2, 3, 4});
  CHECK(a.column_ids() == std::vector<int>{1, 3, 2, 1});

  CHECK_THROWS_AS(SparseMatrix::from_csr(2, 2, {0, 2, 1}, {0, 1}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(SparseMatrix::from_csr(1, 2, {0, 2}, {1, 0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(SparseMatrix::from_csr(1, 2, {0, 2}, {1, 1}, {1.0, 2.0}), Error);
  CHECK_NOTHROW(SparseMatrix::from_csr(1, 2, {0, 2}, {0, 1}, {1.0, 2.0}));

  const auto id = SparseMatrix::identity(5);
  CHECK(id.to_dense() == Eigen::MatrixXd::Identity(5, 5));

  SparseMatrix::Builder builder(2, 3);
  std::vector<std::pair<int, double>> row{{2, 1.0}, {0, 2.0}, {2, 3.0}};
  builder.append_row(row);
  row = {{1, -1.0}};
  builder.append_row(row);
  const auto b = builder.finish();
  CHECK(b.coeff(0, 2) == 4.0);
  CHECK(b.coeff(0, 0) == 2.0);
  CHECK(b.coeff(1, 1) == -1.0);
  CHECK(b.row_cols(0).size() == 2);

  std::vector<std::vector<std::pair<int, double>>> rows{{{0, 1.0}}, {}, {{2, 5.0}, {1, 4.0}}};
  const auto c = SparseMatrix::from_rows(3, rows);
  CHECK(c.rows() == 3);
  CHECK(c.coeff(2, 1) == 4.0);
  CHECK(c.row_cols(2)[0] == 1);
}

TEST_CASE("sparse products") {
  const auto a = random_sparse(300, 7, 5);
  const Eigen::VectorXd x = random_vector(300, 6);
  const Eigen::VectorXd dense = a.to_dense() * x;
  CHECK((a * x - dense).norm() <= 1e-13 * dense.norm());
  CHECK((a.to_eigen() * x - dense).norm() <= 1e-13 * dense.norm());
  Eigen::VectorXd y = x;
  a.multiply_add(x, y, -2.0);
  CHECK((y - (x - 2.0 * dense)).norm() <= 1e-13 * y.norm());
}

TEST_CASE("sparse products are thread-count invariant") {
  const auto a = random_sparse(20000, 20, 9);
  const Eigen::VectorXd x = random_vector(20000, 10);
  const int threads = thread_count();
  set_thread_count(1);
  const Eigen::VectorXd one = a * x;
  const double dot1 = deterministic_dot(one, x);
  set_thread_count(4);
  const Eigen::VectorXd four = a * x;
  const double dot4 = deterministic_dot(four, x);
  set_thread_count(threads);
  CHECK((one - four).cwiseAbs().maxCoeff() <= 1e-14 * one.cwiseAbs().maxCoeff());
  CHECK(dot1 == dot4);
}

TEST_CASE("exceptions thrown inside parallel loops are relayed") {
  const int threads = thread_count();
  set_thread_count(4);
  ExceptionRelay relay;
  std::vector<int> done(1000, 0);
#pragma omp parallel for
  for (int i = 0; i < 1000; ++i) {
    relay.run([&] {
      if (i == 500) throw InvalidResolution("bad item");
      done[static_cast<std::size_t>(i)] = 1;
    });
  }
  set_thread_count(threads);
  CHECK_THROWS_WITH_AS(relay.rethrow(), "bad item", InvalidResolution);
  CHECK(done[500] == 0);
  ExceptionRelay quiet;
  quiet.run([] {});
  CHECK_NOTHROW(quiet.rethrow());
}

TEST_CASE("matrix market round trip") {
  const auto a = random_sparse(40, 3, 11);
  std::stringstream s;
  write_matrix_market(a, s);
  CHECK(s.str().rfind("%%MatrixMarket matrix coordinate real general", 0) == 0);
  const auto b = read_matrix_market(s);
  CHECK(b.rows() == a.rows());
  CHECK(b.offsets() == a.offsets());
  CHECK(b.column_ids() == a.column_ids());
  CHECK(b.values() == a.values());
}

TEST_CASE("gmres on the identity") {
  const auto id = SparseMatrix::identity(30);
  const Eigen::VectorXd b = random_vector(30, 1);
  const auto r = gmres(as_operator(id), b, {});
  CHECK(r.report.converged);
  CHECK(r.report.iterations <= 1);
  CHECK((r.x - b).norm() <= 1e-14 * b.norm());
}

TEST_CASE("gmres matches a dense direct solve") {
  for (unsigned seed = 1; seed <= 20; ++seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd dense(50, 50);
    for (Eigen::Index i = 0; i < dense.size(); ++i) dense.data()[i] = u(rng) / std::sqrt(50.0);
    dense.diagonal().array() += 3.0;
    std::vector<Triplet> t;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) t.push_back({i, j, dense(i, j)});
    const auto a = SparseMatrix::from_triplets(50, 50, t);
    const Eigen::VectorXd b = random_vector(50, seed + 100);
    const Eigen::VectorXd oracle = dense.partialPivLu().solve(b);
    const auto r = gmres(as_operator(a), b, {}, {.tol = 1e-13, .restart = 20});
    CHECK(r.report.converged);
    CHECK((r.x - oracle).norm() <= 1e-8 * oracle.norm());
    CHECK(r.report.relative_residual == doctest::Approx((b - dense * r.x).norm() / b.norm()).epsilon(1e-6));
  }
}

TEST_CASE("gmres reports non-convergence and stops on the time limit") {
  const auto a = random_sparse(400, 10, 3, 0.3);
  const Eigen::VectorXd b = random_vector(400, 4);
  const auto r = gmres(as_operator(a), b, {}, {.tol = 1e-14, .max_iter = 5, .restart = 5});
  CHECK_FALSE(r.report.converged);
  CHECK(r.report.iterations == 5);
  CHECK(r.x.allFinite());
  CHECK(r.report.relative_residual == doctest::Approx((b - a * r.x).norm() / b.norm()).epsilon(1e-10));
  CHECK(r.report.relative_residual <= 1.0);

  // A slowly converging 1D Laplacian behind a delayed operator.
  const int n = 2000;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  const auto lap = SparseMatrix::from_triplets(n, n, t);
  const LinearOperator delayed = [&lap](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    lap.multiply(x, y);
  };
  const auto slow =
      gmres(delayed, random_vector(n, 5), {}, {.tol = 1e-30, .max_iter = 100000, .restart = 10, .time_limit = 0.1});
  CHECK_FALSE(slow.report.converged);
  CHECK(slow.report.iterations < 2000);
  CHECK(slow.report.message.find("time") != std::string::npos);

  const auto again = gmres(as_operator(a), b, {}, {.tol = 1e-14, .max_iter = 5, .restart = 5});
  CHECK((again.x.array() == r.x.array()).all());
}

TEST_CASE("block solvers") {
  // Tridiagonal: ILU(0) is the exact LU.
  const int n = 50;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, 4.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.5});
  }
  const auto tri = SparseMatrix::from_triplets(n, n, t);
  const Eigen::VectorXd b = random_vector(n, 2);
  const Eigen::VectorXd oracle = tri.to_dense().partialPivLu().solve(b);
  Eigen::VectorXd z(n);
  Ilu0(tri).solve(b, z);
  CHECK((z - oracle).norm() <= 1e-13 * oracle.norm());
  ExactSolve(tri).solve(b, z);
  CHECK((z - oracle).norm() <= 1e-13 * oracle.norm());

  const auto general = random_sparse(500, 8, 21);
  const Eigen::VectorXd rhs = random_vector(500, 22);
  const Eigen::VectorXd exact = general.to_dense().partialPivLu().solve(rhs);
  Eigen::VectorXd x(500);
  ExactSolve(general).solve(rhs, x);
  CHECK((x - exact).norm() <= 1e-12 * exact.norm());

  Jacobi(tri).solve(b, z);
  CHECK((z - b / 4.0).norm() <= 1e-15 * b.norm());
  const auto swap = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  CHECK_THROWS_AS(Ilu0{swap}, Error);
  Eigen::VectorXd two(2);
  Jacobi(swap).solve(Eigen::Vector2d(3.0, 4.0), two);
  CHECK(two == Eigen::Vector2d(3.0, 4.0));

  const auto singular = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}});
  CHECK_THROWS_AS(ExactSolve{singular}, Error);

  CHECK(parse_block_solver("ilu0") == BlockSolverKind::Ilu0);
  CHECK(parse_block_solver("exact") == BlockSolverKind::Exact);
  CHECK(parse_block_solver("none") == BlockSolverKind::None);
  CHECK_THROWS_AS(parse_block_solver("amg"), Error);
  CHECK(parse_partition("standard") == Partition::Standard);
  CHECK(parse_partition("coupled") == Partition::BoundaryCoupled);
  CHECK_THROWS_AS(parse_partition("other"), Error);
}

TEST_CASE("augmented pressure block") {
  const auto s = block_diagonal_system(12, 3);
  const auto a = augmented_pressure_block(s);
  CHECK(a.rows() == 13);
  CHECK(a.cols() == 13);
  for (int i = 0; i < 12; ++i) {
    CHECK(a.coeff(12, i) == 1.0);
    CHECK(a.coeff(i, 12) == 1.0);
    for (int j = 0; j < 12; ++j) CHECK(a.coeff(i, j) == s.L.coeff(i, j));
  }
  CHECK(a.coeff(12, 12) == 12.0);
}

TEST_CASE("block Gauss-Seidel with exact blocks inverts a block-diagonal system") {
  const auto s = block_diagonal_system(40, 7);
  for (auto partition : {Partition::Standard, Partition::BoundaryCoupled}) {
    const auto r = solve(s, {.tol = 1e-10}, {BlockSolverKind::Exact, partition});
    CHECK(r.report.converged);
    CHECK(r.report.iterations <= (partition == Partition::Standard ? 1 : 40));
    const Eigen::VectorXd rhs = s.rhs();
    CHECK((s.apply(r.x) - rhs).norm() <= 1e-10 * rhs.norm());
  }
  const BlockGaussSeidel bgs(s, BlockSolverKind::Exact, Partition::Standard);
  const Eigen::VectorXd rhs = s.rhs();
  Eigen::VectorXd z(s.size());
  bgs.apply(rhs, z);
  CHECK((s.apply(z) - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("block Gauss-Seidel is deterministic and falls back on breakdown") {
  auto s = block_diagonal_system(30, 11);
  const Eigen::VectorXd r = random_vector(s.size(), 12);
  for (auto kind : {BlockSolverKind::Ilu0, BlockSolverKind::Exact}) {
    const BlockGaussSeidel bgs(s, kind, Partition::BoundaryCoupled);
    Eigen::VectorXd a(s.size()), b(s.size());
    bgs.apply(r, a);
    bgs.apply(r, b);
    CHECK((a.array() == b.array()).all());
    CHECK(bgs.warnings().empty());
  }
  // A velocity block with a zero diagonal breaks ILU(0).
  std::vector<Triplet> t;
  const int nv = s.velocity_size();
  for (int i = 0; i < nv; ++i) t.push_back({i, (i + 1) % nv, 1.0});
  s.K = SparseMatrix::from_triplets(nv, nv, t);
  const BlockGaussSeidel fallback(s, BlockSolverKind::Ilu0, Partition::Standard);
  REQUIRE_FALSE(fallback.warnings().empty());
  CHECK(fallback.warnings().front().find("Jacobi") != std::string::npos);
}

TEST_CASE("preconditioning reduces iterations on the trig case") {
  const auto cloud = geometry::build_cube_cloud(12);
  const auto fields = stokes::make_case("trig");
  const auto tables = stokes::build_tables(cloud, 2, 2.0, 1.05);
  const auto system = stokes::assemble(cloud, stokes::build_stencils(cloud, tables, 2), fields);
  const GmresOptions options{.tol = 1e-8, .max_iter = 3000, .restart = 200};
  const auto plain = solve(system, options, {BlockSolverKind::None});
  const auto pre = solve(system, options);
  CHECK(pre.report.converged);
  CHECK(pre.report.iterations <= plain.report.iterations);
  MESSAGE("iterations: preconditioned " << pre.report.iterations << ", plain " << plain.report.iterations
                                        << std::string(plain.report.converged ? "" : " (not converged)"));
  const auto again = solve(system, options);
  CHECK((again.x.array() == pre.x.array()).all());
}
