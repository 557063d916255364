#include "meshless/bench.hpp"
#include "meshless/errors.hpp"
#include "meshless/linsolve.hpp"
#include "meshless/parallel.hpp"
#include "meshless/stokes.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace meshless;
using namespace meshless::stokes;

namespace {

// Fourth-order central differences; exact up to round-off on quartics.
constexpr double kStep = 1e-3;

template <typename F>
auto d1(const F& f, const Vec3& x, int k) {
  const Vec3 e = kStep * Vec3::Unit(k);
  return (-f(x + 2 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2 * e)) / (12.0 * kStep);
}

template <typename F>
auto d2(const F& f, const Vec3& x, int k) {
  const Vec3 e = kStep * Vec3::Unit(k);
  return (-f(x + 2 * e) + 16.0 * f(x + e) - 30.0 * f(x) + 16.0 * f(x - e) - f(x - 2 * e)) / (12.0 * kStep * kStep);
}

Vec3 random_fluid_point(std::mt19937& rng, const std::string& tag) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 x = (tag == "sphere" ? 2.0 : 1.0) * Vec3(u(rng), u(rng), u(rng));
    if (tag != "sphere" || x.norm() > 1.2) return x;
  }
}

struct Pipeline {
  geometry::PointCloud cloud;
  CaseDefinition fields;
  BlockSystem system;
};

Pipeline assemble_cube(int n, int m, const std::string& tag, double nu = 1.0, MeanCorner corner = MeanCorner::Paper) {
  Pipeline p{geometry::build_cube_cloud(n), make_case(tag, nu), {}};
  const auto tables = build_tables(p.cloud, m, 2.0, 1.05);
  const auto stencils = build_stencils(p.cloud, tables, m);
  p.system = assemble(p.cloud, stencils, p.fields, {corner});
  return p;
}

double inf_norm(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("case fields are consistent") {
  std::mt19937 rng(4);
  for (const std::string tag : {"poly2", "poly4", "trig", "sphere"}) {
    const auto c = make_case(tag, 1.7);
    CHECK(c.tag == tag);
    for (int trial = 0; trial < 100; ++trial) {
      const Vec3 x = random_fluid_point(rng, tag);
      const double scale = 1.0 + c.velocity(x).norm();
      double div = 0.0;
      for (int k = 0; k < 3; ++k) div += d1([&](const Vec3& y) { return c.velocity(y)[k]; }, x, k);
      CHECK(std::abs(div) <= 1e-9 * scale);

      Vec3 grad;
      for (int k = 0; k < 3; ++k) grad[k] = d1(c.pressure, x, k);
      CHECK((grad - c.pressure_gradient(x)).norm() <= 1e-8 * (1.0 + grad.norm()));

      Vec3 minus_lap = Vec3::Zero();
      for (int k = 0; k < 3; ++k) minus_lap -= d2(c.velocity, x, k);
      CHECK((minus_lap - c.curl_curl(x)).norm() <= 1e-5 * (1.0 + minus_lap.norm()));

      CHECK((c.forcing(x) - (1.7 * c.curl_curl(x) + c.pressure_gradient(x))).norm() <= 1e-12 * (1.0 + c.forcing(x).norm()));
      double fdiv = 0.0;
      for (int k = 0; k < 3; ++k) fdiv += d1([&](const Vec3& y) { return c.forcing(y)[k]; }, x, k);
      CHECK(std::abs(fdiv - c.forcing_divergence(x)) <= 1e-7 * (1.0 + std::abs(fdiv)));
      CHECK(c.boundary_velocity(x) == c.velocity(x));
    }
  }
  CHECK_THROWS_AS(make_case("cubic"), UnknownCase);
}

TEST_CASE("sphere case boundary values") {
  const auto c = make_case("sphere");
  std::mt19937 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 dir = Vec3(g(rng), g(rng), g(rng)).normalized();
    CHECK(c.velocity(kSphereRadius * dir).norm() <= 1e-13);
    CHECK((c.velocity(1e7 * dir) - Vec3(0, 0, kSphereSpeed)).norm() <= 1e-5);
    const double cos_theta = dir.z();
    const double r = 1.5;
    CHECK(c.pressure(r * dir) == doctest::Approx(-1.5 * kSphereSpeed * kSphereRadius * cos_theta / (r * r)));
    // Stokes flow: the forcing vanishes.
    CHECK(c.forcing(r * dir).norm() <= 1e-12 * (1.0 + c.pressure_gradient(r * dir).norm()));
  }
}

TEST_CASE("mean corner names") {
  CHECK(parse_mean_corner("paper") == MeanCorner::Paper);
  CHECK(parse_mean_corner("standard") == MeanCorner::Standard);
  CHECK_THROWS_AS(parse_mean_corner("other"), Error);
}

TEST_CASE("table dimensions") {
  CHECK(velocity_table_dimension(2) == 9);
  CHECK(velocity_table_dimension(4) == 29);
  CHECK(pressure_table_dimension(2) == 20);
  CHECK(pressure_table_dimension(4) == 56);
}

TEST_CASE("assembled block structure") {
  const auto p = assemble_cube(6, 2, "poly2");
  const auto& s = p.system;
  const int n = 216;
  CHECK(s.particles == n);
  CHECK(s.K.rows() == 648);
  CHECK(s.K.cols() == 648);
  CHECK(s.G.rows() == 648);
  CHECK(s.G.cols() == n);
  CHECK(s.Nblk.rows() == n);
  CHECK(s.Nblk.cols() == 648);
  CHECK(s.L.rows() == n);
  CHECK(s.L.cols() == n);
  CHECK(s.size() == 648 + 216 + 1);
  CHECK(s.corner == doctest::Approx(n));
  CHECK(s.b.size() == 648);
  CHECK(s.g.size() == n);
  for (int i = 0; i < n; ++i) {
    const bool boundary = p.cloud.is_boundary(static_cast<std::size_t>(i));
    CHECK((s.boundary[i] != 0) == boundary);
    for (int c = 0; c < 3; ++c) {
      const int r = 3 * i + c;
      if (boundary) {
        REQUIRE(s.K.row_cols(r).size() == 1);
        CHECK(s.K.row_cols(r)[0] == r);
        CHECK(s.K.row_values(r)[0] == 1.0);
        CHECK(s.G.row_cols(r).empty());
        CHECK((s.b.segment<3>(3 * i) - p.fields.velocity(p.cloud.positions[i])).norm() == 0.0);
      } else {
        CHECK(s.K.row_cols(r).size() > 1);
      }
    }
    if (!boundary) {
      CHECK(s.Nblk.row_cols(i).empty());
      double sum = 0.0, l1 = 0.0;
      for (double v : s.L.row_values(i)) {
        sum += v;
        l1 += std::abs(v);
      }
      CHECK(std::abs(sum) <= 1e-9 * l1);
      CHECK(s.g[i] == doctest::Approx(p.fields.forcing_divergence(p.cloud.positions[i])));
    }
  }
  CHECK(assemble_cube(6, 2, "poly2", 1.0, MeanCorner::Standard).system.corner == 0.0);
}

TEST_CASE("exact samples satisfy the assembled equations") {
  for (auto [m, tag] : {std::pair{2, "poly2"}, std::pair{4, "poly4"}}) {
    const auto p = assemble_cube(6, m, tag);
    Eigen::VectorXd x = sample_solution(p.cloud, p.fields);
    const int n = p.system.particles;
    x.segment(3 * n, n).array() -= x.segment(3 * n, n).mean();
    const Eigen::VectorXd rhs = p.system.rhs();
    CHECK(inf_norm(p.system.apply(x) - rhs) <= 1e-7 * inf_norm(rhs));
  }
}

TEST_CASE("constant pressure is annihilated by interior pressure rows") {
  const auto p = assemble_cube(6, 2, "poly2");
  const int n = p.system.particles;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p.system.size());
  x.segment(3 * n, n).setConstant(2.5);
  const Eigen::VectorXd y = p.system.apply(x);
  for (int i = 0; i < n; ++i) {
    if (p.cloud.is_boundary(static_cast<std::size_t>(i))) continue;
    double l1 = 0.0;
    for (double v : p.system.L.row_values(i)) l1 += std::abs(v);
    CHECK(std::abs(y[3 * n + i]) <= 1e-9 * 2.5 * l1);
  }
}

TEST_CASE("Nblk vanishes without viscosity") {
  const auto p = assemble_cube(6, 2, "poly2", 0.0);
  for (double v : p.system.Nblk.values()) CHECK(v == 0.0);
  const auto q = assemble_cube(6, 2, "poly2", 1.0);
  double total = 0.0;
  for (double v : q.system.Nblk.values()) total += std::abs(v);
  CHECK(total > 0.0);
}

TEST_CASE("missing stencils are reported") {
  const auto cloud = geometry::build_cube_cloud(6);
  const auto tables = build_tables(cloud, 2, 2.0, 1.05);
  auto stencils = build_stencils(cloud, tables, 2);
  stencils.curl_curl[100] = {};
  stencils.laplacian[5] = {};
  try {
    assemble(cloud, stencils, make_case("poly2"));
    FAIL("expected IncompleteAssembly");
  } catch (const IncompleteAssembly& e) {
    CHECK(e.targets() == std::vector<int>{5, 100});
  }
}

TEST_CASE("assembly is thread-count invariant") {
  const int threads = thread_count();
  set_thread_count(1);
  const auto a = assemble_cube(8, 2, "trig");
  set_thread_count(4);
  const auto b = assemble_cube(8, 2, "trig");
  set_thread_count(threads);
  const auto ma = a.system.monolithic();
  const auto mb = b.system.monolithic();
  REQUIRE(ma.offsets() == mb.offsets());
  REQUIRE(ma.column_ids() == mb.column_ids());
  double scale = 0.0, diff = 0.0;
  for (std::size_t k = 0; k < ma.nonzeros(); ++k) {
    scale = std::max(scale, std::abs(ma.values()[k]));
    diff = std::max(diff, std::abs(ma.values()[k] - mb.values()[k]));
  }
  CHECK(diff <= 1e-14 * scale);
  CHECK(inf_norm(a.system.rhs() - b.system.rhs()) == 0.0);
}

TEST_CASE("small poly2 system solves to the manufactured fields") {
  const auto p = assemble_cube(6, 2, "poly2");
  const auto result = linsolve::solve(p.system, {.tol = 1e-10});
  CHECK(result.report.converged);
  CHECK(result.report.relative_residual <= 1e-10);
  const auto [ev, ep] = bench::rms_errors(p.cloud, p.fields, result.x);
  CHECK(ev <= 1e-8);
  CHECK(ep <= 1e-8);
  const int n = p.system.particles;
  const Eigen::VectorXd phi = result.x.segment(3 * n, n);
  CHECK(std::abs(phi.sum()) <= 1e-8 * n * inf_norm(phi));
}

TEST_CASE("field csv export") {
  const auto cloud = geometry::build_cube_cloud(4);
  const auto fields = make_case("trig");
  std::stringstream s;
  write_fields_csv(cloud, sample_solution(cloud, fields), s);
  std::string line;
  std::getline(s, line);
  CHECK(line == "x,y,z,vx,vy,vz,p");
  int rows = 0;
  while (std::getline(s, line)) ++rows;
  CHECK(rows == 64);
}
