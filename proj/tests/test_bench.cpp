#include "meshless/bench.hpp"
#include "meshless/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace meshless;
using namespace meshless::bench;

namespace {

ErrorRecord record(int order, double h, double velocity, double pressure, double seconds) {
  ErrorRecord r;
  r.order = order;
  r.spacing = h;
  r.resolution = 2.0 / h + 1.0;
  r.velocity_rms = velocity;
  r.pressure_rms = pressure;
  r.converged = true;
  r.times.solve = seconds;
  return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("meshless_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int count_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("log-log slope fit") {
  const std::vector<double> x{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v * v);
  CHECK(fit_loglog_slope(x, y) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_loglog_slope({1.0}, {1.0}), Error);
}

TEST_CASE("slope windows") {
  CHECK(slope_window(2) == std::pair{1.6, 2.4});
  CHECK(slope_window(4) == std::pair{3.5, 4.5});
}

TEST_CASE("convergence slopes use the finest three records") {
  std::vector<ErrorRecord> records;
  // The coarsest m=2 record is off the asymptotic line and must be ignored.
  records.push_back(record(2, 0.4, 5.0, 5.0, 1.0));
  for (double h : {0.2, 0.1, 0.05}) records.push_back(record(2, h, h * h, 2.0 * h * h, 1.0));
  for (double h : {0.2, 0.1, 0.05}) records.push_back(record(4, h, std::pow(h, 4), 0.0, 1.0));
  records[4].pressure_rms = 1.0;
  records[5].pressure_rms = 2.0;
  records[6].pressure_rms = 3.0;
  const auto slopes = convergence_slopes(records);
  REQUIRE(slopes.size() == 2);
  CHECK(slopes[0].order == 2);
  CHECK(slopes[0].velocity == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(slopes[0].pressure == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(slopes[0].monotone);
  CHECK(slopes[1].velocity == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_FALSE(slopes[1].monotone);
}

TEST_CASE("time-to-accuracy trade-off") {
  // m=4 reaches every error faster.
  std::vector<ErrorRecord> faster;
  for (double e : {1e-2, 1e-3, 1e-4}) faster.push_back(record(2, 0.1, e, e, 1e-4 / e));
  for (double e : {1e-4, 1e-6, 1e-8}) faster.push_back(record(4, 0.1, e, e, 1e-5 / std::sqrt(e)));
  const auto good = evaluate_tradeoff(faster);
  CHECK(good.passed);
  CHECK(good.common_error == doctest::Approx(1e-4));
  CHECK(good.time_order4 < good.time_order2);

  // m=4 costs ten times more at every error.
  std::vector<ErrorRecord> slower;
  for (double e : {1e-2, 1e-3, 1e-4}) slower.push_back(record(2, 0.1, e, e, 1.0 / e));
  for (double e : {1e-2, 1e-3, 1e-4}) slower.push_back(record(4, 0.1, e, e, 10.0 / e));
  const auto bad = evaluate_tradeoff(slower);
  CHECK_FALSE(bad.passed);
  CHECK_FALSE(bad.crossing);

  // The curves cross inside the sampled range.
  std::vector<ErrorRecord> cross;
  for (double e : {1e-2, 1e-3, 1e-4}) cross.push_back(record(2, 0.1, e, e, 1.0 / (e * e)));
  for (double e : {1e-2, 1e-3, 1e-4}) cross.push_back(record(4, 0.1, e, e, 300.0 / e));
  const auto crossing = evaluate_tradeoff(cross);
  CHECK(crossing.crossing);
  CHECK(crossing.passed);
}

TEST_CASE("run configuration validation") {
  RunConfig c;
  c.case_tag = "trig";
  c.orders = {2, 4};
  c.resolutions = {6, 12};
  CHECK_NOTHROW(c.validate());
  c.resolutions = {12, 6};
  CHECK_THROWS_AS(c.validate(), InvalidResolution);
  c.resolutions = {6, 6};
  CHECK_THROWS_AS(c.validate(), InvalidResolution);
  c.resolutions = {6, 12};
  c.orders = {3};
  CHECK_THROWS_AS(c.validate(), UnsupportedOrder);
  c.case_tag = "poly2";
  c.orders = {4};
  CHECK_THROWS_AS(c.validate(), UnsupportedOrder);
  c.case_tag = "sphere";
  c.orders = {2};
  c.resolutions = {0.4, 0.3};
  CHECK_NOTHROW(c.validate());
  c.resolutions = {0.3, 0.4};
  CHECK_THROWS_AS(c.validate(), InvalidResolution);
}

TEST_CASE("rms errors shift the pressure mean") {
  const auto cloud = geometry::build_cube_cloud(5);
  const auto fields = stokes::make_case("trig");
  Eigen::VectorXd x = stokes::sample_solution(cloud, fields);
  const int n = static_cast<int>(cloud.size());
  x.segment(3 * n, n).array() += 4.0;
  auto [ev, ep] = rms_errors(cloud, fields, x);
  CHECK(ev == 0.0);
  CHECK(ep <= 1e-15);
  x[0] += 0.5;
  x[1] += 1.2;
  std::tie(ev, ep) = rms_errors(cloud, fields, x);
  CHECK(ev == doctest::Approx(1.3 / std::sqrt(n)).epsilon(1e-12));
}

TEST_CASE("records csv") {
  std::vector<ErrorRecord> records{record(2, 0.4, 1e-3, 2e-3, 1.0), record(4, 0.2, 1e-5, 2e-5, 2.0)};
  std::stringstream s;
  write_records_csv(records, s);
  std::string line;
  std::getline(s, line);
  CHECK(line ==
        "order,resolution,h,particles,dofs,velocity_rms,pressure_rms,iterations,residual,converged,retried,"
        "neighbor_s,stencil_s,assembly_s,solve_s,total_s");
  int rows = 0;
  while (std::getline(s, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("zero fields give a zero solution") {
  RunConfig c;
  c.case_tag = "zero";
  c.orders = {2};
  c.resolutions = {6};
  c.out_dir = scratch_dir("zero");
  const auto result = cmd_reproduce_poly(c);
  REQUIRE(result.records.size() == 1);
  CHECK(result.records[0].velocity_rms == 0.0);
  CHECK(result.records[0].pressure_rms == 0.0);
  CHECK(result.acceptance_passed());
  CHECK(std::filesystem::exists(c.out_dir / "poly_2.csv"));
}

TEST_CASE("commands reject unsuitable cases") {
  RunConfig c;
  c.case_tag = "poly2";
  c.orders = {2};
  c.resolutions = {6, 8, 10};
  c.out_dir = scratch_dir("reject");
  CHECK_THROWS_WITH_AS(cmd_converge(c), doctest::Contains("slopes are meaningless"), Error);
  c.case_tag = "trig";
  CHECK_THROWS_AS(cmd_reproduce_poly(c), Error);
  c.resolutions = {6, 8};
  CHECK_THROWS_AS(cmd_converge(c), InvalidResolution);
  CHECK_THROWS_AS(cmd_sphere(c), Error);
}

TEST_CASE("timing command writes one row per run") {
  RunConfig c;
  c.case_tag = "trig";
  c.orders = {2, 4};
  c.resolutions = {6, 8};
  c.threads = {1, 2};
  c.out_dir = scratch_dir("timing");
  const auto result = cmd_timing(c);
  CHECK(result.records.size() == 4);
  CHECK(count_lines(c.out_dir / "timing.csv") == 1 + 4);
  CHECK(std::filesystem::exists(c.out_dir / "thread_scaling.csv"));
  CHECK(std::filesystem::exists(c.out_dir / "timing_tradeoff.csv"));
  for (const auto& r : result.records) {
    CHECK(r.velocity_rms >= 0.0);
    CHECK(r.times.stencil > 0.0);
  }
}

TEST_CASE("check printing") {
  std::vector<Check> checks{{"alpha", true, true, "1.0"}, {"beta", false, false, ""}};
  std::stringstream s;
  print_checks(checks, s);
  CHECK(s.str() == "PASS  alpha  [1.0]\nFAIL (info)  beta\n");
  CommandResult r{{}, checks};
  CHECK(r.acceptance_passed());
  r.checks[0].passed = false;
  CHECK_FALSE(r.acceptance_passed());
}
