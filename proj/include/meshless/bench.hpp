#pragma once

#include "meshless/geometry.hpp"
#include "meshless/linsolve.hpp"
#include "meshless/stokes.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace meshless::bench {

struct SolverSettings {
  double multiplier = 2.0;
  double dilation = 1.05;
  double tol = 1e-10;
  int restart = 200;
  int max_iter = 5000;
  /// GMRES wall-clock budget per solve in seconds; zero means unlimited.
  double time_limit = 0.0;
  stokes::MeanCorner corner = stokes::MeanCorner::Paper;
  linsolve::BlockSolverKind block_solver = linsolve::BlockSolverKind::Exact;
  linsolve::Partition partition = linsolve::Partition::BoundaryCoupled;
};

struct RunConfig {
  std::string case_tag;
  std::vector<int> orders;
  /// Particles per axis for cube cases, spacing h for the sphere case.
  std::vector<double> resolutions;
  SolverSettings solver;
  std::vector<int> threads;
  std::filesystem::path out_dir = ".";
  bool write_fields = false;
  /// Throws Error when resolutions are not strictly increasing (decreasing
  /// for spacings) or an order is not supported by the case.
  void validate() const;
};

struct ErrorRecord {
  double resolution = 0.0;
  int order = 0;
  double spacing = 0.0;
  int particles = 0;
  long long dofs = 0;
  double velocity_rms = 0.0;
  double pressure_rms = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  int retried_targets = 0;
  linsolve::PhaseTimes times;
};

struct RunOutput {
  ErrorRecord record;
  Eigen::VectorXd solution;
  std::vector<std::string> warnings;
};

/// Neighbor search, stencils, assembly and solve on one cloud. Stencils are
/// released once the system is assembled.
RunOutput run_stokes(const geometry::PointCloud& cloud, const stokes::CaseDefinition& fields, int order,
                     const SolverSettings& settings);

/// sqrt(sum |v_h - v|^2 / N) and the same for mean-shifted pressures.
std::pair<double, double> rms_errors(const geometry::PointCloud& cloud, const stokes::CaseDefinition& fields,
                                     const Eigen::VectorXd& solution);

/// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct Check {
  std::string name;
  bool passed = false;
  /// Acceptance checks decide the exit code; the rest are informational.
  bool acceptance = true;
  std::string detail;
};

struct CommandResult {
  std::vector<ErrorRecord> records;
  std::vector<Check> checks;
  bool acceptance_passed() const;
};

void print_checks(const std::vector<Check>& checks, std::ostream& out);

struct SlopeResult {
  int order = 0;
  double velocity = 0.0;
  double pressure = 0.0;
  bool monotone = true;
};

/// Slopes over the finest three records of each order (records sorted by
/// decreasing spacing within an order).
std::vector<SlopeResult> convergence_slopes(const std::vector<ErrorRecord>& records);

/// Acceptance window for a convergence slope at order m.
std::pair<double, double> slope_window(int order);

struct TradeoffResult {
  double common_error = 0.0;
  double time_order2 = 0.0;
  double time_order4 = 0.0;
  bool crossing = false;
  bool passed = false;
};

/// Fits log(time) against log(velocity RMS) per order and compares the two
/// curves at the smallest error both reach.
TradeoffResult evaluate_tradeoff(const std::vector<ErrorRecord>& records);

struct ScalingRow {
  int n = 0;
  int order = 0;
  int threads = 0;
  double stencil_seconds = 0.0;
  double assembly_seconds = 0.0;
};

/// Times the stencil and assembly phases on the trig case per thread count.
std::vector<ScalingRow> measure_thread_scaling(int n, int order, const std::vector<int>& threads,
                                               const SolverSettings& settings);

struct OperatorConvergence {
  int order = 0;
  std::vector<int> resolutions;
  std::vector<double> spacing;
  std::vector<double> max_error;
  double rate = 0.0;
};

/// Max-norm error of the basic GMLS d2/dx2 stencil applied to sin(x) on cube
/// clouds.
OperatorConvergence operator_convergence(int order, const std::vector<int>& resolutions, double multiplier,
                                         double dilation);

/// Runs the manufactured or sphere case over every (order, resolution). A run
/// that throws is recorded with NaN errors and `converged` false.
std::vector<ErrorRecord> run_series(const RunConfig& config);

CommandResult cmd_reproduce_poly(const RunConfig& config);
CommandResult cmd_converge(const RunConfig& config);
CommandResult cmd_sphere(const RunConfig& config);
CommandResult cmd_timing(const RunConfig& config);

void write_records_csv(const std::vector<ErrorRecord>& records, std::ostream& out);

}  // namespace meshless::bench
