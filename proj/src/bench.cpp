#include "meshless/bench.hpp"

#include "meshless/basis.hpp"
#include "meshless/errors.hpp"
#include "meshless/gmls.hpp"
#include "meshless/memory.hpp"
#include "meshless/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <new>
#include <sstream>

namespace meshless::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

std::ofstream open_csv(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw Error("cannot write " + (dir / name).string());
  out.precision(17);
  return out;
}

bool is_sphere(const std::string& tag) { return tag == "sphere"; }

geometry::PointCloud make_cloud(const std::string& tag, double resolution) {
  if (is_sphere(tag)) {
    return geometry::build_sphere_box_cloud(resolution, stokes::kSphereRadius, stokes::kSphereBoxHalfWidth);
  }
  const double n = std::round(resolution);
  if (std::abs(n - resolution) > 1e-9) throw InvalidResolution("cube resolution must be an integer particle count");
  return geometry::build_cube_cloud(static_cast<int>(n));
}

std::string resolution_label(const std::string& tag, double resolution) {
  std::ostringstream s;
  if (is_sphere(tag)) {
    s << "h=" << resolution;
  } else {
    s << "n=" << static_cast<int>(std::round(resolution));
  }
  return s.str();
}

/// Informational check per run whose solve stopped short of the tolerance.
void flag_unconverged(CommandResult& result, const std::string& tag) {
  for (const auto& r : result.records) {
    if (r.converged) continue;
    result.checks.push_back({tag + " m=" + std::to_string(r.order) + ' ' + resolution_label(tag, r.resolution) +
                                 " solver converged",
                             false, false, "residual " + format(r.residual)});
  }
}

}  // namespace

void RunConfig::validate() const {
  const auto fields = stokes::make_case(case_tag);
  if (orders.empty()) throw Error("at least one basis order is required");
  for (int m : orders) {
    if (m != 2 && m != 4) throw UnsupportedOrder("basis order must be 2 or 4, got " + std::to_string(m));
    if (fields.required_order && *fields.required_order != m) {
      throw UnsupportedOrder("case " + case_tag + " requires order " + std::to_string(*fields.required_order) +
                             ", got " + std::to_string(m));
    }
  }
  if (resolutions.empty()) throw InvalidResolution("at least one resolution is required");
  for (std::size_t i = 1; i < resolutions.size(); ++i) {
    const bool refining = is_sphere(case_tag) ? resolutions[i] < resolutions[i - 1] : resolutions[i] > resolutions[i - 1];
    if (!refining) {
      throw InvalidResolution(is_sphere(case_tag) ? "sphere spacings must be strictly decreasing"
                                                  : "particle counts must be strictly increasing");
    }
  }
  for (int k : threads) {
    if (k < 1) throw Error("thread counts must be positive");
  }
}

bool CommandResult::acceptance_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return !c.acceptance || c.passed; });
}

void print_checks(const std::vector<Check>& checks, std::ostream& out) {
  for (const auto& c : checks) {
    out << (c.passed ? "PASS" : "FAIL") << (c.acceptance ? "" : " (info)") << "  " << c.name;
    if (!c.detail.empty()) out << "  [" << c.detail << "]";
    out << '\n';
  }
}

std::pair<double, double> rms_errors(const geometry::PointCloud& cloud, const stokes::CaseDefinition& fields,
                                     const Eigen::VectorXd& solution) {
  const int n = static_cast<int>(cloud.size());
  double ev = 0.0;
  Eigen::VectorXd ph(n), pe(n);
  for (int i = 0; i < n; ++i) {
    const Vec3& x = cloud.positions[static_cast<std::size_t>(i)];
    ev += (solution.segment<3>(3 * i) - fields.velocity(x)).squaredNorm();
    ph[i] = solution[3 * n + i];
    pe[i] = fields.pressure(x);
  }
  ph.array() -= ph.mean();
  pe.array() -= pe.mean();
  return {std::sqrt(ev / n), std::sqrt((ph - pe).squaredNorm() / n)};
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("slope fit needs at least two points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(std::max(y[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

RunOutput run_stokes(const geometry::PointCloud& cloud, const stokes::CaseDefinition& fields, int order,
                     const SolverSettings& settings) {
  RunOutput out;
  auto& rec = out.record;
  rec.order = order;
  rec.spacing = cloud.spacing;
  rec.particles = static_cast<int>(cloud.size());
  // Runs that outgrow memory fail with an allocation error and are recorded
  // as failed by the caller.
  const AddressSpaceCap cap;
  stokes::BlockSystem system;
  {
    auto t = Clock::now();
    auto tables = stokes::build_tables(cloud, order, settings.multiplier, settings.dilation);
    rec.times.neighbor = seconds_since(t);

    t = Clock::now();
    stokes::StencilSet stencils =
        stokes::build_stencils(cloud, tables, order, {settings.multiplier, settings.dilation});
    rec.times.stencil = seconds_since(t);
    rec.retried_targets = static_cast<int>(stencils.retried.size());
    tables = {};

    t = Clock::now();
    system = stokes::assemble(cloud, stencils, fields, {settings.corner});
    rec.times.assembly = seconds_since(t);
  }
  rec.dofs = system.size();
  auto solved = linsolve::solve(system, {settings.tol, settings.max_iter, settings.restart, settings.time_limit},
                                      {settings.block_solver, settings.partition});
  rec.times.solve = solved.report.times.solve;
  rec.iterations = solved.report.iterations;
  rec.residual = solved.report.relative_residual;
  rec.converged = solved.report.converged;
  out.warnings = solved.report.warnings;
  if (!rec.converged) out.warnings.push_back("solver did not converge: " + solved.report.message);
  out.solution = std::move(solved.x);
  const auto [ev, ep] = rms_errors(cloud, fields, out.solution);
  rec.velocity_rms = ev;
  rec.pressure_rms = ep;
  return out;
}

void write_records_csv(const std::vector<ErrorRecord>& records, std::ostream& out) {
  out << "order,resolution,h,particles,dofs,velocity_rms,pressure_rms,iterations,residual,converged,retried,"
         "neighbor_s,stencil_s,assembly_s,solve_s,total_s\n";
  out.precision(10);
  for (const auto& r : records) {
    out << r.order << ',' << r.resolution << ',' << r.spacing << ',' << r.particles << ',' << r.dofs << ','
        << r.velocity_rms << ',' << r.pressure_rms << ',' << r.iterations << ',' << r.residual << ','
        << (r.converged ? 1 : 0) << ',' << r.retried_targets << ',' << r.times.neighbor << ',' << r.times.stencil
        << ',' << r.times.assembly << ',' << r.times.solve << ',' << r.times.total() << '\n';
  }
}

std::vector<ErrorRecord> run_series(const RunConfig& config) {
  config.validate();
  std::vector<ErrorRecord> records;
  for (int m : config.orders) {
    const auto fields = stokes::make_case(config.case_tag);
    for (double res : config.resolutions) {
      const auto cloud = make_cloud(config.case_tag, res);
      std::cerr << "[" << config.case_tag << "] m=" << m << ' ' << resolution_label(config.case_tag, res) << ": "
                << cloud.size() << " particles\n";
      RunOutput run;
      try {
        run = run_stokes(cloud, fields, m, config.solver);
      } catch (const std::exception& e) {
        // The series goes on; the failed run is recorded without errors.
        const bool oom = dynamic_cast<const std::bad_alloc*>(&e) != nullptr;
        std::cerr << "error: run failed: " << (oom ? "out of memory" : e.what()) << '\n';
        ErrorRecord failed;
        failed.resolution = res;
        failed.order = m;
        failed.spacing = cloud.spacing;
        failed.particles = static_cast<int>(cloud.size());
        failed.velocity_rms = failed.pressure_rms = failed.residual = std::numeric_limits<double>::quiet_NaN();
        records.push_back(failed);
        continue;
      }
      run.record.resolution = res;
      for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
      if (config.write_fields) {
        std::ostringstream name;
        name << "fields_" << config.case_tag << "_m" << m << '_' << resolution_label(config.case_tag, res) << ".csv";
        auto f = open_csv(config.out_dir, name.str());
        stokes::write_fields_csv(cloud, run.solution, f);
      }
      std::cerr << "  velocity rms " << format(run.record.velocity_rms) << ", pressure rms "
                << format(run.record.pressure_rms) << ", " << run.record.iterations << " iterations, "
                << fixed(run.record.times.total()) << " s\n";
      records.push_back(run.record);
    }
  }
  return records;
}

std::vector<SlopeResult> convergence_slopes(const std::vector<ErrorRecord>& records) {
  std::map<int, std::vector<ErrorRecord>> by_order;
  for (const auto& r : records) by_order[r.order].push_back(r);
  std::vector<SlopeResult> out;
  for (auto& [m, rs] : by_order) {
    std::sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.spacing > b.spacing; });
    const std::size_t first = rs.size() > 3 ? rs.size() - 3 : 0;
    std::vector<double> h, ev, ep;
    SlopeResult s;
    s.order = m;
    for (std::size_t i = first; i < rs.size(); ++i) {
      h.push_back(rs[i].spacing);
      ev.push_back(rs[i].velocity_rms);
      ep.push_back(rs[i].pressure_rms);
      if (i > first && !(ev.back() < ev[ev.size() - 2] && ep.back() < ep[ep.size() - 2])) s.monotone = false;
    }
    if (h.size() >= 2) {
      s.velocity = fit_loglog_slope(h, ev);
      s.pressure = fit_loglog_slope(h, ep);
    }
    out.push_back(s);
  }
  return out;
}

std::pair<double, double> slope_window(int order) {
  if (order == 2) return {1.6, 2.4};
  if (order == 4) return {3.5, 4.5};
  return {order - 0.5, order + 0.5};
}

TradeoffResult evaluate_tradeoff(const std::vector<ErrorRecord>& records) {
  struct Fit {
    double a = 0, b = 0, emin = 0, emax = 0;
    double at(double e) const { return std::exp(a + b * std::log(e)); }
  };
  auto fit = [&](int m) {
    std::vector<double> le, lt;
    for (const auto& r : records) {
      if (r.order != m) continue;
      le.push_back(std::log(r.velocity_rms));
      lt.push_back(std::log(r.times.total()));
    }
    if (le.size() < 2) throw Error("trade-off needs at least two runs per order");
    Fit f;
    const auto n = static_cast<double>(le.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < le.size(); ++i) {
      sx += le[i];
      sy += lt[i];
      sxx += le[i] * le[i];
      sxy += le[i] * lt[i];
    }
    f.b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.a = (sy - f.b * sx) / n;
    f.emin = std::exp(*std::min_element(le.begin(), le.end()));
    f.emax = std::exp(*std::max_element(le.begin(), le.end()));
    return f;
  };
  const Fit f2 = fit(2), f4 = fit(4);
  TradeoffResult t;
  t.common_error = std::max(f2.emin, f4.emin);
  t.time_order2 = f2.at(t.common_error);
  t.time_order4 = f4.at(t.common_error);
  const double hi = std::min(f2.emax, f4.emax);
  if (hi > t.common_error) {
    const double d_lo = f4.at(t.common_error) - f2.at(t.common_error);
    const double d_hi = f4.at(hi) - f2.at(hi);
    t.crossing = (d_lo < 0) != (d_hi < 0);
  }
  t.passed = t.time_order4 < t.time_order2 || t.crossing;
  return t;
}

std::vector<ScalingRow> measure_thread_scaling(int n, int order, const std::vector<int>& threads,
                                               const SolverSettings& settings) {
  const int saved = thread_count();
  const auto cloud = geometry::build_cube_cloud(n);
  const auto fields = stokes::make_case("trig");
  const auto tables = stokes::build_tables(cloud, order, settings.multiplier, settings.dilation);
  std::vector<ScalingRow> rows;
  for (int k : threads) {
    set_thread_count(k);
    ScalingRow row;
    row.n = n;
    row.order = order;
    row.threads = k;
    auto t = Clock::now();
    auto stencils = stokes::build_stencils(cloud, tables, order, {settings.multiplier, settings.dilation});
    row.stencil_seconds = seconds_since(t);
    t = Clock::now();
    auto system = stokes::assemble(cloud, stencils, fields, {settings.corner});
    row.assembly_seconds = seconds_since(t);
    rows.push_back(row);
  }
  set_thread_count(saved);
  return rows;
}

OperatorConvergence operator_convergence(int order, const std::vector<int>& resolutions, double multiplier,
                                         double dilation) {
  OperatorConvergence oc;
  oc.order = order;
  for (int n : resolutions) {
    const auto cloud = geometry::build_cube_cloud(n);
    const auto table = geometry::build_neighborhoods(cloud, basis::scalar_dimension(order), multiplier, dilation);
    const auto targets = gmls::all_targets(cloud.size());
    auto batch = gmls::solve_basic_gmls(cloud, table, order, targets, {2, 0, 0}, {false});
    if (!batch.failed.empty()) {
      // Same policy as the Stokes stencils: enlarge the neighborhood and retry.
      const stokes::StencilOptions policy;
      const geometry::SpatialIndex index(cloud.positions, 0.0);
      for (int t : batch.failed) {
        double d = dilation;
        for (int attempt = 1;; ++attempt) {
          d *= policy.retry_factor;
          const auto hood = geometry::build_neighborhood(cloud, index, t, basis::scalar_dimension(order), multiplier, d);
          try {
            batch.rows[static_cast<std::size_t>(t)] =
                gmls::basic_stencil(cloud, t, hood.ids, hood.radius, order, {2, 0, 0});
            break;
          } catch (const SingularStencil&) {
            if (attempt >= policy.max_retries) throw;
          }
        }
      }
    }
    std::vector<double> values(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) values[i] = std::sin(cloud.positions[i][0]);
    double err = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      err = std::max(err, std::abs(gmls::apply_scalar(batch.rows[i], values) + values[i]));
    }
    oc.resolutions.push_back(n);
    oc.spacing.push_back(cloud.spacing);
    oc.max_error.push_back(err);
  }
  if (oc.spacing.size() >= 2) oc.rate = fit_loglog_slope(oc.spacing, oc.max_error);
  return oc;
}

// -- commands -------------------------------------------------------------------

CommandResult cmd_reproduce_poly(const RunConfig& config) {
  if (config.case_tag != "poly2" && config.case_tag != "poly4" && config.case_tag != "zero") {
    throw Error("reproduce-poly runs the poly2, poly4 or zero case, not " + config.case_tag);
  }
  CommandResult result;
  result.records = run_series(config);
  for (int m : config.orders) {
    std::vector<ErrorRecord> mine;
    for (const auto& r : result.records) {
      if (r.order == m) mine.push_back(r);
    }
    auto f = open_csv(config.out_dir, "poly_" + std::to_string(m) + ".csv");
    write_records_csv(mine, f);
  }
  constexpr double kTol = 1e-7;
  for (const auto& r : result.records) {
    const std::string where =
        config.case_tag + " m=" + std::to_string(r.order) + ' ' + resolution_label(config.case_tag, r.resolution);
    result.checks.push_back({where + " velocity RMS <= 1e-7", r.velocity_rms <= kTol, true, format(r.velocity_rms)});
    result.checks.push_back({where + " pressure RMS <= 1e-7", r.pressure_rms <= kTol, true, format(r.pressure_rms)});
  }
  flag_unconverged(result, config.case_tag);
  return result;
}

CommandResult cmd_converge(const RunConfig& config) {
  if (config.case_tag != "trig") {
    throw Error("converge needs the trig case: polynomial cases are reproduced to round-off, so slopes are meaningless");
  }
  if (config.resolutions.size() < 3) throw InvalidResolution("converge needs at least three resolutions");
  CommandResult result;
  result.records = run_series(config);
  {
    auto f = open_csv(config.out_dir, "converge_trig.csv");
    write_records_csv(result.records, f);
  }
  const auto slopes = convergence_slopes(result.records);
  auto f = open_csv(config.out_dir, "converge_slopes.csv");
  f << "order,velocity_slope,pressure_slope,monotone\n";
  for (const auto& s : slopes) {
    f << s.order << ',' << s.velocity << ',' << s.pressure << ',' << (s.monotone ? 1 : 0) << '\n';
    const auto [lo, hi] = slope_window(s.order);
    const std::string win = " in [" + fixed(lo, 1) + ", " + fixed(hi, 1) + "]";
    const std::string m = "trig m=" + std::to_string(s.order);
    result.checks.push_back({m + " velocity slope" + win, s.velocity >= lo && s.velocity <= hi, true, fixed(s.velocity)});
    result.checks.push_back({m + " pressure slope" + win, s.pressure >= lo && s.pressure <= hi, true, fixed(s.pressure)});
    if (!s.monotone) result.checks.push_back({m + " errors decrease monotonically", false, false, ""});
  }
  flag_unconverged(result, "trig");
  return result;
}

CommandResult cmd_sphere(const RunConfig& config) {
  if (config.case_tag != "sphere") throw Error("sphere needs the sphere case");
  config.validate();
  const auto fields = stokes::make_case("sphere");
  CommandResult result;
  double worst_surface = 0.0;
  for (int m : config.orders) {
    for (double h : config.resolutions) {
      const auto cloud = make_cloud("sphere", h);
      std::cerr << "[sphere] m=" << m << " h=" << h << ": " << cloud.size() << " particles\n";
      auto run = run_stokes(cloud, fields, m, config.solver);
      run.record.resolution = h;
      for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << "  velocity rms " << format(run.record.velocity_rms) << ", pressure rms "
                << format(run.record.pressure_rms) << ", " << run.record.iterations << " iterations\n";
      const int n = static_cast<int>(cloud.size());
      const auto& x = run.solution;
      Eigen::VectorXd ph = x.segment(3 * n, n);
      Eigen::VectorXd pe(n);
      for (int i = 0; i < n; ++i) pe[i] = fields.pressure(cloud.positions[static_cast<std::size_t>(i)]);
      const double shift_h = ph.mean(), shift_e = pe.mean();
      std::ostringstream tag;
      tag << "m" << m << "_h" << h;
      auto line = open_csv(config.out_dir, "sphere_centerline_" + tag.str() + ".csv");
      auto plane = open_csv(config.out_dir, "sphere_plane_" + tag.str() + ".csv");
      line << "z,vx,vy,vz,p,vx_exact,vy_exact,vz_exact,p_exact\n";
      plane << "x,z,vx,vy,vz,p,vx_exact,vy_exact,vz_exact,p_exact\n";
      const double half = 0.5 * cloud.spacing;
      for (int i = 0; i < n; ++i) {
        const Vec3& p = cloud.positions[static_cast<std::size_t>(i)];
        const Vec3 v = x.segment<3>(3 * i);
        const Vec3 ve = fields.velocity(p);
        const double pi = ph[i] - shift_h, pei = pe[i] - shift_e;
        if (std::abs(p[1]) < half) {
          if (std::abs(p[0]) < half) {
            line << p[2] << ',' << v[0] << ',' << v[1] << ',' << v[2] << ',' << pi << ',' << ve[0] << ',' << ve[1]
                 << ',' << ve[2] << ',' << pei << '\n';
          }
          plane << p[0] << ',' << p[2] << ',' << v[0] << ',' << v[1] << ',' << v[2] << ',' << pi << ',' << ve[0]
                << ',' << ve[1] << ',' << ve[2] << ',' << pei << '\n';
        }
        if (cloud.is_boundary(static_cast<std::size_t>(i)) && p.norm() < stokes::kSphereRadius + 1e-9) {
          worst_surface = std::max(worst_surface, v.norm());
        }
      }
      if (config.write_fields) {
        auto f = open_csv(config.out_dir, "fields_sphere_" + tag.str() + ".csv");
        stokes::write_fields_csv(cloud, run.solution, f);
      }
      result.records.push_back(run.record);
    }
  }
  {
    auto f = open_csv(config.out_dir, "sphere_errors.csv");
    write_records_csv(result.records, f);
  }
  const auto slopes = convergence_slopes(result.records);
  auto f = open_csv(config.out_dir, "sphere_slopes.csv");
  f << "order,velocity_slope,pressure_slope,monotone\n";
  for (const auto& s : slopes) {
    f << s.order << ',' << s.velocity << ',' << s.pressure << ',' << (s.monotone ? 1 : 0) << '\n';
    bool velocity_monotone = true;
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& r : result.records) {
      if (r.order != s.order) continue;
      if (!(r.velocity_rms < prev)) velocity_monotone = false;
      prev = r.velocity_rms;
    }
    const std::string m = "sphere m=" + std::to_string(s.order);
    result.checks.push_back({m + " velocity error decreases monotonically", velocity_monotone, true, ""});
    result.checks.push_back({m + " velocity slope >= 1.5", s.velocity >= 1.5, true, fixed(s.velocity)});
    result.checks.push_back({m + " pressure slope (reported)", true, false, fixed(s.pressure)});
  }
  const double limit = 1e-6 * stokes::kSphereSpeed;
  result.checks.push_back(
      {"sphere surface velocity <= 1e-6 W", worst_surface <= limit, true, format(worst_surface)});
  flag_unconverged(result, "sphere");
  return result;
}

CommandResult cmd_timing(const RunConfig& config) {
  if (config.resolutions.size() < 2) throw InvalidResolution("timing needs at least two resolutions");
  if (config.threads.size() < 2) throw Error("timing needs at least two thread counts");
  RunConfig trig = config;
  trig.case_tag = "trig";
  CommandResult result;
  result.records = run_series(trig);
  {
    auto f = open_csv(config.out_dir, "timing.csv");
    write_records_csv(result.records, f);
  }
  flag_unconverged(result, "trig");
  const bool both = std::count(config.orders.begin(), config.orders.end(), 2) &&
                    std::count(config.orders.begin(), config.orders.end(), 4);
  if (both) {
    const auto t = evaluate_tradeoff(result.records);
    auto f = open_csv(config.out_dir, "timing_tradeoff.csv");
    f << "common_error,time_m2,time_m4,crossing,passed\n";
    f << t.common_error << ',' << t.time_order2 << ',' << t.time_order4 << ',' << (t.crossing ? 1 : 0) << ','
      << (t.passed ? 1 : 0) << '\n';
    result.checks.push_back({"m=4 time-to-accuracy beats m=2 at the smallest common error", t.passed, true,
                             "e=" + format(t.common_error) + " T2=" + fixed(t.time_order2) + "s T4=" +
                                 fixed(t.time_order4) + "s" + (t.crossing ? " crossing" : "")});
    for (const auto& r4 : result.records) {
      if (r4.order != 4) continue;
      for (const auto& r2 : result.records) {
        if (r2.order == 2 && r2.resolution == r4.resolution) {
          result.checks.push_back({"m=4 slower than m=2 at n=" + std::to_string(static_cast<int>(r4.resolution)),
                                   r4.times.total() > r2.times.total(), false,
                                   fixed(r4.times.total()) + "s vs " + fixed(r2.times.total()) + "s"});
        }
      }
    }
  }

  const int n = static_cast<int>(std::round(config.resolutions.back()));
  std::vector<ScalingRow> rows;
  for (int m : config.orders) {
    const auto part = measure_thread_scaling(n, m, config.threads, config.solver);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  auto f = open_csv(config.out_dir, "thread_scaling.csv");
  f << "n,order,threads,stencil_s,assembly_s,stencil_speedup\n";
  for (const auto& r : rows) {
    double base = 0.0;
    for (const auto& q : rows) {
      if (q.order == r.order && q.threads == config.threads.front()) base = q.stencil_seconds;
    }
    f << r.n << ',' << r.order << ',' << r.threads << ',' << r.stencil_seconds << ',' << r.assembly_seconds << ','
      << base / r.stencil_seconds << '\n';
  }
  const bool has1 = std::count(config.threads.begin(), config.threads.end(), 1) > 0;
  const bool has4 = std::count(config.threads.begin(), config.threads.end(), 4) > 0;
  if (has1 && has4 && n >= 24) {
    for (int m : config.orders) {
      double t1 = 0, t4 = 0;
      for (const auto& r : rows) {
        if (r.order != m) continue;
        if (r.threads == 1) t1 = r.stencil_seconds;
        if (r.threads == 4) t4 = r.stencil_seconds;
      }
      const double speedup = t1 / t4;
      result.checks.push_back({"m=" + std::to_string(m) + " stencil-phase speedup 1->4 threads >= 2.0 at n=" +
                                   std::to_string(n),
                               speedup >= 2.0, true,
                               fixed(speedup) + "x, " + std::to_string(hardware_threads()) + " hardware thread(s)"});
    }
  }
  return result;
}

}  // namespace meshless::bench
