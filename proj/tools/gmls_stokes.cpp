// gmls-stokes: benchmark driver for the meshless Stokes solver.

#include "meshless/bench.hpp"
#include "meshless/errors.hpp"
#include "meshless/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace meshless;

struct Options {
  std::vector<int> orders;
  std::vector<double> res;
  std::vector<int> threads;
  std::string case_tag;
  double eta = 2.0;
  double dilation = 1.05;
  /// Negative: per-command default.
  double tol = -1.0;
  int restart = 200;
  int max_iter = 5000;
  double time_limit = 0.0;
  std::string corner = "paper";
  std::string block_solver = "exact";
  std::string partition = "coupled";
  std::string out = "results";
  bool fields = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--order", o.orders, "basis orders, e.g. 2,4")->delimiter(',');
  cmd->add_option("--res", o.res, "particles per axis (cube) or spacing h (sphere)")->delimiter(',');
  cmd->add_option("--eta", o.eta, "neighbor count multiplier")->capture_default_str();
  cmd->add_option("--dilation", o.dilation, "support radius dilation")->capture_default_str();
  cmd->add_option("--tol", o.tol, "relative residual tolerance (default 1e-12 for reproduce-poly, else 1e-10)");
  cmd->add_option("--restart", o.restart, "GMRES restart length")->capture_default_str();
  cmd->add_option("--max-iter", o.max_iter, "GMRES iteration limit")->capture_default_str();
  cmd->add_option("--time-limit", o.time_limit, "GMRES wall-clock budget per solve in seconds (0: none)")
      ->capture_default_str();
  cmd->add_option("--threads", o.threads, "thread count(s)")->delimiter(',');
  cmd->add_option("--corner", o.corner, "mean-constraint corner: paper or standard")->capture_default_str();
  cmd->add_option("--block-solver", o.block_solver, "preconditioner blocks: ilu0, exact or none")
      ->capture_default_str();
  cmd->add_option("--partition", o.partition, "Gauss-Seidel blocks: standard or coupled")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_flag("--fields", o.fields, "also write solution fields per run");
}

bench::RunConfig make_config(const Options& o, const std::string& tag, std::vector<int> orders,
                             std::vector<double> res, std::vector<int> threads, double default_tol = 1e-10) {
  bench::RunConfig c;
  c.case_tag = tag;
  c.orders = o.orders.empty() ? std::move(orders) : o.orders;
  c.resolutions = o.res.empty() ? std::move(res) : o.res;
  c.threads = o.threads.empty() ? std::move(threads) : o.threads;
  c.solver.multiplier = o.eta;
  c.solver.dilation = o.dilation;
  c.solver.tol = o.tol > 0.0 ? o.tol : default_tol;
  c.solver.restart = o.restart;
  c.solver.max_iter = o.max_iter;
  c.solver.time_limit = o.time_limit;
  c.solver.corner = stokes::parse_mean_corner(o.corner);
  c.solver.block_solver = linsolve::parse_block_solver(o.block_solver);
  c.solver.partition = linsolve::parse_partition(o.partition);
  c.out_dir = o.out;
  c.write_fields = o.fields;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meshless GMLS Stokes benchmarks"};
  app.require_subcommand(1);
  Options o;
  auto* poly = app.add_subcommand("reproduce-poly", "polynomial reproduction tables");
  auto* conv = app.add_subcommand("converge", "convergence study on the trigonometric case");
  auto* sphere = app.add_subcommand("sphere", "flow past a sphere");
  auto* timing = app.add_subcommand("timing", "time-to-accuracy and thread scaling");
  for (auto* cmd : {poly, conv, sphere, timing}) add_common(cmd, o);
  poly->add_option("--case", o.case_tag, "poly2, poly4 or zero (default: poly<m> per order)");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!o.threads.empty() && !timing->parsed()) set_thread_count(o.threads.front());
    bench::CommandResult result;
    if (poly->parsed()) {
      const auto base = make_config(o, "poly2", {2, 4}, {6, 12, 24}, {}, 1e-12);
      for (int m : base.orders) {
        auto c = base;
        c.orders = {m};
        c.case_tag = o.case_tag.empty() ? "poly" + std::to_string(m) : o.case_tag;
        auto part = bench::cmd_reproduce_poly(c);
        result.records.insert(result.records.end(), part.records.begin(), part.records.end());
        result.checks.insert(result.checks.end(), part.checks.begin(), part.checks.end());
      }
    } else if (conv->parsed()) {
      result = bench::cmd_converge(make_config(o, "trig", {2, 4}, {12, 24, 48}, {}));
    } else if (sphere->parsed()) {
      result = bench::cmd_sphere(make_config(o, "sphere", {2}, {0.4, 0.3, 0.2}, {}));
    } else {
      result = bench::cmd_timing(make_config(o, "trig", {2, 4}, {12, 24}, {1, 4}));
    }
    bench::print_checks(result.checks, std::cout);
    return result.acceptance_passed() ? 0 : 1;
  } catch (const meshless::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
