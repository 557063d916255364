#include "meshless/linsolve.hpp"

#include "meshless/errors.hpp"
#include "meshless/memory.hpp"
#include "meshless/parallel.hpp"

#include <Eigen/SparseLU>

#ifdef MESHLESS_HAVE_UMFPACK
#include <umfpack.h>
#endif

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace meshless::linsolve {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr double kPivotTolerance = 1e-14;
/// Largest accepted ||A||_inf * ||M^-1 r||_inf / ||r||_inf for the ILU probe.
constexpr double kIluGrowthLimit = 1e10;

double inf_norm(const SparseMatrix& a) {
  double best = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row_values(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

}  // namespace

// -- ILU(0) ---------------------------------------------------------------------

Ilu0::Ilu0(const SparseMatrix& a) : pattern_(&a), lu_(a.values()), diag_(static_cast<std::size_t>(a.rows()), -1) {
  if (a.rows() != a.cols()) throw Error("ILU(0) needs a square matrix");
  const int n = a.rows();
  const auto& off = a.offsets();
  const auto& col = a.column_ids();
  for (int i = 0; i < n; ++i) {
    for (auto k = off[static_cast<std::size_t>(i)]; k < off[static_cast<std::size_t>(i) + 1]; ++k) {
      if (col[static_cast<std::size_t>(k)] == i) diag_[static_cast<std::size_t>(i)] = k;
    }
    if (diag_[static_cast<std::size_t>(i)] < 0) {
      throw Error("ILU(0) breakdown: row " + std::to_string(i) + " has no diagonal entry");
    }
  }
  std::vector<std::int64_t> where(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const auto begin = off[static_cast<std::size_t>(i)];
    const auto end = off[static_cast<std::size_t>(i) + 1];
    double row_scale = 0.0;
    for (auto k = begin; k < end; ++k) {
      where[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])] = k;
      row_scale = std::max(row_scale, std::abs(lu_[static_cast<std::size_t>(k)]));
    }
    for (auto k = begin; k < end; ++k) {
      const int kc = col[static_cast<std::size_t>(k)];
      if (kc >= i) break;
      const double factor = lu_[static_cast<std::size_t>(k)] / lu_[static_cast<std::size_t>(diag_[static_cast<std::size_t>(kc)])];
      lu_[static_cast<std::size_t>(k)] = factor;
      for (auto m = diag_[static_cast<std::size_t>(kc)] + 1; m < off[static_cast<std::size_t>(kc) + 1]; ++m) {
        const auto w = where[static_cast<std::size_t>(col[static_cast<std::size_t>(m)])];
        if (w >= 0) lu_[static_cast<std::size_t>(w)] -= factor * lu_[static_cast<std::size_t>(m)];
      }
    }
    for (auto k = begin; k < end; ++k) where[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])] = -1;
    const double pivot = lu_[static_cast<std::size_t>(diag_[static_cast<std::size_t>(i)])];
    if (!std::isfinite(pivot) || std::abs(pivot) <= kPivotTolerance * std::max(row_scale, 1e-300)) {
      std::ostringstream msg;
      msg << "ILU(0) breakdown: pivot " << pivot << " at row " << i;
      throw Error(msg.str());
    }
  }
  // Tiny-but-accepted pivots can still make the triangular solves explode.
  Eigen::VectorXd probe(n), z;
  for (int i = 0; i < n; ++i) probe[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i));
  solve(probe, z);
  const double growth = inf_norm(a) * z.lpNorm<Eigen::Infinity>() / probe.lpNorm<Eigen::Infinity>();
  if (!std::isfinite(growth) || growth > kIluGrowthLimit) {
    std::ostringstream msg;
    msg << "ILU(0) breakdown: unstable factors (growth " << growth << ")";
    throw Error(msg.str());
  }
}

void Ilu0::solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const {
  const int n = pattern_->rows();
  const auto& off = pattern_->offsets();
  const auto& col = pattern_->column_ids();
  z = r;
  for (int i = 0; i < n; ++i) {
    double s = z[i];
    for (auto k = off[static_cast<std::size_t>(i)]; k < diag_[static_cast<std::size_t>(i)]; ++k) {
      s -= lu_[static_cast<std::size_t>(k)] * z[col[static_cast<std::size_t>(k)]];
    }
    z[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = z[i];
    for (auto k = diag_[static_cast<std::size_t>(i)] + 1; k < off[static_cast<std::size_t>(i) + 1]; ++k) {
      s -= lu_[static_cast<std::size_t>(k)] * z[col[static_cast<std::size_t>(k)]];
    }
    z[i] = s / lu_[static_cast<std::size_t>(diag_[static_cast<std::size_t>(i)])];
  }
}

Jacobi::Jacobi(const SparseMatrix& a) : inv_diag_(a.rows()) {
  for (int i = 0; i < a.rows(); ++i) {
    const double d = a.coeff(i, i);
    inv_diag_[i] = (d != 0.0 && std::isfinite(d)) ? 1.0 / d : 1.0;
  }
}

void Jacobi::solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const { z = inv_diag_.cwiseProduct(r); }

#ifdef MESHLESS_HAVE_UMFPACK

// The CSR arrays of A are handed to UMFPACK as the CSC arrays of A^T, so
// solves use the transposed system.
struct ExactSolve::Impl {
  std::vector<SuiteSparse_long> offsets, cols;
  std::vector<double> values;
  void* numeric = nullptr;
  SuiteSparse_long n = 0;
  ~Impl() {
    if (numeric) umfpack_dl_free_numeric(&numeric);
  }
};

ExactSolve::ExactSolve(const SparseMatrix& a) : impl_(std::make_unique<Impl>()) {
  if (a.rows() != a.cols()) throw Error("sparse LU needs a square matrix");
  auto& m = *impl_;
  m.n = a.rows();
  m.offsets.assign(a.offsets().begin(), a.offsets().end());
  m.cols.assign(a.column_ids().begin(), a.column_ids().end());
  m.values = a.values();
  double control[UMFPACK_CONTROL], info[UMFPACK_INFO];
  umfpack_dl_defaults(control);
  // Nested dissection gives far less fill than AMD on these 3D stencils.
  control[UMFPACK_ORDERING] = UMFPACK_ORDERING_METIS;
  control[UMFPACK_STRATEGY] = UMFPACK_STRATEGY_SYMMETRIC;
  // UMFPACK's own peak estimate is several times too pessimistic here, so
  // cap the address space instead and let an oversized factorization fail
  // with an allocation error rather than invite the OOM killer.
  const AddressSpaceCap cap;
  void* symbolic = nullptr;
  auto status = umfpack_dl_symbolic(m.n, m.n, m.offsets.data(), m.cols.data(), m.values.data(), &symbolic, control, info);
  if (status != UMFPACK_OK) throw Error("sparse LU analysis failed (UMFPACK status " + std::to_string(status) + ")");
  // The symbolic size estimate is an upper bound, about 3x high on these
  // stencils; reject only factorizations that cannot fit by a wide margin.
  const double estimate = info[UMFPACK_NUMERIC_SIZE_ESTIMATE] * info[UMFPACK_SIZE_OF_UNIT];
  const double available = available_memory_bytes();
  if (available > 0.0 && estimate > 4.0 * available) {
    umfpack_dl_free_symbolic(&symbolic);
    std::ostringstream msg;
    msg << "sparse LU would need about " << estimate / 4e9 << "-" << estimate / 1e9 << " GB, "
        << available / 1e9 << " GB available";
    throw Error(msg.str());
  }
  status = umfpack_dl_numeric(m.offsets.data(), m.cols.data(), m.values.data(), symbolic, &m.numeric, control, info);
  umfpack_dl_free_symbolic(&symbolic);
  if (status == UMFPACK_ERROR_out_of_memory) throw Error("sparse LU factorization ran out of memory");
  if (status != UMFPACK_OK) throw Error("sparse LU factorization failed (UMFPACK status " + std::to_string(status) + ")");
}

ExactSolve::~ExactSolve() = default;

void ExactSolve::solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const {
  auto& m = *impl_;
  z.resize(r.size());
  double control[UMFPACK_CONTROL], info[UMFPACK_INFO];
  umfpack_dl_defaults(control);
  control[UMFPACK_IRSTEP] = 0;
  const auto status = umfpack_dl_solve(UMFPACK_At, m.offsets.data(), m.cols.data(), m.values.data(), z.data(),
                                       r.data(), m.numeric, control, info);
  if (status != UMFPACK_OK) throw Error("sparse LU solve failed (UMFPACK status " + std::to_string(status) + ")");
}

#else

struct ExactSolve::Impl {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

ExactSolve::ExactSolve(const SparseMatrix& a) : impl_(std::make_unique<Impl>()) {
  Eigen::SparseMatrix<double> m = a.to_eigen();
  m.makeCompressed();
  impl_->lu.compute(m);
  if (impl_->lu.info() != Eigen::Success) throw Error("sparse LU factorization failed: " + impl_->lu.lastErrorMessage());
}

ExactSolve::~ExactSolve() = default;

void ExactSolve::solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const { z = impl_->lu.solve(r); }

#endif

BlockSolverKind parse_block_solver(const std::string& name) {
  if (name == "ilu0") return BlockSolverKind::Ilu0;
  if (name == "exact") return BlockSolverKind::Exact;
  if (name == "none") return BlockSolverKind::None;
  throw Error("unknown block solver `" + name + "` (expected ilu0, exact or none)");
}

Partition parse_partition(const std::string& name) {
  if (name == "standard") return Partition::Standard;
  if (name == "coupled") return Partition::BoundaryCoupled;
  throw Error("unknown block partition `" + name + "` (expected standard or coupled)");
}

// -- block Gauss-Seidel -----------------------------------------------------------

SparseMatrix augmented_pressure_block(const stokes::BlockSystem& system) {
  const int n = system.particles;
  const auto& l = system.L;
  std::vector<std::int64_t> offsets(static_cast<std::size_t>(n) + 2, 0);
  std::vector<int> cols;
  std::vector<double> vals;
  cols.reserve(l.nonzeros() + 2 * static_cast<std::size_t>(n) + 1);
  vals.reserve(cols.capacity());
  for (int r = 0; r < n; ++r) {
    const auto c = l.row_cols(r);
    const auto v = l.row_values(r);
    cols.insert(cols.end(), c.begin(), c.end());
    vals.insert(vals.end(), v.begin(), v.end());
    cols.push_back(n);
    vals.push_back(1.0);
    offsets[static_cast<std::size_t>(r) + 1] = static_cast<std::int64_t>(cols.size());
  }
  for (int j = 0; j <= n; ++j) {
    cols.push_back(j);
    vals.push_back(j == n ? system.corner : 1.0);
  }
  offsets[static_cast<std::size_t>(n) + 1] = static_cast<std::int64_t>(cols.size());
  return SparseMatrix::from_csr(n + 1, n + 1, std::move(offsets), std::move(cols), std::move(vals));
}

namespace {

void warn(std::vector<std::string>& warnings, std::string w) { warnings.push_back(std::move(w)); }

/// Exact falls back to ILU(0), ILU(0) to Jacobi.
std::unique_ptr<BlockSolve> make_block_solver(const SparseMatrix& a, BlockSolverKind kind, const char* name,
                                              std::vector<std::string>& warnings) {
  if (kind == BlockSolverKind::Exact) {
    try {
      return std::make_unique<ExactSolve>(a);
    } catch (const Error& e) {
      warn(warnings, std::string(name) + " block: " + e.what() + "; falling back to ILU(0)");
    }
  }
  try {
    return std::make_unique<Ilu0>(a);
  } catch (const Error& e) {
    warn(warnings, std::string(name) + " block: " + e.what() + "; falling back to Jacobi scaling");
    return std::make_unique<Jacobi>(a);
  }
}

}  // namespace

namespace {

/// Rows `rows` of the global operator restricted to the columns with
/// `local[c] >= 0`, renumbered by `local`.
SparseMatrix extract(const stokes::BlockSystem& system, const std::vector<int>& rows, const std::vector<int>& local,
                     int cols) {
  SparseMatrix::Builder builder(static_cast<int>(rows.size()), cols);
  std::vector<std::pair<int, double>> global, entries;
  for (int r : rows) {
    global.clear();
    entries.clear();
    system.append_row(r, global);
    for (const auto& [c, v] : global) {
      const int j = local[static_cast<std::size_t>(c)];
      if (j >= 0) entries.emplace_back(j, v);
    }
    builder.append_row(entries);
  }
  return builder.finish();
}

}  // namespace

BlockGaussSeidel::BlockGaussSeidel(const stokes::BlockSystem& system, BlockSolverKind kind, Partition partition) {
  if (kind == BlockSolverKind::None) throw Error("block Gauss-Seidel needs a block solver");
  const int nv = system.velocity_size();
  const int np = system.particles;
  const int total = system.size();
  if (partition == Partition::BoundaryCoupled && system.boundary.size() != static_cast<std::size_t>(np)) {
    throw Error("boundary-coupled partition needs the boundary flags of the system");
  }
  for (int i = 0; i < nv; ++i) first_.push_back(i);
  for (int i = 0; i < np; ++i) {
    const bool coupled = partition == Partition::BoundaryCoupled && system.boundary[static_cast<std::size_t>(i)];
    (coupled ? first_ : second_).push_back(nv + i);
  }
  second_.push_back(total - 1);
  std::vector<int> local1(static_cast<std::size_t>(total), -1), local2(static_cast<std::size_t>(total), -1);
  for (std::size_t k = 0; k < first_.size(); ++k) local1[static_cast<std::size_t>(first_[k])] = static_cast<int>(k);
  for (std::size_t k = 0; k < second_.size(); ++k) local2[static_cast<std::size_t>(second_[k])] = static_cast<int>(k);
  const int n1 = static_cast<int>(first_.size());
  const int n2 = static_cast<int>(second_.size());
  if (partition == Partition::Standard) {
    a11_ = &system.K;
  } else {
    owned_a11_ = extract(system, first_, local1, n1);
    a11_ = &owned_a11_;
  }
  a21_ = extract(system, second_, local1, n1);
  a22_ = extract(system, second_, local2, n2);
  // The second block is the smaller factorization; doing it first leaves
  // the memory check for the first block accurate.
  solve2_ = make_block_solver(a22_, kind, partition == Partition::Standard ? "pressure" : "interior pressure",
                              warnings_);
  solve1_ = make_block_solver(*a11_, kind, partition == Partition::Standard ? "velocity" : "velocity and boundary pressure",
                              warnings_);
}

void BlockGaussSeidel::apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const {
  const auto n1 = static_cast<Eigen::Index>(first_.size());
  const auto n2 = static_cast<Eigen::Index>(second_.size());
  Eigen::VectorXd r1(n1), r2(n2), z1, z2;
  for (Eigen::Index k = 0; k < n1; ++k) r1[k] = r[first_[static_cast<std::size_t>(k)]];
  for (Eigen::Index k = 0; k < n2; ++k) r2[k] = r[second_[static_cast<std::size_t>(k)]];
  solve1_->solve(r1, z1);
  a21_.multiply_add(z1, r2, -1.0);
  solve2_->solve(r2, z2);
  z.resize(r.size());
  for (Eigen::Index k = 0; k < n1; ++k) z[first_[static_cast<std::size_t>(k)]] = z1[k];
  for (Eigen::Index k = 0; k < n2; ++k) z[second_[static_cast<std::size_t>(k)]] = z2[k];
}

// -- GMRES ----------------------------------------------------------------------

GmresResult gmres(const LinearOperator& op, const Eigen::VectorXd& b, const LinearOperator& precond,
                  const GmresOptions& options) {
  if (!(options.tol > 0.0 && options.tol < 1.0)) throw Error("GMRES tolerance must lie in (0, 1)");
  if (options.restart < 1 || options.max_iter < 1) throw Error("GMRES restart and iteration limits must be positive");
  const auto n = b.size();
  GmresResult out;
  out.x = Eigen::VectorXd::Zero(n);
  auto& rep = out.report;
  const double bnorm = deterministic_norm(b);
  if (bnorm == 0.0) {
    rep.converged = true;
    rep.message = "zero right-hand side";
    return out;
  }
  auto apply_m = [&](const Eigen::VectorXd& v, Eigen::VectorXd& z) {
    if (precond) {
      precond(v, z);
    } else {
      z = v;
    }
  };

  const int m = options.restart;
  std::vector<Eigen::VectorXd> basis;
  basis.reserve(static_cast<std::size_t>(m) + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd best = x;
  double best_res = 1.0;
  double last_cycle_res = std::numeric_limits<double>::infinity();
  Eigen::VectorXd r(n), w(n), z(n);
  const auto start = Clock::now();
  auto out_of_time = [&] { return options.time_limit > 0.0 && seconds_since(start) > options.time_limit; };

  while (true) {
    op(x, r);
    r = b - r;
    const double beta = deterministic_norm(r);
    const double rel = beta / bnorm;
    if (rel < best_res) {
      best_res = rel;
      best = x;
    }
    if (rel <= options.tol) {
      rep.converged = true;
      break;
    }
    if (rep.iterations >= options.max_iter) {
      rep.message = "iteration limit reached";
      break;
    }
    if (out_of_time()) {
      rep.message = "time limit reached";
      break;
    }
    if (rep.breakdown) break;
    if (!(rel < last_cycle_res)) {
      rep.breakdown = true;
      rep.message = "stagnation: restart cycle did not reduce the residual";
      break;
    }
    last_cycle_res = rel;

    basis.clear();
    basis.push_back(r / beta);
    g.setZero();
    g[0] = beta;
    h.setZero();
    int j = 0;
    bool happy = false;
    for (; j < m && rep.iterations < options.max_iter && !out_of_time(); ++j) {
      apply_m(basis[static_cast<std::size_t>(j)], z);
      op(z, w);
      for (int i = 0; i <= j; ++i) {
        const double hij = deterministic_dot(w, basis[static_cast<std::size_t>(i)]);
        h(i, j) = hij;
        w -= hij * basis[static_cast<std::size_t>(i)];
      }
      const double wnorm = deterministic_norm(w);
      h(j + 1, j) = wnorm;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
        h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
        h(i, j) = t;
      }
      const double denom = std::hypot(h(j, j), h(j + 1, j));
      if (denom == 0.0) {
        rep.breakdown = true;
        rep.message = "unhappy breakdown: singular Hessenberg column";
        break;
      }
      cs[j] = h(j, j) / denom;
      sn[j] = h(j + 1, j) / denom;
      h(j, j) = denom;
      h(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++rep.iterations;
      if (wnorm <= 1e-14 * beta) {
        happy = true;
        ++j;
        break;
      }
      basis.push_back(w / wnorm);
      if (std::abs(g[j + 1]) / bnorm <= options.tol) {
        ++j;
        break;
      }
    }
    if (j > 0) {
      const Eigen::VectorXd y =
          h.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
      Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < j; ++i) u += y[i] * basis[static_cast<std::size_t>(i)];
      apply_m(u, z);
      x += z;
    }
    if (happy) {
      // The Krylov space is exhausted; the next true residual decides.
      last_cycle_res = std::numeric_limits<double>::infinity();
      rep.breakdown = true;
      rep.message = "happy breakdown";
    }
  }
  if (rep.converged && rep.breakdown) rep.breakdown = false;
  if (rep.converged) rep.message = rep.message.empty() ? "converged" : rep.message;
  out.x = rep.converged ? x : best;
  op(out.x, r);
  r = b - r;
  rep.relative_residual = deterministic_norm(r) / bnorm;
  rep.converged = rep.relative_residual <= options.tol;
  return out;
}

GmresResult solve(const stokes::BlockSystem& system, const GmresOptions& options,
                  const PreconditionerOptions& precond) {
  const auto start = Clock::now();
  std::unique_ptr<BlockGaussSeidel> gs;
  if (precond.kind != BlockSolverKind::None) {
    gs = std::make_unique<BlockGaussSeidel>(system, precond.kind, precond.partition);
  }
  const double setup = seconds_since(start);
  LinearOperator op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.resize(system.size());
    system.apply(x, y);
  };
  LinearOperator m;
  if (gs) m = [&](const Eigen::VectorXd& r, Eigen::VectorXd& z) { gs->apply(r, z); };
  GmresResult result = gmres(op, system.rhs(), m, options);
  result.report.setup_seconds = setup;
  if (gs) result.report.warnings = gs->warnings();
  result.report.times.solve = seconds_since(start);
  return result;
}

}  // namespace meshless::linsolve
