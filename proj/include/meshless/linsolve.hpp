#pragma once

#include "meshless/sparse.hpp"
#include "meshless/stokes.hpp"

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace meshless::linsolve {

/// Wall-clock seconds per pipeline phase.
struct PhaseTimes {
  double neighbor = 0.0;
  double stencil = 0.0;
  double assembly = 0.0;
  double solve = 0.0;
  double total() const { return neighbor + stencil + assembly + solve; }
};

struct SolveReport {
  int iterations = 0;
  /// ||b - A x|| / ||b||, recomputed from the operator at exit.
  double relative_residual = 0.0;
  bool converged = false;
  bool breakdown = false;
  std::string message;
  std::vector<std::string> warnings;
  double setup_seconds = 0.0;
  PhaseTimes times;
};

/// y = op(x). The output is sized by the caller.
using LinearOperator = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct GmresOptions {
  double tol = 1e-10;
  int max_iter = 5000;
  int restart = 200;
  /// Wall-clock budget in seconds; zero means unlimited.
  double time_limit = 0.0;
};

struct GmresResult {
  Eigen::VectorXd x;
  SolveReport report;
};

/// Right-preconditioned restarted GMRES from x0 = 0. `precond` may be empty.
/// On non-convergence or breakdown the iterate with the smallest true
/// residual seen at a restart boundary is returned.
GmresResult gmres(const LinearOperator& op, const Eigen::VectorXd& b, const LinearOperator& precond,
                  const GmresOptions& options = {});

// -- block solvers --------------------------------------------------------------

/// Approximate inverse of one diagonal block.
class BlockSolve {
 public:
  virtual ~BlockSolve() = default;
  virtual void solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const = 0;
};

/// Incomplete LU with zero fill on the matrix pattern. Breaks down when a
/// pivot is zero, non-finite, or tiny relative to its row, or when a probe
/// solve shows the factors amplify by more than 1e10 relative to ||A||. The
/// factor shares the pattern of `a`, which must outlive it.
class Ilu0 final : public BlockSolve {
 public:
  /// Throws Error on breakdown.
  explicit Ilu0(const SparseMatrix& a);
  void solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const override;

 private:
  const SparseMatrix* pattern_;
  std::vector<double> lu_;
  std::vector<std::int64_t> diag_;
};

/// Diagonal scaling; zero diagonal entries are treated as one.
class Jacobi final : public BlockSolve {
 public:
  explicit Jacobi(const SparseMatrix& a);
  void solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const override;

 private:
  Eigen::VectorXd inv_diag_;
};

/// Sparse direct factorization (UMFPACK when available, else Eigen SparseLU).
/// Throws Error when the factorization fails, including when it would need
/// more memory than the system has available.
class ExactSolve final : public BlockSolve {
 public:
  explicit ExactSolve(const SparseMatrix& a);
  ~ExactSolve() override;
  void solve(const Eigen::VectorXd& r, Eigen::VectorXd& z) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

enum class BlockSolverKind { Ilu0, Exact, None };
BlockSolverKind parse_block_solver(const std::string& name);

/// How unknowns are split into the two Gauss-Seidel blocks.
/// Standard: [v] then [phi, lambda]. BoundaryCoupled: [v, phi on boundary
/// particles] then [phi on interior particles, lambda], which keeps the
/// velocity-to-boundary-pressure coupling inside the first block.
enum class Partition { Standard, BoundaryCoupled };
Partition parse_partition(const std::string& name);

/// Pressure block with the mean-constraint row and column appended.
SparseMatrix augmented_pressure_block(const stokes::BlockSystem& system);

/// One forward block sweep over a two-set partition of the unknowns:
/// z_1 = A11~^-1 r_1, then z_2 = A22~^-1 (r_2 - A21 z_1). With the standard
/// partition this is z_v = K~^-1 r_v, z_(p,lambda) = L~^-1 (r_(p,lambda) -
/// [Nblk z_v; 0]). A failed block factorization falls back to ILU(0), and a
/// failed ILU(0) to Jacobi scaling, with a warning.
class BlockGaussSeidel {
 public:
  BlockGaussSeidel(const stokes::BlockSystem& system, BlockSolverKind kind, Partition partition = Partition::Standard);
  BlockGaussSeidel(const BlockGaussSeidel&) = delete;
  BlockGaussSeidel& operator=(const BlockGaussSeidel&) = delete;
  void apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const;
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<int> first_;
  std::vector<int> second_;
  const SparseMatrix* a11_ = nullptr;
  SparseMatrix owned_a11_;
  SparseMatrix a21_;
  SparseMatrix a22_;
  std::unique_ptr<BlockSolve> solve1_;
  std::unique_ptr<BlockSolve> solve2_;
  std::vector<std::string> warnings_;
};

struct PreconditionerOptions {
  BlockSolverKind kind = BlockSolverKind::Exact;
  Partition partition = Partition::BoundaryCoupled;
};

/// GMRES on the assembled block operator with block Gauss-Seidel
/// preconditioning (none when kind is None).
GmresResult solve(const stokes::BlockSystem& system, const GmresOptions& options = {},
                  const PreconditionerOptions& precond = {});

}  // namespace meshless::linsolve
