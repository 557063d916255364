#include "meshless/gmls.hpp"

#include "meshless/errors.hpp"

#include <Eigen/QR>

#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>

namespace meshless::gmls {

using basis::DivFreeBasis;
using basis::ScalarBasis;
using basis::VectorBasis;
using Eigen::MatrixXd;
using Eigen::VectorXd;

int block_size(StencilOp op) {
  switch (op) {
    case StencilOp::CurlCurl: return 9;
    case StencilOp::Gradient: return 3;
    default: return 1;
  }
}

const char* to_string(StencilOp op) {
  switch (op) {
    case StencilOp::CurlCurl: return "curlcurl";
    case StencilOp::Gradient: return "gradient";
    case StencilOp::Laplacian: return "laplacian";
    case StencilOp::ConstrainedLaplacian: return "constrained_laplacian";
    case StencilOp::Identity: return "identity";
    case StencilOp::Derivative: return "derivative";
  }
  return "unknown";
}

double StencilRow::l1_norm() const {
  double s = 0.0;
  for (double c : coefficients) s += std::abs(c);
  return s;
}

std::vector<int> all_targets(std::size_t count) {
  std::vector<int> t(count);
  for (std::size_t i = 0; i < count; ++i) t[i] = static_cast<int>(i);
  return t;
}

namespace {

struct WeightedSamples {
  VectorXd sqrt_weight;  // per neighbor
};

WeightedSamples sample_weights(const PointCloud& cloud, int target, std::span<const int> neighbors,
                               double support) {
  const WeightFunction w{support};
  const Vec3& xt = cloud.positions[static_cast<std::size_t>(target)];
  WeightedSamples s;
  s.sqrt_weight.resize(static_cast<Eigen::Index>(neighbors.size()));
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    const double d = (cloud.positions[static_cast<std::size_t>(neighbors[j])] - xt).norm();
    s.sqrt_weight[static_cast<Eigen::Index>(j)] = std::sqrt(w(d));
  }
  return s;
}

std::string describe(const std::string& what, int target, double condition) {
  std::ostringstream msg;
  msg << what << " at target " << target << " (condition estimate " << condition << ")";
  return msg.str();
}

/// Pivoted Householder QR of the weighted design matrix A = sqrt(W) P.
class WeightedQr {
 public:
  WeightedQr(const MatrixXd& design, int target, Variant variant) : qr_(design) {
    const Eigen::Index n = design.cols();
    const MatrixXd& r = qr_.matrixQR();
    const double top = std::abs(r(0, 0));
    const double bottom = design.rows() >= n ? std::abs(r(n - 1, n - 1)) : 0.0;
    condition_ = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
    if (design.rows() < n || !(top > 0.0) || bottom < kRankTolerance * top) {
      const char* what = variant == Variant::NeumannConstrained ? "singular constrained local system"
                                                                 : "singular local least-squares system";
      if (variant == Variant::NeumannConstrained) throw SingularConstraint(target, condition_, describe(what, target, condition_));
      throw SingularStencil(target, condition_, describe(what, target, condition_));
    }
  }

  double condition() const { return condition_; }
  Eigen::Index cols() const { return qr_.cols(); }
  VectorXd solve(const VectorXd& b) const { return qr_.solve(b); }

  /// a = R^{-T} P^T g for each column g of `functionals_t` (Q x k).
  MatrixXd back_solve(const MatrixXd& functionals_t) const {
    const Eigen::Index n = qr_.cols();
    MatrixXd permuted = qr_.colsPermutation().transpose() * functionals_t;
    qr_.matrixQR().topLeftCorner(n, n).triangularView<Eigen::Upper>().transpose().solveInPlace(permuted);
    return permuted;
  }

  /// Q [a; 0] for each column.
  MatrixXd apply_q(const MatrixXd& a) const {
    MatrixXd padded = MatrixXd::Zero(qr_.rows(), a.cols());
    padded.topRows(a.rows()) = a;
    return qr_.householderQ() * padded;
  }

  /// rows x k matrix C with functional_k(c) = sum_r C(r,k) b_r for the
  /// least-squares coefficients c of A c = b.
  MatrixXd functional_weights(const MatrixXd& functionals_t) const { return apply_q(back_solve(functionals_t)); }

 private:
  Eigen::ColPivHouseholderQR<MatrixXd> qr_;
  double condition_ = 0.0;
};

void fill_report(LocalSolveReport* report, int target, double condition, std::size_t count, Variant v) {
  if (!report) return;
  report->target = target;
  report->condition = condition;
  report->neighbor_count = static_cast<int>(count);
  report->variant = v;
}

MatrixXd scalar_design(const PointCloud& cloud, std::span<const int> neighbors, const ScalarBasis& basis,
                       const VectorXd& sqrt_weight) {
  MatrixXd a(static_cast<Eigen::Index>(neighbors.size()), basis.size());
  Eigen::RowVectorXd p(basis.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    basis.eval_into(cloud.positions[static_cast<std::size_t>(neighbors[j])], p);
    a.row(static_cast<Eigen::Index>(j)) = sqrt_weight[static_cast<Eigen::Index>(j)] * p;
  }
  return a;
}

StencilRow scalar_row_from_functional(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                      double support, int order, const Eigen::RowVectorXd& functional,
                                      StencilOp op, LocalSolveReport* report) {
  const Vec3& xt = cloud.positions[static_cast<std::size_t>(target)];
  const ScalarBasis basis(order, xt, support);
  const WeightedSamples samples = sample_weights(cloud, target, neighbors, support);
  const MatrixXd design = scalar_design(cloud, neighbors, basis, samples.sqrt_weight);
  const WeightedQr qr(design, target, Variant::Basic);
  const MatrixXd c = qr.functional_weights(functional.transpose());
  StencilRow row;
  row.target = target;
  row.op = op;
  row.neighbors.assign(neighbors.begin(), neighbors.end());
  row.coefficients.resize(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    row.coefficients[j] = c(static_cast<Eigen::Index>(j), 0) * samples.sqrt_weight[static_cast<Eigen::Index>(j)];
  }
  fill_report(report, target, qr.condition(), neighbors.size(), Variant::Basic);
  return row;
}

}  // namespace

StencilRow basic_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors, double support,
                         int order, const basis::MultiIndex& beta, LocalSolveReport* report) {
  const ScalarBasis basis(order, cloud.positions[static_cast<std::size_t>(target)], support);
  const Eigen::RowVectorXd functional = basis.derivative(beta, basis.center());
  const bool identity = basis::degree(beta) == 0;
  return scalar_row_from_functional(cloud, target, neighbors, support, order, functional,
                                    identity ? StencilOp::Identity : StencilOp::Derivative, report);
}

StencilRow basic_laplacian_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                   double support, int order, LocalSolveReport* report) {
  const ScalarBasis basis(order, cloud.positions[static_cast<std::size_t>(target)], support);
  return scalar_row_from_functional(cloud, target, neighbors, support, order, basis.laplacian(basis.center()),
                                    StencilOp::Laplacian, report);
}

StencilRow divfree_curl_curl_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                     double support, const DivFreeBasis& abstract_basis,
                                     LocalSolveReport* report) {
  const Vec3& xt = cloud.positions[static_cast<std::size_t>(target)];
  const DivFreeBasis basis = abstract_basis.at(xt, support);
  const WeightedSamples samples = sample_weights(cloud, target, neighbors, support);
  const Eigen::Index qd = basis.size();
  const auto nn = static_cast<Eigen::Index>(neighbors.size());
  MatrixXd design(3 * nn, qd);
  MatrixXd psi(3, qd);
  for (Eigen::Index j = 0; j < nn; ++j) {
    basis.eval_into(cloud.positions[static_cast<std::size_t>(neighbors[static_cast<std::size_t>(j)])], psi);
    design.middleRows(3 * j, 3) = samples.sqrt_weight[j] * psi;
  }
  const WeightedQr qr(design, target, Variant::DivergenceFree);
  const MatrixXd functionals = basis.eval_curl_curl(xt);  // 3 x Q_d
  const MatrixXd c = qr.functional_weights(functionals.transpose());  // 3nn x 3
  StencilRow row;
  row.target = target;
  row.op = StencilOp::CurlCurl;
  row.neighbors.assign(neighbors.begin(), neighbors.end());
  row.coefficients.resize(static_cast<std::size_t>(9 * nn));
  for (Eigen::Index j = 0; j < nn; ++j) {
    const double sw = samples.sqrt_weight[j];
    for (int out = 0; out < 3; ++out) {
      for (int in = 0; in < 3; ++in) {
        row.coefficients[static_cast<std::size_t>(9 * j + 3 * out + in)] = c(3 * j + in, out) * sw;
      }
    }
  }
  fill_report(report, target, qr.condition(), neighbors.size(), Variant::DivergenceFree);
  return row;
}

std::pair<StencilRow, StencilRow> staggered_stencils(const PointCloud& cloud, int target,
                                                     std::span<const int> neighbors, double support, int order,
                                                     LocalSolveReport* report) {
  const Vec3& xt = cloud.positions[static_cast<std::size_t>(target)];
  const VectorBasis basis(order, xt, support);
  const WeightedSamples samples = sample_weights(cloud, target, neighbors, support);
  const auto nn = static_cast<Eigen::Index>(neighbors.size());
  const int qv = basis.size();
  const int q = basis.scalar().size();
  MatrixXd design(nn, qv);
  Eigen::RowVectorXd xi(qv);
  for (Eigen::Index j = 0; j < nn; ++j) {
    basis.line_integrals_into(xt, cloud.positions[static_cast<std::size_t>(neighbors[static_cast<std::size_t>(j)])], xi);
    design.row(j) = samples.sqrt_weight[j] * xi;
  }

  // Straight-segment integrals only see the scalar potential of each field:
  // the image is the span of degree 1..order+1 scalar polynomials without a
  // constant, so the structural rank is C(order+4, 3) - 1 and the remaining
  // directions (rotational parts) are invisible. Their complement contains
  // the gradient and divergence functionals at the target, so the
  // minimum-norm solution yields the unique stencil.
  const int structural_rank = basis::scalar_dimension(order + 1) - 1;
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod;
  cod.setThreshold(kRankTolerance * 1e2);
  cod.compute(design);
  const double top = std::abs(cod.matrixQTZ()(0, 0));
  const Eigen::Index rank = cod.rank();
  const double bottom = rank > 0 ? std::abs(cod.matrixQTZ()(rank - 1, rank - 1)) : 0.0;
  const double condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  if (rank != structural_rank) {
    throw SingularStencil(target, condition,
                          describe("staggered local system has numerical rank " + std::to_string(rank) +
                                       ", expected " + std::to_string(structural_rank),
                                   target, condition));
  }
  MatrixXd functionals = MatrixXd::Zero(4, qv);
  // Gradient: q_h(x_T) = Phi(x_T) c / eps, only constant members survive.
  for (int c = 0; c < 3; ++c) functionals(c, c * q) = 1.0 / support;
  // Laplacian: div q_h(x_T) = (div Phi)(x_T) c / eps.
  functionals.row(3) = basis.divergence(xt) / support;
  const MatrixXd weights = (functionals * cod.pseudoInverse()).transpose();  // nn x 4

  StencilRow gradient, laplacian;
  gradient.target = laplacian.target = target;
  gradient.op = StencilOp::Gradient;
  laplacian.op = StencilOp::Laplacian;
  gradient.neighbors.assign(neighbors.begin(), neighbors.end());
  laplacian.neighbors = gradient.neighbors;
  gradient.coefficients.assign(static_cast<std::size_t>(3 * nn), 0.0);
  laplacian.coefficients.assign(static_cast<std::size_t>(nn), 0.0);
  // rho_j = p_j - p_T: every coefficient also lands, negated, on the target.
  std::size_t self = neighbors.size();
  Vec3 grad_sum = Vec3::Zero();
  double lap_sum = 0.0;
  for (Eigen::Index j = 0; j < nn; ++j) {
    const auto js = static_cast<std::size_t>(j);
    if (neighbors[js] == target) self = js;
    const double sw = samples.sqrt_weight[j];
    for (int c = 0; c < 3; ++c) {
      gradient.coefficients[3 * js + static_cast<std::size_t>(c)] = weights(j, c) * sw;
      grad_sum[c] += weights(j, c) * sw;
    }
    laplacian.coefficients[js] = weights(j, 3) * sw;
    lap_sum += weights(j, 3) * sw;
  }
  if (self == neighbors.size()) {
    throw Error("staggered stencil requires the target among its own neighbors (target " + std::to_string(target) + ")");
  }
  for (int c = 0; c < 3; ++c) gradient.coefficients[3 * self + static_cast<std::size_t>(c)] -= grad_sum[c];
  laplacian.coefficients[self] -= lap_sum;
  fill_report(report, target, condition, neighbors.size(), Variant::Staggered);
  return {std::move(gradient), std::move(laplacian)};
}

namespace {

struct ConstrainedParts {
  MatrixXd design;
  VectorXd sqrt_weight;
  VectorXd constraint;  // F = grad p(x_T)^T n
  Eigen::RowVectorXd laplacian;
};

ConstrainedParts constrained_parts(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                   double support, int order) {
  const auto t = static_cast<std::size_t>(target);
  const ScalarBasis basis(order, cloud.positions[t], support);
  ConstrainedParts parts;
  parts.sqrt_weight = sample_weights(cloud, target, neighbors, support).sqrt_weight;
  parts.design = scalar_design(cloud, neighbors, basis, parts.sqrt_weight);
  parts.constraint = (basis.gradient(cloud.positions[t]).transpose() * cloud.normals[t]);
  parts.laplacian = basis.laplacian(cloud.positions[t]);
  return parts;
}

}  // namespace

namespace {

/// Orthogonal split of the coefficient space for the constraint F^T c = h:
/// c = F h / |F|^2 + Z y with the columns of Z an orthonormal basis of
/// null(F^T), taken from the Householder reflector that maps F to an axis.
struct ConstraintSplit {
  MatrixXd null_basis;
  VectorXd particular;  // F / |F|^2
};

ConstraintSplit split_constraint(const VectorXd& f, int target, double condition) {
  const double norm = f.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw SingularConstraint(target, condition, describe("degenerate Neumann constraint", target, condition));
  }
  const Eigen::Index q = f.size();
  VectorXd v = f;
  v[0] += (f[0] >= 0.0 ? norm : -norm);
  const MatrixXd h = MatrixXd::Identity(q, q) - (2.0 / v.squaredNorm()) * v * v.transpose();
  return {h.rightCols(q - 1), f / (norm * norm)};
}

}  // namespace

// The constrained minimizer is eliminated onto null(F^T): only A Z has to be
// of full rank, so the datum can stand in for a missing layer of samples
// along the normal.
StencilRow neumann_constrained_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                       double support, int order, LocalSolveReport* report) {
  const auto t = static_cast<std::size_t>(target);
  if (!cloud.is_boundary(t)) throw Error("Neumann-constrained stencil requested at interior target " + std::to_string(target));
  const ConstrainedParts parts = constrained_parts(cloud, target, neighbors, support, order);
  const ConstraintSplit split = split_constraint(parts.constraint, target, 0.0);
  const MatrixXd reduced = parts.design * split.null_basis;
  const WeightedQr qr(reduced, target, Variant::NeumannConstrained);
  const VectorXd w = qr.functional_weights(split.null_basis.transpose() * parts.laplacian.transpose());
  StencilRow row;
  row.target = target;
  row.op = StencilOp::ConstrainedLaplacian;
  row.neighbors.assign(neighbors.begin(), neighbors.end());
  row.coefficients.resize(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    row.coefficients[j] = w[static_cast<Eigen::Index>(j)] * parts.sqrt_weight[static_cast<Eigen::Index>(j)];
  }
  row.boundary_scalar = parts.laplacian.dot(split.particular) - w.dot(parts.design * split.particular);
  fill_report(report, target, qr.condition(), neighbors.size(), Variant::NeumannConstrained);
  return row;
}

Eigen::VectorXd neumann_constrained_fit(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                        double support, int order, const Eigen::VectorXd& values, double datum) {
  const ConstrainedParts parts = constrained_parts(cloud, target, neighbors, support, order);
  const ConstraintSplit split = split_constraint(parts.constraint, target, 0.0);
  const VectorXd particular = datum * split.particular;
  const MatrixXd reduced = parts.design * split.null_basis;
  const WeightedQr qr(reduced, target, Variant::NeumannConstrained);
  const VectorXd b = parts.sqrt_weight.cwiseProduct(values) - parts.design * particular;
  return particular + split.null_basis * qr.solve(b);
}

// ---------------------------------------------------------------------------

namespace {

template <typename Solve>
StencilBatch run_batch(const PointCloud& cloud, std::span<const int> targets, BatchOptions options, Solve&& solve) {
  StencilBatch batch;
  batch.rows.resize(cloud.size());
  batch.reports.resize(cloud.size());
  std::vector<char> failed(cloud.size(), 0);
  std::exception_ptr other_error;
  std::mutex guard;
  const auto count = static_cast<std::ptrdiff_t>(targets.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t s = 0; s < count; ++s) {
    const int t = targets[static_cast<std::size_t>(s)];
    try {
      batch.rows[static_cast<std::size_t>(t)] = solve(t, &batch.reports[static_cast<std::size_t>(t)]);
    } catch (const SingularStencil&) {
      failed[static_cast<std::size_t>(t)] = 1;
    } catch (...) {
      std::lock_guard lock(guard);
      if (!other_error) other_error = std::current_exception();
    }
  }
  if (other_error) std::rethrow_exception(other_error);
  for (std::size_t t = 0; t < failed.size(); ++t) {
    if (failed[t]) batch.failed.push_back(static_cast<int>(t));
  }
  if (options.throw_on_failure && !batch.failed.empty()) {
    // Re-run the lowest failing target serially to surface its error.
    const int t = batch.failed.front();
    LocalSolveReport scratch;
    solve(t, &scratch);
  }
  return batch;
}

}  // namespace

StencilBatch solve_basic_gmls(const PointCloud& cloud, const NeighborTable& table, int order,
                              std::span<const int> targets, const basis::MultiIndex& beta, BatchOptions options) {
  return run_batch(cloud, targets, options, [&](int t, LocalSolveReport* r) {
    return basic_stencil(cloud, t, table.neighbors(static_cast<std::size_t>(t)), table.radius(static_cast<std::size_t>(t)),
                         order, beta, r);
  });
}

StencilBatch solve_basic_laplacian(const PointCloud& cloud, const NeighborTable& table, int order,
                                   std::span<const int> targets, BatchOptions options) {
  return run_batch(cloud, targets, options, [&](int t, LocalSolveReport* r) {
    return basic_laplacian_stencil(cloud, t, table.neighbors(static_cast<std::size_t>(t)),
                                   table.radius(static_cast<std::size_t>(t)), order, r);
  });
}

StencilBatch solve_divfree_gmls(const PointCloud& cloud, const NeighborTable& table, const DivFreeBasis& basis,
                                std::span<const int> targets, BatchOptions options) {
  return run_batch(cloud, targets, options, [&](int t, LocalSolveReport* r) {
    return divfree_curl_curl_stencil(cloud, t, table.neighbors(static_cast<std::size_t>(t)),
                                     table.radius(static_cast<std::size_t>(t)), basis, r);
  });
}

std::pair<StencilBatch, StencilBatch> solve_staggered_gmls(const PointCloud& cloud, const NeighborTable& table,
                                                           int order, std::span<const int> targets,
                                                           BatchOptions options) {
  std::vector<StencilRow> laplacians(cloud.size());
  StencilBatch gradients = run_batch(cloud, targets, options, [&](int t, LocalSolveReport* r) {
    auto rows = staggered_stencils(cloud, t, table.neighbors(static_cast<std::size_t>(t)),
                                   table.radius(static_cast<std::size_t>(t)), order, r);
    laplacians[static_cast<std::size_t>(t)] = std::move(rows.second);
    return std::move(rows.first);
  });
  StencilBatch lap;
  lap.rows = std::move(laplacians);
  lap.reports = gradients.reports;
  lap.failed = gradients.failed;
  return {std::move(gradients), std::move(lap)};
}

StencilBatch solve_neumann_constrained(const PointCloud& cloud, const NeighborTable& table, int order,
                                       std::span<const int> boundary_targets, BatchOptions options) {
  return run_batch(cloud, boundary_targets, options, [&](int t, LocalSolveReport* r) {
    return neumann_constrained_stencil(cloud, t, table.neighbors(static_cast<std::size_t>(t)),
                                       table.radius(static_cast<std::size_t>(t)), order, r);
  });
}

double apply_scalar(const StencilRow& row, std::span<const double> values) {
  double s = 0.0;
  for (std::size_t j = 0; j < row.neighbors.size(); ++j) {
    s += row.coefficients[j] * values[static_cast<std::size_t>(row.neighbors[j])];
  }
  return s;
}

Vec3 apply_vector(const StencilRow& row, std::span<const double> values) {
  Vec3 out = Vec3::Zero();
  for (std::size_t j = 0; j < row.neighbors.size(); ++j) {
    const auto id = static_cast<std::size_t>(row.neighbors[j]);
    const auto b = row.block(j);
    if (row.op == StencilOp::Gradient) {
      for (int c = 0; c < 3; ++c) out[c] += b[static_cast<std::size_t>(c)] * values[id];
    } else {
      for (int o = 0; o < 3; ++o) {
        for (int i = 0; i < 3; ++i) out[o] += b[static_cast<std::size_t>(3 * o + i)] * values[3 * id + static_cast<std::size_t>(i)];
      }
    }
  }
  return out;
}

void write_stencil_csv(std::span<const StencilRow> rows, std::ostream& out) {
  out << "target,neighbor,op,c00,c01,c02,c10,c11,c12,c20,c21,c22\n";
  out.precision(17);
  for (const StencilRow& row : rows) {
    for (std::size_t j = 0; j < row.neighbors.size(); ++j) {
      std::array<double, 9> c{};
      const auto b = row.block(j);
      if (row.op == StencilOp::CurlCurl) {
        std::copy(b.begin(), b.end(), c.begin());
      } else if (row.op == StencilOp::Gradient) {
        c[0] = b[0];
        c[3] = b[1];
        c[6] = b[2];
      } else {
        c[0] = b[0];
      }
      out << row.target << ',' << row.neighbors[j] << ',' << to_string(row.op);
      for (double v : c) out << ',' << v;
      out << '\n';
    }
  }
}

}  // namespace meshless::gmls
