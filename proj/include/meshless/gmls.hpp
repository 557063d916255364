#pragma once

#include "meshless/basis.hpp"
#include "meshless/geometry.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace meshless::gmls {

using geometry::NeighborTable;
using geometry::PointCloud;

/// W(r) = 1 - (r/eps)^4 inside the support, zero outside.
struct WeightFunction {
  double support;
  double operator()(double r) const {
    if (r >= support) return 0.0;
    const double t = r / support;
    const double t2 = t * t;
    return 1.0 - t2 * t2;
  }
};

enum class StencilOp { CurlCurl, Gradient, Laplacian, ConstrainedLaplacian, Identity, Derivative };

/// Number of coefficients per neighbor: 3x3 row-major for CurlCurl, a column
/// of 3 for Gradient, one otherwise.
int block_size(StencilOp op);
const char* to_string(StencilOp op);

/// Finite-difference-like row: sum_j coeff_block(j) * value_j approximates the
/// operator at the target.
struct StencilRow {
  int target = -1;
  StencilOp op = StencilOp::Identity;
  std::vector<int> neighbors;
  std::vector<double> coefficients;
  /// Multiplier of the Neumann datum for constrained Laplacian rows.
  std::optional<double> boundary_scalar;

  bool empty() const { return neighbors.empty(); }
  std::span<const double> block(std::size_t j) const {
    const auto b = static_cast<std::size_t>(block_size(op));
    return {coefficients.data() + j * b, b};
  }
  double l1_norm() const;
};

enum class Variant { Basic, DivergenceFree, Staggered, NeumannConstrained };

struct LocalSolveReport {
  int target = -1;
  double condition = 0.0;
  int neighbor_count = 0;
  Variant variant = Variant::Basic;
};

/// Rows are indexed by target id; `failed` lists targets whose local system
/// was singular when failures are collected instead of thrown.
struct StencilBatch {
  std::vector<StencilRow> rows;
  std::vector<LocalSolveReport> reports;
  std::vector<int> failed;
};

struct BatchOptions {
  bool throw_on_failure = true;
};

/// Singular values (estimated by the pivoted-QR diagonal) below this
/// fraction of the largest mark a local system as rank deficient.
inline constexpr double kRankTolerance = 1e-12;

// -- single-target solves -----------------------------------------------------

/// D^beta at the target from a basic GMLS fit of order `order`.
StencilRow basic_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors, double support,
                         int order, const basis::MultiIndex& beta, LocalSolveReport* report = nullptr);

/// Laplacian at the target from a basic GMLS fit.
StencilRow basic_laplacian_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                   double support, int order, LocalSolveReport* report = nullptr);

/// Curl-curl 3x3 blocks from a divergence-free vector fit.
StencilRow divfree_curl_curl_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                     double support, const basis::DivFreeBasis& basis,
                                     LocalSolveReport* report = nullptr);

/// Gradient and Laplacian rows from the staggered line-integral fit with a
/// vector basis of order `order`. Both rows include the self coefficient
/// produced by differencing against the target value.
std::pair<StencilRow, StencilRow> staggered_stencils(const PointCloud& cloud, int target,
                                                     std::span<const int> neighbors, double support, int order,
                                                     LocalSolveReport* report = nullptr);

/// Laplacian row and Neumann multiplier from the fit constrained by
/// n . grad u(target) = h.
StencilRow neumann_constrained_stencil(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                       double support, int order, LocalSolveReport* report = nullptr);

/// Polynomial coefficients of the Neumann-constrained fit to `values` (one
/// per neighbor) with datum `datum`.
Eigen::VectorXd neumann_constrained_fit(const PointCloud& cloud, int target, std::span<const int> neighbors,
                                        double support, int order, const Eigen::VectorXd& values, double datum);

// -- batch solves over a neighbor table -----------------------------------------

StencilBatch solve_basic_gmls(const PointCloud& cloud, const NeighborTable& table, int order,
                              std::span<const int> targets, const basis::MultiIndex& beta,
                              BatchOptions options = {});

StencilBatch solve_basic_laplacian(const PointCloud& cloud, const NeighborTable& table, int order,
                                   std::span<const int> targets, BatchOptions options = {});

StencilBatch solve_divfree_gmls(const PointCloud& cloud, const NeighborTable& table,
                                const basis::DivFreeBasis& basis, std::span<const int> targets,
                                BatchOptions options = {});

/// First batch holds gradient rows, second the Laplacian rows.
std::pair<StencilBatch, StencilBatch> solve_staggered_gmls(const PointCloud& cloud, const NeighborTable& table,
                                                           int order, std::span<const int> targets,
                                                           BatchOptions options = {});

StencilBatch solve_neumann_constrained(const PointCloud& cloud, const NeighborTable& table, int order,
                                       std::span<const int> boundary_targets, BatchOptions options = {});

/// Applies a scalar-valued row to nodal values.
double apply_scalar(const StencilRow& row, std::span<const double> values);
/// Applies a vector-valued row (Gradient or CurlCurl) to nodal values laid out
/// as 1 (Gradient) or 3 (CurlCurl) values per particle.
Vec3 apply_vector(const StencilRow& row, std::span<const double> values);

/// Debug dump `target,neighbor,op,c00,...,c22`; unused block entries are 0.
void write_stencil_csv(std::span<const StencilRow> rows, std::ostream& out);

std::vector<int> all_targets(std::size_t count);

}  // namespace meshless::gmls
