#pragma once

#include <cstdint>

#include "meshless/geometry.hpp"
#include "meshless/gmls.hpp"
#include "meshless/sparse.hpp"

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace meshless::stokes {

using geometry::PointCloud;
using linsolve::SparseMatrix;

/// Closed-form benchmark fields. `forcing` is nu * curl curl v + grad p.
struct CaseDefinition {
  std::string tag;
  double nu = 1.0;
  /// Basis order the case is built for, when it only makes sense at one.
  std::optional<int> required_order;
  std::function<Vec3(const Vec3&)> velocity;
  std::function<double(const Vec3&)> pressure;
  std::function<Vec3(const Vec3&)> pressure_gradient;
  std::function<Vec3(const Vec3&)> curl_curl;
  std::function<Vec3(const Vec3&)> forcing;
  std::function<double(const Vec3&)> forcing_divergence;
  /// Dirichlet velocity data on the boundary.
  std::function<Vec3(const Vec3&)> boundary_velocity;
};

/// Sphere benchmark constants.
inline constexpr double kSphereRadius = 1.0;
inline constexpr double kSphereSpeed = 10.0;
inline constexpr double kSphereBoxHalfWidth = 2.0;

/// Tags: poly2, poly4, trig, sphere, zero. The sphere case ignores `nu`
/// other than in its pressure and forcing.
CaseDefinition make_case(std::string_view tag, double nu = 1.0);
std::vector<std::string> case_tags();

enum class MeanCorner { Paper, Standard };
MeanCorner parse_mean_corner(std::string_view name);

/// Stencils needed for assembly, each batch indexed by target.
struct StencilSet {
  int order = 0;
  /// All particles: interior rows feed K, boundary rows feed Nblk.
  std::vector<gmls::StencilRow> curl_curl;
  /// Interior particles.
  std::vector<gmls::StencilRow> gradient;
  /// Interior: staggered Laplacian. Boundary: constrained Laplacian with its
  /// Neumann multiplier.
  std::vector<gmls::StencilRow> laplacian;
  std::vector<gmls::LocalSolveReport> reports;
  /// Targets that needed the enlarged-neighborhood retry.
  std::vector<int> retried;
};

struct NeighborTables {
  geometry::NeighborTable velocity;
  geometry::NeighborTable pressure;
};

/// Basis dimensions that size the two neighbor tables for order m.
int velocity_table_dimension(int order);
int pressure_table_dimension(int order);

NeighborTables build_tables(const PointCloud& cloud, int order, double multiplier, double dilation);

struct StencilOptions {
  double multiplier = 2.0;
  double dilation = 1.05;
  /// Each retry of a singular target multiplies the dilation by this.
  double retry_factor = 1.3;
  int max_retries = 3;
};

/// Solves every local problem. A target whose local system is singular is
/// retried with its neighborhood enlarged by `retry_factor` per attempt, up to
/// `max_retries` times; the last failure propagates as SingularStencil.
StencilSet build_stencils(const PointCloud& cloud, const NeighborTables& tables, int order,
                          const StencilOptions& options = {});

/// Unknowns are ordered [v (3N, interleaved per particle) | phi (N) | lambda].
struct BlockSystem {
  int particles = 0;
  SparseMatrix K;
  SparseMatrix G;
  SparseMatrix Nblk;
  SparseMatrix L;
  Eigen::VectorXd b;
  Eigen::VectorXd g;
  double corner = 0.0;
  double nu = 1.0;
  /// Nonzero for boundary particles.
  std::vector<std::uint8_t> boundary;

  int velocity_size() const { return 3 * particles; }
  int size() const { return 4 * particles + 1; }

  void apply(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// [b | g | 0].
  Eigen::VectorXd rhs() const;
  /// Assembled operator as one sparse matrix.
  SparseMatrix monolithic() const;
  /// Appends the (column, value) entries of global row r, columns ascending.
  void append_row(int r, std::vector<std::pair<int, double>>& out) const;
};

struct AssemblyOptions {
  MeanCorner corner = MeanCorner::Paper;
};

/// Throws IncompleteAssembly listing every target with a missing stencil.
BlockSystem assemble(const PointCloud& cloud, const StencilSet& stencils, const CaseDefinition& fields,
                     AssemblyOptions options = {});

/// Exact unknowns at the particles: [v | p | 0].
Eigen::VectorXd sample_solution(const PointCloud& cloud, const CaseDefinition& fields);

/// `x,y,z,vx,vy,vz,p` for a solution vector laid out as in BlockSystem.
void write_fields_csv(const PointCloud& cloud, const Eigen::VectorXd& solution, std::ostream& out);

}  // namespace meshless::stokes
