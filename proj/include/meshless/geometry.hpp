#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace meshless {

using Vec3 = Eigen::Vector3d;

namespace geometry {

enum class ParticleKind : std::uint8_t { Interior = 0, Boundary = 1 };

/// Particle positions with interior/boundary flags and outward normals.
///
/// Normals are unit vectors for boundary particles and zero for interior
/// ones. `spacing` is the nominal particle spacing h.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<ParticleKind> kinds;
  std::vector<Vec3> normals;
  double spacing = 0.0;

  std::size_t size() const { return positions.size(); }
  bool is_boundary(std::size_t i) const { return kinds[i] == ParticleKind::Boundary; }
  std::size_t interior_count() const;
  std::size_t boundary_count() const;

  void add(const Vec3& x, ParticleKind kind, const Vec3& normal);
};

/// n^3 uniformly spaced particles on [-1,1]^3. Face particles are boundary;
/// edge and corner particles carry the normalized sum of their face normals.
PointCloud build_cube_cloud(int n_per_axis);

/// Uniform grid over [-L,L]^3 with a spherical obstacle of radius a at the
/// origin. Grid points closer than a + h/2 to the origin are culled and the
/// sphere surface is sampled with a Fibonacci lattice of about 4 pi a^2 / h^2
/// points whose normals point into the obstacle (outward for the fluid).
/// The grid uses round(2L/h)+1 points per axis, so the realized spacing
/// stored in the cloud can differ slightly from the requested one.
PointCloud build_sphere_box_cloud(double h, double a, double L);

/// CSV with header `x,y,z,kind,nx,ny,nz`; kind is 0 (interior) or 1 (boundary).
void write_cloud_csv(const PointCloud& cloud, std::ostream& out);
PointCloud read_cloud_csv(std::istream& in);

/// Uniform bucket grid over the bounding box of a point set.
class SpatialIndex {
 public:
  SpatialIndex(std::span<const Vec3> points, double cell_size);

  /// Distance from point `self` to its k-th nearest other point (k >= 1).
  double kth_neighbor_distance(int self, int k) const;

  /// Indices of all points strictly closer than `radius` to `x`, unordered.
  void radius_query(const Vec3& x, double radius, std::vector<int>& out) const;

 private:
  std::array<int, 3> cell_of(const Vec3& x) const;
  int flat(int i, int j, int k) const { return i + dims_[0] * (j + dims_[1] * k); }

  std::span<const Vec3> points_;
  Vec3 origin_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{};
  std::vector<int> cell_start_;
  std::vector<int> cell_items_;
};

/// Per-target neighbor lists and support radii in compressed storage.
///
/// Each list is sorted by (distance, global index), so the target itself
/// comes first. Immutable after construction.
class NeighborTable {
 public:
  NeighborTable() = default;
  NeighborTable(std::vector<int> offsets, std::vector<int> ids, std::vector<double> radii);

  std::size_t size() const { return radii_.size(); }
  std::span<const int> neighbors(std::size_t target) const {
    return {ids_.data() + offsets_[target], ids_.data() + offsets_[target + 1]};
  }
  double radius(std::size_t target) const { return radii_[target]; }
  std::size_t min_count() const;
  std::size_t max_count() const;
  std::size_t total_entries() const { return ids_.size(); }

 private:
  std::vector<int> offsets_{0};
  std::vector<int> ids_;
  std::vector<double> radii_;
};

/// Number of other particles whose distance sets the support radius.
int required_neighbor_count(int basis_dim, double multiplier);

/// Support radius = dilation x distance to the ceil(multiplier*basis_dim)-th
/// nearest other particle; neighbors are all particles strictly inside it.
NeighborTable build_neighborhoods(const PointCloud& cloud, int basis_dim, double multiplier,
                                  double dilation);

/// Neighborhood of a single target under the same rule, used to retry failed
/// local solves with a larger dilation.
struct Neighborhood {
  std::vector<int> ids;
  double radius = 0.0;
};
Neighborhood build_neighborhood(const PointCloud& cloud, const SpatialIndex& index, int target,
                                int basis_dim, double multiplier, double dilation);

}  // namespace geometry
}  // namespace meshless
