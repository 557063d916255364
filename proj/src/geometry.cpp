#include "meshless/geometry.hpp"

#include "meshless/errors.hpp"
#include "meshless/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>

namespace meshless::geometry {

std::size_t PointCloud::interior_count() const {
  return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), ParticleKind::Interior));
}

std::size_t PointCloud::boundary_count() const { return size() - interior_count(); }

void PointCloud::add(const Vec3& x, ParticleKind kind, const Vec3& normal) {
  positions.push_back(x);
  kinds.push_back(kind);
  normals.push_back(kind == ParticleKind::Boundary ? normal : Vec3::Zero());
}

namespace {

double grid_coordinate(int k, int n, double half_width) {
  if (k == 0) return -half_width;
  if (k == n - 1) return half_width;
  return -half_width + 2.0 * half_width * k / (n - 1);
}

// Normalized sum of the outward normals of every box face the point lies on.
Vec3 box_face_normal(const std::array<int, 3>& k, int n) {
  Vec3 normal = Vec3::Zero();
  for (int d = 0; d < 3; ++d) {
    if (k[d] == 0) normal[d] = -1.0;
    if (k[d] == n - 1) normal[d] = 1.0;
  }
  return normal;
}

}  // namespace

PointCloud build_cube_cloud(int n_per_axis) {
  if (n_per_axis < 4) {
    throw InvalidResolution("cube cloud needs at least 4 particles per axis, got " +
                            std::to_string(n_per_axis));
  }
  const int n = n_per_axis;
  PointCloud cloud;
  cloud.spacing = 2.0 / (n - 1);
  const std::size_t total = static_cast<std::size_t>(n) * n * n;
  cloud.positions.reserve(total);
  cloud.kinds.reserve(total);
  cloud.normals.reserve(total);
  for (int kz = 0; kz < n; ++kz) {
    for (int ky = 0; ky < n; ++ky) {
      for (int kx = 0; kx < n; ++kx) {
        const Vec3 x(grid_coordinate(kx, n, 1.0), grid_coordinate(ky, n, 1.0),
                     grid_coordinate(kz, n, 1.0));
        const Vec3 normal = box_face_normal({kx, ky, kz}, n);
        if (normal.squaredNorm() > 0.0) {
          cloud.add(x, ParticleKind::Boundary, normal.normalized());
        } else {
          cloud.add(x, ParticleKind::Interior, Vec3::Zero());
        }
      }
    }
  }
  return cloud;
}

PointCloud build_sphere_box_cloud(double h, double a, double L) {
  if (!(h > 0.0) || !(a > 0.0) || !(a < L) || !(h < 0.5 * a)) {
    throw InvalidGeometry("sphere-in-box cloud needs 0 < a < L and 0 < h < a/2");
  }
  const int n = static_cast<int>(std::lround(2.0 * L / h)) + 1;
  const double spacing = 2.0 * L / (n - 1);
  const double cull_radius = a + 0.5 * spacing;

  PointCloud cloud;
  cloud.spacing = spacing;
  for (int kz = 0; kz < n; ++kz) {
    for (int ky = 0; ky < n; ++ky) {
      for (int kx = 0; kx < n; ++kx) {
        const Vec3 x(grid_coordinate(kx, n, L), grid_coordinate(ky, n, L),
                     grid_coordinate(kz, n, L));
        if (x.norm() < cull_radius) continue;
        const Vec3 normal = box_face_normal({kx, ky, kz}, n);
        if (normal.squaredNorm() > 0.0) {
          cloud.add(x, ParticleKind::Boundary, normal.normalized());
        } else {
          cloud.add(x, ParticleKind::Interior, Vec3::Zero());
        }
      }
    }
  }

  // Fibonacci spiral lattice on the obstacle surface.
  const int count = std::max(
      4, static_cast<int>(std::lround(4.0 * std::numbers::pi * a * a / (spacing * spacing))));
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < count; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * k;
    Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
    dir.normalize();
    cloud.add(a * dir, ParticleKind::Boundary, -dir);
  }
  return cloud;
}

void write_cloud_csv(const PointCloud& cloud, std::ostream& out) {
  out << "x,y,z,kind,nx,ny,nz\n";
  out.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& x = cloud.positions[i];
    const Vec3& nrm = cloud.normals[i];
    out << x[0] << ',' << x[1] << ',' << x[2] << ',' << static_cast<int>(cloud.kinds[i]) << ','
        << nrm[0] << ',' << nrm[1] << ',' << nrm[2] << '\n';
  }
}

PointCloud read_cloud_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,z,kind", 0) != 0) {
    throw Error("cloud CSV is missing its `x,y,z,kind,nx,ny,nz` header");
  }
  PointCloud cloud;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    Vec3 x, nrm;
    int kind = 0;
    if (!(fields >> x[0] >> x[1] >> x[2] >> kind >> nrm[0] >> nrm[1] >> nrm[2]) ||
        (kind != 0 && kind != 1)) {
      throw Error("malformed cloud CSV row " + std::to_string(row));
    }
    cloud.add(x, static_cast<ParticleKind>(kind), nrm);
  }
  // The spacing is not stored; estimate it from nearest-neighbor distances.
  if (cloud.size() >= 2) {
    SpatialIndex index(cloud.positions, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      sum += index.kth_neighbor_distance(static_cast<int>(i), 1);
    }
    cloud.spacing = sum / static_cast<double>(cloud.size());
  }
  return cloud;
}

// ---------------------------------------------------------------------------

SpatialIndex::SpatialIndex(std::span<const Vec3> points, double cell_size) : points_(points) {
  Vec3 lo = Vec3::Constant(0.0), hi = Vec3::Constant(0.0);
  if (!points.empty()) {
    lo = hi = points[0];
    for (const Vec3& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  const Vec3 extent = (hi - lo).cwiseMax(1e-12);
  if (!(cell_size > 0.0)) {
    // About two points per cell on average.
    const double volume = extent.prod();
    cell_size = std::cbrt(2.0 * volume / std::max<std::size_t>(1, points.size()));
    cell_size = std::max(cell_size, extent.maxCoeff() / 256.0);
  }
  cell_ = cell_size;
  origin_ = lo;
  for (int d = 0; d < 3; ++d) {
    dims_[d] = std::max(1, static_cast<int>(std::floor(extent[d] / cell_)) + 1);
  }
  const std::size_t cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  std::vector<int> counts(cells + 1, 0);
  std::vector<int> owner(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = cell_of(points[i]);
    owner[i] = flat(c[0], c[1], c[2]);
    ++counts[static_cast<std::size_t>(owner[i]) + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) counts[c + 1] += counts[c];
  cell_start_ = counts;
  cell_items_.resize(points.size());
  std::vector<int> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    cell_items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(owner[i])]++)] =
        static_cast<int>(i);
  }
}

std::array<int, 3> SpatialIndex::cell_of(const Vec3& x) const {
  std::array<int, 3> c{};
  for (int d = 0; d < 3; ++d) {
    c[d] = std::clamp(static_cast<int>(std::floor((x[d] - origin_[d]) / cell_)), 0, dims_[d] - 1);
  }
  return c;
}

double SpatialIndex::kth_neighbor_distance(int self, int k) const {
  if (k < 1 || static_cast<std::size_t>(k) >= points_.size()) {
    throw InsufficientPoints("k-th neighbor query needs at least k+1 points");
  }
  const Vec3& x = points_[static_cast<std::size_t>(self)];
  const auto center = cell_of(x);
  // Max-heap of the k smallest squared distances seen so far.
  std::priority_queue<double> best;
  const int max_shell = std::max({dims_[0], dims_[1], dims_[2]});
  for (int shell = 0; shell <= max_shell; ++shell) {
    for (int dk = -shell; dk <= shell; ++dk) {
      const int ck = center[2] + dk;
      if (ck < 0 || ck >= dims_[2]) continue;
      for (int dj = -shell; dj <= shell; ++dj) {
        const int cj = center[1] + dj;
        if (cj < 0 || cj >= dims_[1]) continue;
        for (int di = -shell; di <= shell; ++di) {
          if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != shell) continue;
          const int ci = center[0] + di;
          if (ci < 0 || ci >= dims_[0]) continue;
          const int c = flat(ci, cj, ck);
          for (int s = cell_start_[static_cast<std::size_t>(c)];
               s < cell_start_[static_cast<std::size_t>(c) + 1]; ++s) {
            const int j = cell_items_[static_cast<std::size_t>(s)];
            if (j == self) continue;
            const double d2 = (points_[static_cast<std::size_t>(j)] - x).squaredNorm();
            if (static_cast<int>(best.size()) < k) {
              best.push(d2);
            } else if (d2 < best.top()) {
              best.pop();
              best.push(d2);
            }
          }
        }
      }
    }
    // Anything outside the scanned shells is at least shell*cell away.
    const double reach = shell * cell_;
    if (static_cast<int>(best.size()) == k && best.top() <= reach * reach) break;
  }
  return std::sqrt(best.top());
}

void SpatialIndex::radius_query(const Vec3& x, double radius, std::vector<int>& out) const {
  out.clear();
  const auto lo = cell_of(x - Vec3::Constant(radius));
  const auto hi = cell_of(x + Vec3::Constant(radius));
  const double r2 = radius * radius;
  for (int ck = lo[2]; ck <= hi[2]; ++ck) {
    for (int cj = lo[1]; cj <= hi[1]; ++cj) {
      for (int ci = lo[0]; ci <= hi[0]; ++ci) {
        const int c = flat(ci, cj, ck);
        for (int s = cell_start_[static_cast<std::size_t>(c)];
             s < cell_start_[static_cast<std::size_t>(c) + 1]; ++s) {
          const int j = cell_items_[static_cast<std::size_t>(s)];
          if ((points_[static_cast<std::size_t>(j)] - x).squaredNorm() < r2) out.push_back(j);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

NeighborTable::NeighborTable(std::vector<int> offsets, std::vector<int> ids,
                             std::vector<double> radii)
    : offsets_(std::move(offsets)), ids_(std::move(ids)), radii_(std::move(radii)) {}

std::size_t NeighborTable::min_count() const {
  std::size_t best = size() == 0 ? 0 : std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < size(); ++i) best = std::min(best, neighbors(i).size());
  return best;
}

std::size_t NeighborTable::max_count() const {
  std::size_t best = 0;
  for (std::size_t i = 0; i < size(); ++i) best = std::max(best, neighbors(i).size());
  return best;
}

int required_neighbor_count(int basis_dim, double multiplier) {
  return static_cast<int>(std::ceil(multiplier * basis_dim - 1e-12));
}

Neighborhood build_neighborhood(const PointCloud& cloud, const SpatialIndex& index, int target,
                                int basis_dim, double multiplier, double dilation) {
  const int k = required_neighbor_count(basis_dim, multiplier);
  Neighborhood hood;
  hood.radius = dilation * index.kth_neighbor_distance(target, k);
  const Vec3& x = cloud.positions[static_cast<std::size_t>(target)];
  index.radius_query(x, hood.radius, hood.ids);
  if (std::find(hood.ids.begin(), hood.ids.end(), target) == hood.ids.end()) {
    hood.ids.push_back(target);
  }
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(hood.ids.size());
  for (int j : hood.ids) {
    const double d2 = j == target ? -1.0 : (cloud.positions[static_cast<std::size_t>(j)] - x).squaredNorm();
    keyed.emplace_back(d2, j);
  }
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t s = 0; s < keyed.size(); ++s) hood.ids[s] = keyed[s].second;
  return hood;
}

NeighborTable build_neighborhoods(const PointCloud& cloud, int basis_dim, double multiplier,
                                  double dilation) {
  if (cloud.size() == 0) throw InsufficientPoints("cannot build neighborhoods of an empty cloud");
  if (multiplier < 1.5) throw Error("neighbor multiplier must be at least 1.5");
  if (dilation < 1.0) throw Error("support dilation must be at least 1.0");
  const int k = required_neighbor_count(basis_dim, multiplier);
  if (static_cast<std::size_t>(k) >= cloud.size()) {
    throw InsufficientPoints("cloud has " + std::to_string(cloud.size()) +
                             " particles but each target needs " + std::to_string(k) +
                             " other particles");
  }
  const SpatialIndex index(cloud.positions, cloud.spacing > 0.0 ? cloud.spacing : 0.0);
  const std::size_t n = cloud.size();
  std::vector<Neighborhood> hoods(n);
  ExceptionRelay relay;
#pragma omp parallel for schedule(dynamic, 256)
  for (std::size_t i = 0; i < n; ++i) {
    relay.run([&] { hoods[i] = build_neighborhood(cloud, index, static_cast<int>(i), basis_dim, multiplier, dilation); });
  }
  relay.rethrow();
  std::vector<int> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + static_cast<int>(hoods[i].ids.size());
  std::vector<int> ids(static_cast<std::size_t>(offsets[n]));
  std::vector<double> radii(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(hoods[i].ids.begin(), hoods[i].ids.end(), ids.begin() + offsets[i]);
    radii[i] = hoods[i].radius;
  }
  return NeighborTable(std::move(offsets), std::move(ids), std::move(radii));
}

}  // namespace meshless::geometry
