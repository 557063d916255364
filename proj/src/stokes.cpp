#include "meshless/stokes.hpp"

#include "meshless/basis.hpp"
#include "meshless/errors.hpp"
#include "meshless/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace meshless::stokes {

namespace {

CaseDefinition poly2_case() {
  CaseDefinition c;
  c.tag = "poly2";
  c.required_order = 2;
  c.velocity = [](const Vec3& x) {
    return Vec3(7 * x[0] * x[0] + 6 * x[1] * x[1], -6 * x[1] * x[2], 3 * x[2] * x[2] - 14 * x[0] * x[2]);
  };
  c.pressure = [](const Vec3& x) {
    return x[0] * (1 + x[0] + x[1]) + x[1] * (1 + x[1] + x[2]) + x[2] * (1 + x[2] + x[2] * x[2]);
  };
  c.pressure_gradient = [](const Vec3& x) {
    return Vec3(1 + 2 * x[0] + x[1], 1 + x[0] + 2 * x[1] + x[2], 1 + x[1] + 2 * x[2] + 3 * x[2] * x[2]);
  };
  c.curl_curl = [](const Vec3&) { return Vec3(-26.0, 0.0, -6.0); };
  c.forcing_divergence = [](const Vec3& x) { return 6.0 + 6.0 * x[2]; };
  return c;
}

CaseDefinition poly4_case() {
  CaseDefinition c;
  c.tag = "poly4";
  c.required_order = 4;
  c.velocity = [](const Vec3& x) {
    return Vec3(7 * x[0] * x[2] * x[2] + 6 * x[1] * x[1], -7 * x[1] * x[2] * x[2], -2 * x[0] * x[0] * x[0]);
  };
  c.pressure = [](const Vec3& p) {
    const double x = p[0], y = p[1], z = p[2];
    return x * (x * x + y * y + z * z + x * y + y * z + x * z) + y * (y * y + z * z + y * z) + z * z * z;
  };
  c.pressure_gradient = [](const Vec3& p) {
    const double x = p[0], y = p[1], z = p[2];
    return Vec3(3 * x * x + y * y + z * z + 2 * x * y + y * z + 2 * x * z,
                x * x + 2 * x * y + x * z + 3 * y * y + z * z + 2 * y * z,
                2 * x * z + x * y + x * x + 2 * y * z + y * y + 3 * z * z);
  };
  c.curl_curl = [](const Vec3& x) { return Vec3(-14 * x[0] - 12, 14 * x[1], 12 * x[0]); };
  c.forcing_divergence = [](const Vec3& x) { return 10.0 * (x[0] + x[1] + x[2]); };
  return c;
}

CaseDefinition trig_case() {
  CaseDefinition c;
  c.tag = "trig";
  c.velocity = [](const Vec3& x) {
    return Vec3(std::sin(x[1]) * std::sin(x[2]), std::sin(x[0]) * std::sin(x[2]), std::sin(x[0]) * std::sin(x[1]));
  };
  c.pressure = [](const Vec3& x) { return std::sin(x[0]) * std::sin(x[1]) * std::sin(x[2]); };
  c.pressure_gradient = [](const Vec3& x) {
    const double sx = std::sin(x[0]), sy = std::sin(x[1]), sz = std::sin(x[2]);
    return Vec3(std::cos(x[0]) * sy * sz, sx * std::cos(x[1]) * sz, sx * sy * std::cos(x[2]));
  };
  auto v = c.velocity;
  c.curl_curl = [v](const Vec3& x) { return Vec3(2.0 * v(x)); };
  auto p = c.pressure;
  c.forcing_divergence = [p](const Vec3& x) { return -3.0 * p(x); };
  return c;
}

CaseDefinition sphere_case() {
  CaseDefinition c;
  c.tag = "sphere";
  c.required_order = 2;
  const double a = kSphereRadius;
  const double w = kSphereSpeed;
  c.velocity = [a, w](const Vec3& x) {
    const double r2 = x.squaredNorm();
    const double r = std::sqrt(r2);
    const double ar = a / r;
    const double ar3 = ar * ar * ar;
    const double radial = 1.0 + 0.5 * ar3 - 1.5 * ar;
    const double polar = 1.0 - 0.25 * ar3 - 0.75 * ar;
    // v = W polar e_z + W (radial - polar) z x / r^2
    Vec3 v = (w * (radial - polar) * x[2] / r2) * x;
    v[2] += w * polar;
    return v;
  };
  // Viscosity-free potential q with laplacian v = grad q; p = nu q.
  const double k = -1.5 * w * a;
  auto grad_q = [k](const Vec3& x) {
    const double r2 = x.squaredNorm();
    const double r = std::sqrt(r2);
    const double r3 = r2 * r;
    const double r5 = r3 * r2;
    return Vec3(-3.0 * k * x[0] * x[2] / r5, -3.0 * k * x[1] * x[2] / r5, k * (1.0 / r3 - 3.0 * x[2] * x[2] / r5));
  };
  c.pressure = [k](const Vec3& x) {
    const double r = x.norm();
    return k * x[2] / (r * r * r);
  };
  c.pressure_gradient = grad_q;
  c.curl_curl = [grad_q](const Vec3& x) { return Vec3(-grad_q(x)); };
  c.forcing_divergence = [](const Vec3&) { return 0.0; };
  return c;
}

CaseDefinition zero_case() {
  CaseDefinition c;
  c.tag = "zero";
  c.velocity = [](const Vec3&) { return Vec3::Zero().eval(); };
  c.pressure = [](const Vec3&) { return 0.0; };
  c.pressure_gradient = [](const Vec3&) { return Vec3::Zero().eval(); };
  c.curl_curl = [](const Vec3&) { return Vec3::Zero().eval(); };
  c.forcing_divergence = [](const Vec3&) { return 0.0; };
  return c;
}

void finish_case(CaseDefinition& c, double nu) {
  c.nu = nu;
  auto cc = c.curl_curl;
  auto gp = c.pressure_gradient;
  if (c.tag == "sphere") {
    // Scale the pressure by nu; the forcing vanishes identically.
    auto q = c.pressure;
    c.pressure = [q, nu](const Vec3& x) { return nu * q(x); };
    c.pressure_gradient = [gp, nu](const Vec3& x) { return Vec3(nu * gp(x)); };
    c.forcing = [](const Vec3&) { return Vec3::Zero().eval(); };
  } else {
    c.forcing = [cc, gp, nu](const Vec3& x) { return Vec3(nu * cc(x) + gp(x)); };
  }
  c.boundary_velocity = c.velocity;
}

}  // namespace

std::vector<std::string> case_tags() { return {"poly2", "poly4", "trig", "sphere", "zero"}; }

CaseDefinition make_case(std::string_view tag, double nu) {
  CaseDefinition c;
  if (tag == "poly2") {
    c = poly2_case();
  } else if (tag == "poly4") {
    c = poly4_case();
  } else if (tag == "trig") {
    c = trig_case();
  } else if (tag == "sphere") {
    c = sphere_case();
  } else if (tag == "zero") {
    c = zero_case();
  } else {
    throw UnknownCase("unknown case `" + std::string(tag) + "` (expected poly2, poly4, trig, sphere or zero)");
  }
  finish_case(c, nu);
  return c;
}

MeanCorner parse_mean_corner(std::string_view name) {
  if (name == "paper") return MeanCorner::Paper;
  if (name == "standard") return MeanCorner::Standard;
  throw Error("unknown mean-constraint corner `" + std::string(name) + "` (expected paper or standard)");
}

int velocity_table_dimension(int order) { return (basis::divfree_dimension(order) + 2) / 3; }

int pressure_table_dimension(int order) { return basis::scalar_dimension(order + 1); }

NeighborTables build_tables(const PointCloud& cloud, int order, double multiplier, double dilation) {
  NeighborTables t;
  t.velocity = geometry::build_neighborhoods(cloud, velocity_table_dimension(order), multiplier, dilation);
  t.pressure = geometry::build_neighborhoods(cloud, pressure_table_dimension(order), multiplier, dilation);
  return t;
}

StencilSet build_stencils(const PointCloud& cloud, const NeighborTables& tables, int order,
                          const StencilOptions& options) {
  const auto n = cloud.size();
  std::vector<int> interior, boundary;
  for (std::size_t i = 0; i < n; ++i) (cloud.is_boundary(i) ? boundary : interior).push_back(static_cast<int>(i));
  const auto everyone = gmls::all_targets(n);
  const gmls::BatchOptions collect{false};
  const auto divfree = basis::DivFreeBasis::build(order);

  StencilSet set;
  set.order = order;
  auto cc = gmls::solve_divfree_gmls(cloud, tables.velocity, divfree, everyone, collect);
  auto [grad, lap] = gmls::solve_staggered_gmls(cloud, tables.pressure, order, interior, collect);
  auto constrained = gmls::solve_neumann_constrained(cloud, tables.pressure, order + 1, boundary, collect);

  std::vector<int> failed;
  failed.insert(failed.end(), cc.failed.begin(), cc.failed.end());
  failed.insert(failed.end(), grad.failed.begin(), grad.failed.end());
  failed.insert(failed.end(), constrained.failed.begin(), constrained.failed.end());
  if (!failed.empty()) {
    const geometry::SpatialIndex index(cloud.positions, 0.0);
    // Retries are serial; only targets near walls normally need them.
    auto retry = [&](const std::vector<int>& targets, int dimension, auto&& solve_one) {
      for (int t : targets) {
        double dilation = options.dilation;
        for (int attempt = 1;; ++attempt) {
          dilation *= options.retry_factor;
          const auto hood = geometry::build_neighborhood(cloud, index, t, dimension, options.multiplier, dilation);
          try {
            solve_one(t, hood);
            break;
          } catch (const SingularStencil&) {
            if (attempt >= options.max_retries) throw;
          }
        }
      }
    };
    retry(cc.failed, velocity_table_dimension(order), [&](int t, const geometry::Neighborhood& hood) {
      cc.rows[static_cast<std::size_t>(t)] = gmls::divfree_curl_curl_stencil(
          cloud, t, hood.ids, hood.radius, divfree, &cc.reports[static_cast<std::size_t>(t)]);
    });
    retry(grad.failed, pressure_table_dimension(order), [&](int t, const geometry::Neighborhood& hood) {
      auto rows = gmls::staggered_stencils(cloud, t, hood.ids, hood.radius, order,
                                           &grad.reports[static_cast<std::size_t>(t)]);
      grad.rows[static_cast<std::size_t>(t)] = std::move(rows.first);
      lap.rows[static_cast<std::size_t>(t)] = std::move(rows.second);
    });
    retry(constrained.failed, pressure_table_dimension(order), [&](int t, const geometry::Neighborhood& hood) {
      constrained.rows[static_cast<std::size_t>(t)] = gmls::neumann_constrained_stencil(
          cloud, t, hood.ids, hood.radius, order + 1, &constrained.reports[static_cast<std::size_t>(t)]);
    });
    std::sort(failed.begin(), failed.end());
    failed.erase(std::unique(failed.begin(), failed.end()), failed.end());
    set.retried = std::move(failed);
  }

  for (int t : boundary) lap.rows[static_cast<std::size_t>(t)] = std::move(constrained.rows[static_cast<std::size_t>(t)]);
  set.reports.reserve(n + n);
  for (const auto& r : cc.reports) set.reports.push_back(r);
  for (int t : interior) set.reports.push_back(grad.reports[static_cast<std::size_t>(t)]);
  for (int t : boundary) set.reports.push_back(constrained.reports[static_cast<std::size_t>(t)]);
  set.curl_curl = std::move(cc.rows);
  set.gradient = std::move(grad.rows);
  set.laplacian = std::move(lap.rows);
  return set;
}

// ---------------------------------------------------------------------------

namespace {

/// Neighbor positions within a row, ordered by global id.
std::vector<int> column_order(const gmls::StencilRow& row) {
  std::vector<int> order(row.neighbors.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return row.neighbors[static_cast<std::size_t>(a)] < row.neighbors[static_cast<std::size_t>(b)];
  });
  return order;
}

bool row_ready(const std::vector<gmls::StencilRow>& rows, std::size_t i, gmls::StencilOp op) {
  return i < rows.size() && !rows[i].empty() && rows[i].target == static_cast<int>(i) && rows[i].op == op;
}

std::vector<std::int64_t> prefix(const std::vector<std::int64_t>& lengths) {
  std::vector<std::int64_t> offsets(lengths.size() + 1, 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) offsets[i + 1] = offsets[i] + lengths[i];
  return offsets;
}

}  // namespace

BlockSystem assemble(const PointCloud& cloud, const StencilSet& stencils, const CaseDefinition& fields,
                     AssemblyOptions options) {
  using gmls::StencilOp;
  const auto n = cloud.size();
  const int ni = static_cast<int>(n);

  std::vector<int> missing;
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = row_ready(stencils.curl_curl, i, StencilOp::CurlCurl);
    if (cloud.is_boundary(i)) {
      ok = ok && row_ready(stencils.laplacian, i, StencilOp::ConstrainedLaplacian) &&
           stencils.laplacian[i].boundary_scalar.has_value();
    } else {
      ok = ok && row_ready(stencils.gradient, i, StencilOp::Gradient) &&
           row_ready(stencils.laplacian, i, StencilOp::Laplacian);
    }
    if (!ok) missing.push_back(static_cast<int>(i));
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "incomplete assembly: " << missing.size() << " target(s) lack stencils, first";
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 10); ++k) msg << ' ' << missing[k];
    throw IncompleteAssembly(std::move(missing), msg.str());
  }

  const double nu = fields.nu;
  BlockSystem sys;
  sys.particles = ni;
  sys.nu = nu;
  sys.corner = options.corner == MeanCorner::Paper ? static_cast<double>(n) : 0.0;
  sys.boundary.resize(n);
  for (std::size_t i = 0; i < n; ++i) sys.boundary[i] = cloud.is_boundary(i) ? 1 : 0;

  std::vector<std::int64_t> k_len(3 * n), g_len(3 * n, 0), n_len(n, 0), l_len(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ncc = static_cast<std::int64_t>(stencils.curl_curl[i].neighbors.size());
    const auto np = static_cast<std::int64_t>(stencils.laplacian[i].neighbors.size());
    l_len[i] = np;
    for (int c = 0; c < 3; ++c) {
      k_len[3 * i + static_cast<std::size_t>(c)] = cloud.is_boundary(i) ? 1 : 3 * ncc;
      if (!cloud.is_boundary(i)) {
        g_len[3 * i + static_cast<std::size_t>(c)] = static_cast<std::int64_t>(stencils.gradient[i].neighbors.size());
      }
    }
    if (cloud.is_boundary(i)) n_len[i] = 3 * ncc;
  }
  auto k_off = prefix(k_len), g_off = prefix(g_len), n_off = prefix(n_len), l_off = prefix(l_len);
  std::vector<int> k_col(static_cast<std::size_t>(k_off.back())), g_col(static_cast<std::size_t>(g_off.back())),
      n_col(static_cast<std::size_t>(n_off.back())), l_col(static_cast<std::size_t>(l_off.back()));
  std::vector<double> k_val(k_col.size()), g_val(g_col.size()), n_val(n_col.size()), l_val(l_col.size());
  sys.b.resize(3 * ni);
  sys.g.resize(ni);

  ExceptionRelay relay;
#pragma omp parallel for schedule(dynamic, 64)
  for (int i = 0; i < ni; ++i) {
    relay.run([&] {
      const auto ui = static_cast<std::size_t>(i);
      const Vec3& x = cloud.positions[ui];
      const auto& cc = stencils.curl_curl[ui];
      const auto& lap = stencils.laplacian[ui];
      const auto cc_order = column_order(cc);

      if (cloud.is_boundary(ui)) {
        const Vec3 w = fields.boundary_velocity(x);
        for (int c = 0; c < 3; ++c) {
          const auto k = static_cast<std::size_t>(k_off[3 * ui + static_cast<std::size_t>(c)]);
          k_col[k] = 3 * i + c;
          k_val[k] = 1.0;
          sys.b[3 * i + c] = w[c];
        }
        const Vec3& nrm = cloud.normals[ui];
        const double beta = *lap.boundary_scalar;
        auto k = static_cast<std::size_t>(n_off[ui]);
        for (int s : cc_order) {
          const auto blk = cc.block(static_cast<std::size_t>(s));
          const int j = cc.neighbors[static_cast<std::size_t>(s)];
          for (int d = 0; d < 3; ++d) {
            const double nd = nrm[0] * blk[static_cast<std::size_t>(d)] + nrm[1] * blk[3 + static_cast<std::size_t>(d)] +
                              nrm[2] * blk[6 + static_cast<std::size_t>(d)];
            n_col[k] = 3 * j + d;
            n_val[k] = -nu * beta * nd;
            ++k;
          }
        }
        sys.g[i] = fields.forcing_divergence(x) - beta * nrm.dot(fields.forcing(x));
      } else {
        const Vec3 f = fields.forcing(x);
        for (int c = 0; c < 3; ++c) {
          auto k = static_cast<std::size_t>(k_off[3 * ui + static_cast<std::size_t>(c)]);
          for (int s : cc_order) {
            const auto blk = cc.block(static_cast<std::size_t>(s));
            const int j = cc.neighbors[static_cast<std::size_t>(s)];
            for (int d = 0; d < 3; ++d) {
              k_col[k] = 3 * j + d;
              k_val[k] = nu * blk[static_cast<std::size_t>(3 * c + d)];
              ++k;
            }
          }
          sys.b[3 * i + c] = f[c];
        }
        const auto& grad = stencils.gradient[ui];
        const auto g_order = column_order(grad);
        for (int c = 0; c < 3; ++c) {
          auto k = static_cast<std::size_t>(g_off[3 * ui + static_cast<std::size_t>(c)]);
          for (int s : g_order) {
            g_col[k] = grad.neighbors[static_cast<std::size_t>(s)];
            g_val[k] = grad.block(static_cast<std::size_t>(s))[static_cast<std::size_t>(c)];
            ++k;
          }
        }
        sys.g[i] = fields.forcing_divergence(x);
      }
      const auto l_order = column_order(lap);
      auto k = static_cast<std::size_t>(l_off[ui]);
      for (int s : l_order) {
        l_col[k] = lap.neighbors[static_cast<std::size_t>(s)];
        l_val[k] = lap.coefficients[static_cast<std::size_t>(s)];
        ++k;
      }
    });
  }
  relay.rethrow();

  sys.K = SparseMatrix::from_csr(3 * ni, 3 * ni, std::move(k_off), std::move(k_col), std::move(k_val));
  sys.G = SparseMatrix::from_csr(3 * ni, ni, std::move(g_off), std::move(g_col), std::move(g_val));
  sys.Nblk = SparseMatrix::from_csr(ni, 3 * ni, std::move(n_off), std::move(n_col), std::move(n_val));
  sys.L = SparseMatrix::from_csr(ni, ni, std::move(l_off), std::move(l_col), std::move(l_val));
  return sys;
}

void BlockSystem::apply(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> y) const {
  const int nv = velocity_size();
  const int np = particles;
  const auto v = x.segment(0, nv);
  const auto phi = x.segment(nv, np);
  const double lambda = x[nv + np];
  auto yv = y.segment(0, nv);
  auto yp = y.segment(nv, np);
  K.multiply(v, yv);
  G.multiply_add(phi, yv);
  L.multiply(phi, yp);
  Nblk.multiply_add(v, yp);
  yp.array() += lambda;
  double sum = 0.0;
  for (int i = 0; i < np; ++i) sum += phi[i];
  y[nv + np] = sum + corner * lambda;
}

Eigen::VectorXd BlockSystem::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(size());
  apply(x, y);
  return y;
}

Eigen::VectorXd BlockSystem::rhs() const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(size());
  r.segment(0, velocity_size()) = b;
  r.segment(velocity_size(), particles) = g;
  return r;
}

SparseMatrix BlockSystem::monolithic() const {
  const int nv = velocity_size();
  const int np = particles;
  const int total = size();
  std::vector<std::int64_t> offsets(static_cast<std::size_t>(total) + 1, 0);
  std::vector<int> cols;
  std::vector<double> vals;
  cols.reserve(K.nonzeros() + G.nonzeros() + Nblk.nonzeros() + L.nonzeros() + 2 * static_cast<std::size_t>(np) + 1);
  vals.reserve(cols.capacity());
  auto append = [&](const SparseMatrix& m, int r, int shift) {
    const auto c = m.row_cols(r);
    const auto v = m.row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) {
      cols.push_back(c[k] + shift);
      vals.push_back(v[k]);
    }
  };
  for (int r = 0; r < nv; ++r) {
    append(K, r, 0);
    append(G, r, nv);
    offsets[static_cast<std::size_t>(r) + 1] = static_cast<std::int64_t>(cols.size());
  }
  for (int r = 0; r < np; ++r) {
    append(Nblk, r, 0);
    append(L, r, nv);
    cols.push_back(nv + np);
    vals.push_back(1.0);
    offsets[static_cast<std::size_t>(nv + r) + 1] = static_cast<std::int64_t>(cols.size());
  }
  for (int j = 0; j < np; ++j) {
    cols.push_back(nv + j);
    vals.push_back(1.0);
  }
  cols.push_back(nv + np);
  vals.push_back(corner);
  offsets[static_cast<std::size_t>(total)] = static_cast<std::int64_t>(cols.size());
  return SparseMatrix::from_csr(total, total, std::move(offsets), std::move(cols), std::move(vals));
}

void BlockSystem::append_row(int r, std::vector<std::pair<int, double>>& out) const {
  const int nv = velocity_size();
  const int np = particles;
  auto append = [&](const SparseMatrix& m, int row, int shift) {
    const auto c = m.row_cols(row);
    const auto v = m.row_values(row);
    for (std::size_t k = 0; k < c.size(); ++k) out.emplace_back(c[k] + shift, v[k]);
  };
  if (r < nv) {
    append(K, r, 0);
    append(G, r, nv);
  } else if (r < nv + np) {
    append(Nblk, r - nv, 0);
    append(L, r - nv, nv);
    out.emplace_back(nv + np, 1.0);
  } else {
    for (int j = 0; j < np; ++j) out.emplace_back(nv + j, 1.0);
    out.emplace_back(nv + np, corner);
  }
}

Eigen::VectorXd sample_solution(const PointCloud& cloud, const CaseDefinition& fields) {
  const int n = static_cast<int>(cloud.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4 * n + 1);
  for (int i = 0; i < n; ++i) {
    const Vec3& p = cloud.positions[static_cast<std::size_t>(i)];
    x.segment<3>(3 * i) = fields.velocity(p);
    x[3 * n + i] = fields.pressure(p);
  }
  return x;
}

void write_fields_csv(const PointCloud& cloud, const Eigen::VectorXd& solution, std::ostream& out) {
  const int n = static_cast<int>(cloud.size());
  if (solution.size() < 4 * n) throw Error("solution vector is shorter than the cloud layout");
  out << "x,y,z,vx,vy,vz,p\n";
  out.precision(17);
  for (int i = 0; i < n; ++i) {
    const Vec3& x = cloud.positions[static_cast<std::size_t>(i)];
    out << x[0] << ',' << x[1] << ',' << x[2] << ',' << solution[3 * i] << ',' << solution[3 * i + 1] << ','
        << solution[3 * i + 2] << ',' << solution[3 * n + i] << '\n';
  }
}

}  // namespace meshless::stokes
