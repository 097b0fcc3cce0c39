#include "fsikit/fem.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace fsikit {

Space Space::volume(const Mesh& mesh, Family family, int components) {
  if (components != 1 && components != 2)
    throw std::invalid_argument("components must be 1 or 2");
  Space s;
  s.mesh_ = &mesh;
  s.family_ = family;
  s.components_ = components;
  s.n_nodes_ = family == Family::P1 ? mesh.n_vertices() : mesh.n_vertices() + mesh.n_edges();
  return s;
}

Space Space::curve(const CurveMesh& curve, Family family, int components) {
  if (components != 1 && components != 2)
    throw std::invalid_argument("components must be 1 or 2");
  Space s;
  s.mesh_ = curve.parent;
  s.curve_ = &curve;
  s.family_ = family;
  s.components_ = components;
  s.n_nodes_ = family == Family::P1 ? curve.n_vertices()
                                    : curve.n_vertices() + curve.n_segments();
  return s;
}

Space build_space(const Mesh& mesh, Family family, int components) {
  return Space::volume(mesh, family, components);
}

CurveSpace build_space(const Mesh& mesh, Family family, int components, FacetTag curve_tag) {
  auto curve = std::make_shared<CurveMesh>(extract_curve(mesh, curve_tag));
  Space s = Space::curve(*curve, family, components);
  return {std::move(curve), s};
}

void Space::cell_nodes(int cell, int out[6]) const {
  const auto& t = mesh_->cells[cell];
  out[0] = t[0];
  out[1] = t[1];
  out[2] = t[2];
  if (family_ == Family::P2) {
    const auto& ce = mesh_->cell_edges[cell];
    out[3] = mesh_->n_vertices() + ce[0];
    out[4] = mesh_->n_vertices() + ce[1];
    out[5] = mesh_->n_vertices() + ce[2];
  }
}

void Space::segment_nodes(int segment, int out[3]) const {
  const auto [a, b] = curve_->segment_vertices(segment);
  out[0] = a;
  out[1] = b;
  if (family_ == Family::P2) out[2] = curve_->n_vertices() + segment;
}

Vec2d Space::node_point(int node) const {
  if (curve_) {
    const int nv = curve_->n_vertices();
    if (node < nv) return mesh_->vertices[curve_->chain_vertices[node]];
    const auto [a, b] = curve_->segment_vertices(node - nv);
    return 0.5 * (mesh_->vertices[curve_->chain_vertices[a]] +
                  mesh_->vertices[curve_->chain_vertices[b]]);
  }
  if (node < mesh_->n_vertices()) return mesh_->vertices[node];
  const auto& e = mesh_->edges[node - mesh_->n_vertices()];
  return 0.5 * (mesh_->vertices[e[0]] + mesh_->vertices[e[1]]);
}

CellBasis eval_cell_basis(const Space& space, int cell, double xi, double eta) {
  const Mesh& mesh = space.mesh();
  const auto& t = mesh.cells[cell];
  const Vec2d p0 = mesh.vertices[t[0]], p1 = mesh.vertices[t[1]], p2 = mesh.vertices[t[2]];

  CellBasis b;
  b.point = {p0.x + (p1.x - p0.x) * xi + (p2.x - p0.x) * eta,
             p0.y + (p1.y - p0.y) * xi + (p2.y - p0.y) * eta};
  b.jac_det = cross(p1 - p0, p2 - p0);

  const double lam[3] = {1.0 - xi - eta, xi, eta};
  // reference gradients of the barycentric coordinates
  const Vec2d glam_ref[3] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};
  // J^{-T} columns for the affine map
  const double inv_det = 1.0 / b.jac_det;
  const Vec2d jinv_row0{(p2.y - p0.y) * inv_det, -(p1.y - p0.y) * inv_det};
  const Vec2d jinv_row1{-(p2.x - p0.x) * inv_det, (p1.x - p0.x) * inv_det};
  auto to_phys = [&](Vec2d g) {
    return Vec2d{jinv_row0.x * g.x + jinv_row0.y * g.y, jinv_row1.x * g.x + jinv_row1.y * g.y};
  };

  if (space.family() == Family::P1) {
    b.n = 3;
    for (int i = 0; i < 3; ++i) {
      b.phi[i] = lam[i];
      b.grad[i] = to_phys(glam_ref[i]);
    }
  } else {
    b.n = 6;
    for (int i = 0; i < 3; ++i) {
      b.phi[i] = lam[i] * (2.0 * lam[i] - 1.0);
      b.grad[i] = to_phys((4.0 * lam[i] - 1.0) * glam_ref[i]);
    }
    for (int i = 0; i < 3; ++i) {
      const int a = (i + 1) % 3, c = (i + 2) % 3;
      b.phi[3 + i] = 4.0 * lam[a] * lam[c];
      b.grad[3 + i] = to_phys(4.0 * lam[c] * glam_ref[a] + 4.0 * lam[a] * glam_ref[c]);
    }
  }
  return b;
}

SegmentBasis eval_segment_basis(const Space& space, int segment, double t) {
  const CurveMesh& curve = *space.curve_mesh();
  const auto [ia, ib] = curve.segment_vertices(segment);
  const Vec2d pa = curve.parent->vertices[curve.chain_vertices[ia]];
  const Vec2d pb = curve.parent->vertices[curve.chain_vertices[ib]];

  SegmentBasis b;
  b.length = norm(pb - pa);
  b.point = {pa.x + (pb.x - pa.x) * t, pa.y + (pb.y - pa.y) * t};
  const double inv_len = 1.0 / b.length;
  if (space.family() == Family::P1) {
    b.n = 2;
    b.phi[0] = 1.0 - t;
    b.phi[1] = t;
    b.dphi_ds[0] = -inv_len;
    b.dphi_ds[1] = inv_len;
  } else {
    b.n = 3;
    b.phi[0] = (1.0 - t) * (1.0 - 2.0 * t);
    b.phi[1] = t * (2.0 * t - 1.0);
    b.phi[2] = 4.0 * t * (1.0 - t);
    b.dphi_ds[0] = (4.0 * t - 3.0) * inv_len;
    b.dphi_ds[1] = (4.0 * t - 1.0) * inv_len;
    b.dphi_ds[2] = (4.0 - 8.0 * t) * inv_len;
  }
  return b;
}

std::vector<double> DirichletBC::values_at(double t) const {
  std::vector<double> v(dofs.size(), 0.0);
  if (profile)
    for (size_t i = 0; i < dofs.size(); ++i) v[i] = profile(points[i], comps[i], t);
  return v;
}

std::vector<int> nodes_on_tags(const Space& space, std::span<const FacetTag> tags) {
  const Mesh& mesh = space.mesh();
  std::set<int> nodes;
  for (int fi = 0; fi < static_cast<int>(mesh.facets.size()); ++fi) {
    const auto& f = mesh.facets[fi];
    if (std::find(tags.begin(), tags.end(), f.tag) == tags.end()) continue;
    nodes.insert(f.v0);
    nodes.insert(f.v1);
    if (space.family() == Family::P2) nodes.insert(mesh.n_vertices() + mesh.facet_edge[fi]);
  }
  return {nodes.begin(), nodes.end()};
}

DirichletBC make_dirichlet(const Space& space, std::span<const FacetTag> tags,
                           std::function<double(Vec2d, int, double)> profile) {
  DirichletBC bc;
  bc.space = &space;
  bc.profile = std::move(profile);
  for (int node : nodes_on_tags(space, tags))
    for (int c = 0; c < space.components(); ++c) {
      bc.dofs.push_back(space.dof(node, c));
      bc.points.push_back(space.node_point(node));
      bc.comps.push_back(c);
    }
  // keep dof order sorted for deterministic elimination
  std::vector<size_t> order(bc.dofs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return bc.dofs[a] < bc.dofs[b]; });
  DirichletBC sorted;
  sorted.space = bc.space;
  sorted.profile = bc.profile;
  for (size_t i : order) {
    sorted.dofs.push_back(bc.dofs[i]);
    sorted.points.push_back(bc.points[i]);
    sorted.comps.push_back(bc.comps[i]);
  }
  return sorted;
}

void apply_dirichlet(CsrMatrix& a, std::span<double> b, const DirichletBC& bc, double t) {
  const auto vals = bc.values_at(t);
  a.eliminate_dirichlet(bc.dofs, vals, b);
}

namespace {

int form_quad_default(FormKind kind) {
  switch (kind) {
    case FormKind::CurveMass:
    case FormKind::CurveStiffness:
      return 3;
    default:
      return 4;
  }
}

}  // namespace

CsrMatrix assemble_form(FormKind kind, const Space& row, const Space& col,
                        std::span<const FEField* const> coeffs, int quad_degree,
                        CellFilter filter) {
  if (quad_degree <= 0) quad_degree = form_quad_default(kind);
  std::vector<Triplet> trip;

  if (kind == FormKind::CurveMass || kind == FormKind::CurveStiffness) {
    if (!row.is_curve() || !col.is_curve())
      throw std::invalid_argument("curve form requires curve spaces");
    const auto quad = seg_quadrature(quad_degree);
    const int nc = row.components();
    int rn[3], cn[3];
    for (int s = 0; s < row.curve_mesh()->n_segments(); ++s) {
      row.segment_nodes(s, rn);
      col.segment_nodes(s, cn);
      for (const auto& qp : quad) {
        const SegmentBasis rb = eval_segment_basis(row, s, qp.t);
        const SegmentBasis cb = eval_segment_basis(col, s, qp.t);
        double coef = 1.0;
        if (!coeffs.empty()) {
          // scalar P1/P2 coefficient on the same curve
          const Space& cs = *coeffs[0]->space;
          const SegmentBasis sb = eval_segment_basis(cs, s, qp.t);
          int sn[3];
          cs.segment_nodes(s, sn);
          coef = 0.0;
          for (int i = 0; i < sb.n; ++i) coef += coeffs[0]->coeffs[sn[i]] * sb.phi[i];
        }
        const double w = qp.w * rb.length * coef;
        for (int i = 0; i < rb.n; ++i)
          for (int j = 0; j < cb.n; ++j) {
            const double v = kind == FormKind::CurveMass
                                 ? w * rb.phi[i] * cb.phi[j]
                                 : w * rb.dphi_ds[i] * cb.dphi_ds[j];
            for (int c = 0; c < nc; ++c)
              trip.push_back({row.dof(rn[i], c), col.dof(cn[j], c), v});
          }
      }
    }
    return CsrMatrix::from_triplets(row.n_dofs(), col.n_dofs(), std::move(trip));
  }

  const Mesh& mesh = row.mesh();
  const auto quad = tri_quadrature(quad_degree);
  int rn[6], cn[6];
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    if (!cell_matches(mesh, cell, filter)) continue;
    row.cell_nodes(cell, rn);
    col.cell_nodes(cell, cn);
    for (const auto& qp : quad) {
      const CellBasis rb = eval_cell_basis(row, cell, qp.xi, qp.eta);
      const CellBasis cb = eval_cell_basis(col, cell, qp.xi, qp.eta);
      const double w = qp.w * rb.jac_det;
      switch (kind) {
        case FormKind::Mass:
          for (int i = 0; i < rb.n; ++i)
            for (int j = 0; j < cb.n; ++j) {
              const double v = w * rb.phi[i] * cb.phi[j];
              for (int c = 0; c < row.components(); ++c)
                trip.push_back({row.dof(rn[i], c), col.dof(cn[j], c), v});
            }
          break;
        case FormKind::Stiffness:
          for (int i = 0; i < rb.n; ++i)
            for (int j = 0; j < cb.n; ++j) {
              const double v = w * dot(rb.grad[i], cb.grad[j]);
              for (int c = 0; c < row.components(); ++c)
                trip.push_back({row.dof(rn[i], c), col.dof(cn[j], c), v});
            }
          break;
        case FormKind::Elasticity: {
          if (row.components() != 2 || col.components() != 2)
            throw std::invalid_argument("elasticity form requires vector spaces");
          // (Du + Du^T) : Dv with v = phi_i e_a, u = phi_j e_b
          for (int i = 0; i < rb.n; ++i)
            for (int j = 0; j < cb.n; ++j)
              for (int a = 0; a < 2; ++a)
                for (int bcmp = 0; bcmp < 2; ++bcmp) {
                  double v = rb.grad[i][bcmp] * cb.grad[j][a];
                  if (a == bcmp) v += dot(rb.grad[i], cb.grad[j]);
                  trip.push_back({row.dof(rn[i], a), col.dof(cn[j], bcmp), w * v});
                }
          break;
        }
        case FormKind::Divergence:
          if (row.components() != 1 || col.components() != 2)
            throw std::invalid_argument("divergence form requires scalar x vector spaces");
          for (int i = 0; i < rb.n; ++i)
            for (int j = 0; j < cb.n; ++j)
              for (int bcmp = 0; bcmp < 2; ++bcmp)
                trip.push_back(
                    {row.dof(rn[i], 0), col.dof(cn[j], bcmp), w * rb.phi[i] * cb.grad[j][bcmp]});
          break;
        case FormKind::DivDiv:
          if (row.components() != 2 || col.components() != 2)
            throw std::invalid_argument("div-div form requires vector spaces");
          for (int i = 0; i < rb.n; ++i)
            for (int j = 0; j < cb.n; ++j)
              for (int a = 0; a < 2; ++a)
                for (int bcmp = 0; bcmp < 2; ++bcmp)
                  trip.push_back(
                      {row.dof(rn[i], a), col.dof(cn[j], bcmp), w * rb.grad[i][a] * cb.grad[j][bcmp]});
          break;
        default:
          throw std::invalid_argument("unknown volume form");
      }
    }
  }
  return CsrMatrix::from_triplets(row.n_dofs(), col.n_dofs(), std::move(trip));
}

std::vector<double> assemble_load(const Space& space,
                                  const std::function<double(Vec2d, int)>& f, int quad_degree,
                                  CellFilter filter) {
  std::vector<double> b(space.n_dofs(), 0.0);
  const Mesh& mesh = space.mesh();
  const auto quad = tri_quadrature(quad_degree);
  int nodes[6];
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    if (!cell_matches(mesh, cell, filter)) continue;
    space.cell_nodes(cell, nodes);
    for (const auto& qp : quad) {
      const CellBasis cb = eval_cell_basis(space, cell, qp.xi, qp.eta);
      const double w = qp.w * cb.jac_det;
      for (int c = 0; c < space.components(); ++c) {
        const double fv = f(cb.point, c);
        for (int i = 0; i < cb.n; ++i) b[space.dof(nodes[i], c)] += w * fv * cb.phi[i];
      }
    }
  }
  return b;
}

CsrMatrix assemble_trace_mass(const Space& volume_space, const Space& curve_space,
                              int quad_degree) {
  if (volume_space.is_curve() || !curve_space.is_curve())
    throw std::invalid_argument("trace mass couples a volume space with a curve space");
  if (volume_space.components() != curve_space.components())
    throw std::invalid_argument("component mismatch in trace mass");
  const CurveMesh& curve = *curve_space.curve_mesh();
  const Mesh& mesh = volume_space.mesh();
  const auto quad = seg_quadrature(quad_degree);
  std::vector<Triplet> trip;
  int cn[3];
  for (int s = 0; s < curve.n_segments(); ++s) {
    curve_space.segment_nodes(s, cn);
    const int facet = curve.curve_edges[s];
    const auto [ia, ib] = curve.segment_vertices(s);
    const int va = curve.chain_vertices[ia], vb = curve.chain_vertices[ib];
    // volume nodes with support on this facet
    int vn[3] = {va, vb, -1};
    int n_vn = 2;
    if (volume_space.family() == Family::P2)
      vn[n_vn++] = mesh.n_vertices() + mesh.facet_edge[facet];
    for (const auto& qp : quad) {
      const SegmentBasis cb = eval_segment_basis(curve_space, s, qp.t);
      // trace of the volume basis on the segment equals the 1D basis of the
      // same family parameterized from va to vb
      double vphi[3];
      if (volume_space.family() == Family::P1) {
        vphi[0] = 1.0 - qp.t;
        vphi[1] = qp.t;
      } else {
        vphi[0] = (1.0 - qp.t) * (1.0 - 2.0 * qp.t);
        vphi[1] = qp.t * (2.0 * qp.t - 1.0);
        vphi[2] = 4.0 * qp.t * (1.0 - qp.t);
      }
      const double w = qp.w * cb.length;
      for (int i = 0; i < n_vn; ++i)
        for (int j = 0; j < cb.n; ++j)
          for (int c = 0; c < volume_space.components(); ++c)
            trip.push_back({volume_space.dof(vn[i], c), curve_space.dof(cn[j], c),
                            w * vphi[i] * cb.phi[j]});
    }
  }
  return CsrMatrix::from_triplets(volume_space.n_dofs(), curve_space.n_dofs(), std::move(trip));
}

}  // namespace fsikit
