#include "fsikit/stokes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fsikit/dual.hpp"
#include "fsikit/quadrature.hpp"
#include "fsikit/sparse.hpp"

namespace fsikit {

namespace {

constexpr int kLocV = 0;   // 12 velocity locals
constexpr int kLocP = 12;  // 3 pressure locals
constexpr int kLocal = 15;
constexpr int kQuadDegree = 6;

struct QuadCtx {
  double w;
  double phi2[6];
  Vec2d grad2[6];
  double phi1[3];
  Vec2d grad1[3];
};

/// Transformed steady Stokes residual at one quadrature point (F = I since
/// the fluid-only problem carries no ALE displacement).
template <class S>
void stokes_residual(const QuadCtx& q, double mu, const S* y, const S* u_tau, S* r) {
  Mat2<S> g = Mat2<S>::identity();
  for (int n = 0; n < 3; ++n)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) g(a, b) += u_tau[2 * n + a] * q.grad1[n][b];
  const S detg = det(g);
  const Mat2<S> ginv = inverse(g);
  const Mat2<S> git = transpose(ginv);

  Mat2<S> dv;
  S p(0.0);
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) dv(a, b) += y[kLocV + 2 * n + a] * q.grad2[n][b];
  for (int n = 0; n < 3; ++n) p += y[kLocP + n] * q.phi1[n];

  const Mat2<S> dvg = dv * ginv;
  Mat2<S> sigma = mu * (dvg + transpose(dvg));
  sigma(0, 0) -= p;
  sigma(1, 1) -= p;
  const Mat2<S> kmat = (q.w * detg) * (sigma * git);
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a)
      r[kLocV + 2 * n + a] += kmat(a, 0) * q.grad2[n][0] + kmat(a, 1) * q.grad2[n][1];

  const S divv = (q.w * detg) * trace(dvg);
  for (int n = 0; n < 3; ++n) r[kLocP + n] += divv * q.phi1[n];
}

/// Steady volume-form drag integrand (no acceleration term).
template <class S>
S stokes_drag_integrand(const QuadCtx& q, double mu, const S* y, const S* u_tau,
                        const Vec2d& psi, const Mat2<double>& dpsi) {
  Mat2<S> g = Mat2<S>::identity();
  for (int n = 0; n < 3; ++n)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) g(a, b) += u_tau[2 * n + a] * q.grad1[n][b];
  const S detg = det(g);
  const Mat2<S> ginv = inverse(g);

  Mat2<S> dv;
  S p(0.0);
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) dv(a, b) += y[kLocV + 2 * n + a] * q.grad2[n][b];
  for (int n = 0; n < 3; ++n) p += y[kLocP + n] * q.phi1[n];

  Mat2<S> dpsi_s;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) dpsi_s(a, b) = S(dpsi(a, b));

  const Mat2<S> dvg = dv * ginv;
  const Mat2<S> dpsig = dpsi_s * ginv;
  const Mat2<S> eps_v = 0.5 * (dvg + transpose(dvg));
  const Mat2<S> eps_psi = 0.5 * (dpsig + transpose(dpsig));
  S value = -p * trace(dpsig) + 2.0 * mu * ddot(eps_v, eps_psi);
  (void)psi;
  return (q.w) * detg * value;
}

}  // namespace

StokesSystem::~StokesSystem() = default;

StokesSystem::StokesSystem(const Mesh& mesh, double mu, double vbar)
    : mesh_(&mesh), mu_(mu), vbar_(vbar) {
  v_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P2, 2));
  p_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P1, 1));
  s2_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P2, 1));
  off_p_ = 2 * v_space_->n_nodes();
  n_total_ = off_p_ + p_space_->n_nodes();
  for (const auto& v : mesh.vertices) height_ = std::max(height_, v.y);

  std::map<int, double> bc;  // dof -> value
  const FacetTag noslip[] = {FacetTag::GammaFD0, FacetTag::GammaFDc, FacetTag::GammaSDc,
                             FacetTag::GammaI};
  for (int node : nodes_on_tags(*s2_space_, noslip)) {
    bc[v_dof(node, 0)] = 0.0;
    bc[v_dof(node, 1)] = 0.0;
  }
  const FacetTag in[] = {FacetTag::GammaFDi};
  for (int node : nodes_on_tags(*s2_space_, in)) {
    const Vec2d p = s2_space_->node_point(node);
    bc.try_emplace(v_dof(node, 0),
                   6.0 * vbar_ * p.y * (height_ - p.y) / (height_ * height_));
    bc.try_emplace(v_dof(node, 1), 0.0);
  }
  for (const auto& [dof, val] : bc) {
    bc_dofs_.push_back(dof);
    bc_values_.push_back(val);
  }
  build_drag_field();
}

void StokesSystem::build_drag_field() {
  // same construction as the unsteady system: unit horizontal trace on the
  // obstacle, one-cell-layer harmonic extension, zero beyond
  const Mesh& mesh = *mesh_;
  psi_ = FEField(*s2_space_);
  std::vector<FacetTag> wetted;
  for (FacetTag t : {FacetTag::GammaFDc, FacetTag::GammaI})
    if (mesh.has_tag(t)) wetted.push_back(t);
  if (wetted.empty()) return;
  std::set<int> on_obstacle;
  for (int n : nodes_on_tags(*s2_space_, wetted)) on_obstacle.insert(n);
  const FacetTag all_tags[] = {FacetTag::GammaFDi, FacetTag::GammaFD0, FacetTag::GammaFN,
                               FacetTag::GammaFDc, FacetTag::GammaSDc, FacetTag::GammaI};
  std::set<int> on_boundary;
  for (int n : nodes_on_tags(*s2_space_, all_tags)) on_boundary.insert(n);

  std::vector<char> layer(mesh.n_cells(), 0);
  int nodes[6];
  for (int c = 0; c < mesh.n_cells(); ++c) {
    s2_space_->cell_nodes(c, nodes);
    for (int i = 0; i < 6; ++i)
      if (on_obstacle.count(nodes[i])) layer[c] = 1;
  }
  std::vector<char> in_layer(s2_space_->n_nodes(), 0), outside(s2_space_->n_nodes(), 0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    s2_space_->cell_nodes(c, nodes);
    for (int i = 0; i < 6; ++i) (layer[c] ? in_layer : outside)[nodes[i]] = 1;
  }
  std::map<int, int> free_index;
  std::vector<int> free_nodes;
  for (int n = 0; n < s2_space_->n_nodes(); ++n)
    if (in_layer[n] && !outside[n] && !on_obstacle.count(n) && !on_boundary.count(n)) {
      free_index[n] = static_cast<int>(free_nodes.size());
      free_nodes.push_back(n);
    }
  for (int n : on_obstacle) psi_.coeffs[n] = 1.0;
  if (free_nodes.empty()) return;

  std::vector<Triplet> trip;
  std::vector<double> rhs(free_nodes.size(), 0.0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    if (!layer[c]) continue;
    s2_space_->cell_nodes(c, nodes);
    for (const auto& qp : tri_quadrature(4)) {
      const CellBasis b = eval_cell_basis(*s2_space_, c, qp.xi, qp.eta);
      const double w = qp.w * b.jac_det;
      for (int i = 0; i < 6; ++i) {
        auto it = free_index.find(nodes[i]);
        if (it == free_index.end()) continue;
        for (int j = 0; j < 6; ++j) {
          const double k = w * dot(b.grad[i], b.grad[j]);
          auto jt = free_index.find(nodes[j]);
          if (jt != free_index.end())
            trip.push_back({it->second, jt->second, k});
          else
            rhs[it->second] -= k * psi_.coeffs[nodes[j]];
        }
      }
    }
  }
  const CsrMatrix a = CsrMatrix::from_triplets(static_cast<int>(free_nodes.size()),
                                               static_cast<int>(free_nodes.size()),
                                               std::move(trip));
  const auto sol = solve_sparse(a, rhs);
  for (size_t i = 0; i < free_nodes.size(); ++i) psi_.coeffs[free_nodes[i]] = sol[i];
}

namespace {

struct CellScratch {
  int nodes2[6];
  int nodes1[3];
  int dofs[kLocal];
  int tau_dofs[6];
};

template <class Sys>
void fill_scratch(const Sys& sys, const Mesh& mesh, int cell, CellScratch& s) {
  sys.velocity_space().cell_nodes(cell, s.nodes2);
  sys.pressure_space().cell_nodes(cell, s.nodes1);
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a) s.dofs[kLocV + 2 * n + a] = sys.v_dof(s.nodes2[n], a);
  for (int n = 0; n < 3; ++n) s.dofs[kLocP + n] = sys.p_dof(s.nodes1[n]);
  for (int n = 0; n < 3; ++n) {
    s.tau_dofs[2 * n] = 2 * mesh.cells[cell][n];
    s.tau_dofs[2 * n + 1] = 2 * mesh.cells[cell][n] + 1;
  }
}

QuadCtx make_qctx(const Space& vs, const Space& ps, int cell, const TriQuadPoint& qp) {
  QuadCtx q;
  const CellBasis b2 = eval_cell_basis(vs, cell, qp.xi, qp.eta);
  const CellBasis b1 = eval_cell_basis(ps, cell, qp.xi, qp.eta);
  q.w = qp.w * b2.jac_det;
  for (int n = 0; n < 6; ++n) {
    q.phi2[n] = b2.phi[n];
    q.grad2[n] = b2.grad[n];
  }
  for (int n = 0; n < 3; ++n) {
    q.phi1[n] = b1.phi[n];
    q.grad1[n] = b1.grad[n];
  }
  return q;
}

}  // namespace

std::vector<double> StokesSystem::residual(std::span<const double> y,
                                           const Transformation& tau) const {
  std::vector<double> r(n_total_, 0.0);
  CellScratch s;
  const auto quad = tri_quadrature(kQuadDegree);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    fill_scratch(*this, *mesh_, cell, s);
    double yl[kLocal], ut[6], rl[kLocal] = {};
    for (int a = 0; a < kLocal; ++a) yl[a] = y[s.dofs[a]];
    for (int a = 0; a < 6; ++a) ut[a] = tau.u_tau.coeffs[s.tau_dofs[a]];
    for (const auto& qp : quad)
      stokes_residual(make_qctx(*v_space_, *p_space_, cell, qp), mu_, yl, ut, rl);
    for (int a = 0; a < kLocal; ++a) r[s.dofs[a]] += rl[a];
  }
  for (int dof : bc_dofs_) r[dof] = 0.0;
  return r;
}

std::vector<double> StokesSystem::solve(const Transformation& tau) const {
  // linear in (v, p): assemble the operator once and solve
  std::vector<Triplet> sym;
  CellScratch s;
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    fill_scratch(*this, *mesh_, cell, s);
    for (int a = 0; a < kLocal; ++a)
      for (int b = 0; b < kLocal; ++b) sym.push_back({s.dofs[a], s.dofs[b], 0.0});
  }
  CsrAssembler assembler(
      CsrMatrix::from_triplets(n_total_, n_total_, std::move(sym)).with_diagonal());

  using D = Dual<kLocal>;
  const auto quad = tri_quadrature(kQuadDegree);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    fill_scratch(*this, *mesh_, cell, s);
    D yl[kLocal], ut[6], rl[kLocal];
    for (int a = 0; a < kLocal; ++a) yl[a] = D::seeded(0.0, a);
    for (int a = 0; a < 6; ++a) ut[a] = D(tau.u_tau.coeffs[s.tau_dofs[a]]);
    for (int a = 0; a < kLocal; ++a) rl[a] = D(0.0);
    for (const auto& qp : quad)
      stokes_residual(make_qctx(*v_space_, *p_space_, cell, qp), mu_, yl, ut, rl);
    for (int a = 0; a < kLocal; ++a)
      for (int b = 0; b < kLocal; ++b)
        if (rl[a].d[b] != 0.0) assembler.add(s.dofs[a], s.dofs[b], rl[a].d[b]);
  }

  CsrMatrix a = assembler.matrix();
  std::vector<double> rhs(n_total_, 0.0);
  a.eliminate_dirichlet(bc_dofs_, bc_values_, rhs);
  return solve_sparse(a, rhs);
}

double StokesSystem::drag_volume(std::span<const double> y, const Transformation& tau) const {
  double value = 0.0;
  CellScratch s;
  const auto quad = tri_quadrature(kQuadDegree);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    fill_scratch(*this, *mesh_, cell, s);
    double yl[kLocal], ut[6];
    for (int a = 0; a < kLocal; ++a) yl[a] = y[s.dofs[a]];
    for (int a = 0; a < 6; ++a) ut[a] = tau.u_tau.coeffs[s.tau_dofs[a]];
    for (const auto& qp : quad) {
      const QuadCtx q = make_qctx(*v_space_, *p_space_, cell, qp);
      Vec2d psi{0, 0};
      Mat2<double> dpsi;
      for (int n = 0; n < 6; ++n) {
        const double sv = psi_.coeffs[s.nodes2[n]];
        psi.x += sv * q.phi2[n];
        dpsi(0, 0) += sv * q.grad2[n][0];
        dpsi(0, 1) += sv * q.grad2[n][1];
      }
      value += stokes_drag_integrand(q, mu_, yl, ut, psi, dpsi);
    }
  }
  return value;
}

double StokesSystem::drag_surface(std::span<const double> y) const {
  // traction integral over the obstacle rim in the reference configuration
  double value = 0.0;
  const Mesh& mesh = *mesh_;
  const auto quad = seg_quadrature(4);
  for (int fi = 0; fi < static_cast<int>(mesh.facets.size()); ++fi) {
    const auto& f = mesh.facets[fi];
    if (f.tag != FacetTag::GammaFDc && f.tag != FacetTag::GammaI) continue;
    const int edge = mesh.facet_edge[fi];
    int cell = mesh.edge_cells[edge][0];
    if (mesh.edge_cells[edge][1] >= 0 &&
        mesh.cell_subdomain[mesh.edge_cells[edge][1]] == Subdomain::Fluid &&
        mesh.cell_subdomain[cell] != Subdomain::Fluid)
      cell = mesh.edge_cells[edge][1];
    const Vec2d n = mesh.facet_normal(fi);
    const auto& t = mesh.cells[cell];
    // local barycentric parameterization of the facet within the cell
    int ia = -1, ib = -1;
    for (int i = 0; i < 3; ++i) {
      if (t[i] == f.v0) ia = i;
      if (t[i] == f.v1) ib = i;
    }
    const Vec2d pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const double len = norm(pb - pa);
    int nodes2[6], nodes1[3];
    v_space_->cell_nodes(cell, nodes2);
    p_space_->cell_nodes(cell, nodes1);
    for (const auto& qp : quad) {
      double lam[3] = {0, 0, 0};
      lam[ia] = 1.0 - qp.t;
      lam[ib] = qp.t;
      const CellBasis b2 = eval_cell_basis(*v_space_, cell, lam[1], lam[2]);
      const CellBasis b1 = eval_cell_basis(*p_space_, cell, lam[1], lam[2]);
      Mat2<double> dv;
      double p = 0.0;
      for (int nn = 0; nn < 6; ++nn)
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb)
            dv(a, bb) += y[v_dof(nodes2[nn], a)] * b2.grad[nn][bb];
      for (int nn = 0; nn < 3; ++nn) p += y[p_dof(nodes1[nn])] * b1.phi[nn];
      Mat2<double> sigma = mu_ * (dv + transpose(dv));
      sigma(0, 0) -= p;
      sigma(1, 1) -= p;
      const Vec2d traction = sigma * n;
      value += qp.w * len * traction.x;  // psi = (1, 0) on the obstacle
    }
  }
  return value;
}

std::vector<double> StokesSystem::drag_shape_gradient(std::span<const double> y,
                                                      const Transformation& tau) const {
  // adjoint: A^T lambda = -dJ/dy, then dJ/du + lambda^T dR/du
  const auto quad = tri_quadrature(kQuadDegree);
  CellScratch s;

  std::vector<double> djdy(n_total_, 0.0);
  std::vector<double> grad_u(2 * mesh_->n_vertices(), 0.0);
  {
    using D = Dual<kLocal>;
    for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
      fill_scratch(*this, *mesh_, cell, s);
      D yl[kLocal], ut[6];
      for (int a = 0; a < kLocal; ++a) yl[a] = D::seeded(y[s.dofs[a]], a);
      for (int a = 0; a < 6; ++a) ut[a] = D(tau.u_tau.coeffs[s.tau_dofs[a]]);
      D value(0.0);
      for (const auto& qp : quad) {
        const QuadCtx q = make_qctx(*v_space_, *p_space_, cell, qp);
        Vec2d psi{0, 0};
        Mat2<double> dpsi;
        for (int n = 0; n < 6; ++n) {
          const double sv = psi_.coeffs[s.nodes2[n]];
          psi.x += sv * q.phi2[n];
          dpsi(0, 0) += sv * q.grad2[n][0];
          dpsi(0, 1) += sv * q.grad2[n][1];
        }
        value += stokes_drag_integrand(q, mu_, yl, ut, psi, dpsi);
      }
      for (int a = 0; a < kLocal; ++a) djdy[s.dofs[a]] += value.d[a];
    }
  }
  {
    using D = Dual<6>;
    for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
      fill_scratch(*this, *mesh_, cell, s);
      D yl[kLocal], ut[6];
      for (int a = 0; a < kLocal; ++a) yl[a] = D(y[s.dofs[a]]);
      for (int a = 0; a < 6; ++a) ut[a] = D::seeded(tau.u_tau.coeffs[s.tau_dofs[a]], a);
      D value(0.0);
      for (const auto& qp : quad) {
        const QuadCtx q = make_qctx(*v_space_, *p_space_, cell, qp);
        Vec2d psi{0, 0};
        Mat2<double> dpsi;
        for (int n = 0; n < 6; ++n) {
          const double sv = psi_.coeffs[s.nodes2[n]];
          psi.x += sv * q.phi2[n];
          dpsi(0, 0) += sv * q.grad2[n][0];
          dpsi(0, 1) += sv * q.grad2[n][1];
        }
        value += stokes_drag_integrand(q, mu_, yl, ut, psi, dpsi);
      }
      for (int a = 0; a < 6; ++a) grad_u[s.tau_dofs[a]] += value.d[a];
    }
  }

  // operator (state Jacobian) for the transpose solve
  std::vector<Triplet> sym;
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    fill_scratch(*this, *mesh_, cell, s);
    for (int a = 0; a < kLocal; ++a)
      for (int b = 0; b < kLocal; ++b) sym.push_back({s.dofs[a], s.dofs[b], 0.0});
  }
  CsrAssembler assembler(
      CsrMatrix::from_triplets(n_total_, n_total_, std::move(sym)).with_diagonal());
  {
    using D = Dual<kLocal>;
    for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
      fill_scratch(*this, *mesh_, cell, s);
      D yl[kLocal], ut[6], rl[kLocal];
      for (int a = 0; a < kLocal; ++a) yl[a] = D::seeded(y[s.dofs[a]], a);
      for (int a = 0; a < 6; ++a) ut[a] = D(tau.u_tau.coeffs[s.tau_dofs[a]]);
      for (int a = 0; a < kLocal; ++a) rl[a] = D(0.0);
      for (const auto& qp : quad)
        stokes_residual(make_qctx(*v_space_, *p_space_, cell, qp), mu_, yl, ut, rl);
      for (int a = 0; a < kLocal; ++a)
        for (int b = 0; b < kLocal; ++b)
          if (rl[a].d[b] != 0.0) assembler.add(s.dofs[a], s.dofs[b], rl[a].d[b]);
    }
  }
  CsrMatrix a = assembler.matrix();
  std::vector<double> dummy(n_total_, 0.0);
  const std::vector<double> zeros(bc_dofs_.size(), 0.0);
  a.eliminate_dirichlet(bc_dofs_, zeros, dummy);

  std::vector<double> rhs(n_total_);
  for (int i = 0; i < n_total_; ++i) rhs[i] = -djdy[i];
  for (int dof : bc_dofs_) rhs[dof] = 0.0;
  LuSolver lu;
  lu.factorize(a);
  const std::vector<double> lambda = lu.solve_transpose(rhs);

  // accumulate lambda^T dR/du via the tau-seeded kernel
  {
    using D = Dual<6>;
    for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
      fill_scratch(*this, *mesh_, cell, s);
      bool any = false;
      for (int a = 0; a < kLocal; ++a)
        if (lambda[s.dofs[a]] != 0.0) any = true;
      if (!any) continue;
      D yl[kLocal], ut[6], rl[kLocal];
      for (int a = 0; a < kLocal; ++a) yl[a] = D(y[s.dofs[a]]);
      for (int a = 0; a < 6; ++a) ut[a] = D::seeded(tau.u_tau.coeffs[s.tau_dofs[a]], a);
      for (int a = 0; a < kLocal; ++a) rl[a] = D(0.0);
      for (const auto& qp : quad)
        stokes_residual(make_qctx(*v_space_, *p_space_, cell, qp), mu_, yl, ut, rl);
      for (int a = 0; a < kLocal; ++a) {
        const double lam = lambda[s.dofs[a]];
        if (lam == 0.0) continue;
        for (int b = 0; b < 6; ++b) grad_u[s.tau_dofs[b]] += lam * rl[a].d[b];
      }
    }
  }
  return grad_u;
}

}  // namespace fsikit
