#include "fsikit/fsi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fsi_kernel.hpp"
#include "fsikit/quadrature.hpp"

namespace fsikit {

double inflow_profile(double vbar, double height, double y, double t) {
  const double parabola = y * (height - y) / (height * height);
  if (t < 2.0) return 3.0 * vbar * parabola * (1.0 - std::cos(M_PI * t / 2.0));
  return 6.0 * vbar * parabola;
}

namespace {

struct GroupWeights {
  double wT = 1.0, wE = 1.0, wP = 1.0, wI = 1.0, wE_prev = 0.0;
};

// quadrature for the transformed forms (rational in det(D tau))
constexpr int kFsiQuadDegree = 6;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

struct FsiSystem::AssemblyCache {
  // per cell: global dofs of the 39 local slots, u_tau scatter dofs
  std::vector<std::array<int, kernel::kLocal>> cell_dofs;
  std::vector<std::array<int, 6>> tau_dofs;
  // per cell and quadrature point: basis data
  std::vector<kernel::QuadCtx> qctx;  // n_cells * nq
  int nq = 0;
  CsrMatrix jac_pattern;
  mutable int probe_cell = -1;
};

FsiSystem::~FsiSystem() = default;

FsiSystem::FsiSystem(const Mesh& mesh, PhysicalParams phys, CouplingParams coupling)
    : mesh_(&mesh), phys_(std::move(phys)), coupling_(coupling) {
  v_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P2, 2));
  p_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P1, 1));
  s2_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P2, 1));
  const int n2 = v_space_->n_nodes();
  const int n1 = p_space_->n_nodes();
  off_p_ = 2 * n2;
  off_w_ = off_p_ + n1;
  off_z_ = off_w_ + 2 * n2;
  n_total_ = off_z_ + 2 * n2;

  for (const auto& v : mesh.vertices) channel_height_ = std::max(channel_height_, v.y);

  // Dirichlet rows: velocity on the inflow (profile), the no-slip walls and
  // the rigid obstacle boundary; displacement on everything but the
  // interface.
  {
    std::map<int, std::pair<int, bool>> vdofs;  // dof -> (comp, inflow?)
    const FacetTag noslip[] = {FacetTag::GammaFD0, FacetTag::GammaFDc, FacetTag::GammaSDc};
    for (int node : nodes_on_tags(*s2_space_, noslip))
      for (int c = 0; c < 2; ++c) vdofs[v_dof(node, c)] = {c, false};
    const FacetTag in[] = {FacetTag::GammaFDi};
    for (int node : nodes_on_tags(*s2_space_, in))
      for (int c = 0; c < 2; ++c) vdofs.try_emplace(v_dof(node, c), c, true);

    std::map<int, Vec2d> points;
    for (int node = 0; node < n2; ++node) {
      const Vec2d p = s2_space_->node_point(node);
      points[v_dof(node, 0)] = p;
      points[v_dof(node, 1)] = p;
    }
    for (const auto& [dof, info] : vdofs) {
      bc_dofs_.push_back(dof);
      bc_points_.push_back(points[dof]);
      bc_comps_.push_back(info.first);
      bc_inflow_.push_back(info.second ? 1 : 0);
    }
    if (mesh.has_tag(FacetTag::GammaI)) {
      const FacetTag wtags[] = {FacetTag::GammaFDi, FacetTag::GammaFD0, FacetTag::GammaFN,
                                FacetTag::GammaFDc, FacetTag::GammaSDc};
      for (int node : nodes_on_tags(*s2_space_, wtags))
        for (int c = 0; c < 2; ++c) {
          bc_dofs_.push_back(w_dof(node, c));
          bc_points_.push_back(s2_space_->node_point(node));
          bc_comps_.push_back(-1);
          bc_inflow_.push_back(0);
        }
    } else {
      // without an interface the extension pair (w, z) is pure gauge and its
      // constant z mode would make the system singular; pin both to zero
      for (int node = 0; node < n2; ++node)
        for (int c = 0; c < 2; ++c)
          for (int dof : {w_dof(node, c), z_dof(node, c)}) {
            bc_dofs_.push_back(dof);
            bc_points_.push_back(s2_space_->node_point(node));
            bc_comps_.push_back(-1);
            bc_inflow_.push_back(0);
          }
    }
    // keep sorted by dof
    std::vector<size_t> order(bc_dofs_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return bc_dofs_[a] < bc_dofs_[b]; });
    std::vector<int> d;
    std::vector<Vec2d> p;
    std::vector<int> c, f;
    for (size_t i : order) {
      d.push_back(bc_dofs_[i]);
      p.push_back(bc_points_[i]);
      c.push_back(bc_comps_[i]);
      f.push_back(bc_inflow_[i]);
    }
    bc_dofs_ = std::move(d);
    bc_points_ = std::move(p);
    bc_comps_ = std::move(c);
    bc_inflow_ = std::move(f);
  }

  // interface cutoff: 0 at interface vertices, 1 elsewhere (P1)
  iota_ = FEField(*p_space_);
  std::fill(iota_.coeffs.begin(), iota_.coeffs.end(), 1.0);
  if (mesh.has_tag(FacetTag::GammaI)) {
    const FacetTag itag[] = {FacetTag::GammaI};
    for (int node : nodes_on_tags(*p_space_, itag)) iota_.coeffs[node] = 0.0;
  }

  build_drag_field();

  // assembly cache: local dof maps, quadrature contexts, Jacobian pattern
  cache_ = std::make_unique<AssemblyCache>();
  const auto quad = tri_quadrature(kFsiQuadDegree);
  cache_->nq = static_cast<int>(quad.size());
  cache_->cell_dofs.resize(mesh.n_cells());
  cache_->tau_dofs.resize(mesh.n_cells());
  cache_->qctx.resize(static_cast<size_t>(mesh.n_cells()) * cache_->nq);
  int nodes2[6], nodes1[3];
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    v_space_->cell_nodes(cell, nodes2);
    p_space_->cell_nodes(cell, nodes1);
    auto& dofs = cache_->cell_dofs[cell];
    for (int n = 0; n < 6; ++n)
      for (int a = 0; a < 2; ++a) {
        dofs[kernel::kLocV + 2 * n + a] = v_dof(nodes2[n], a);
        dofs[kernel::kLocW + 2 * n + a] = w_dof(nodes2[n], a);
        dofs[kernel::kLocZ + 2 * n + a] = z_dof(nodes2[n], a);
      }
    for (int n = 0; n < 3; ++n) dofs[kernel::kLocP + n] = p_dof(nodes1[n]);
    for (int n = 0; n < 3; ++n) {
      cache_->tau_dofs[cell][2 * n] = 2 * mesh.cells[cell][n];
      cache_->tau_dofs[cell][2 * n + 1] = 2 * mesh.cells[cell][n] + 1;
    }
    for (int iq = 0; iq < cache_->nq; ++iq) {
      kernel::QuadCtx& q = cache_->qctx[cell * cache_->nq + iq];
      const CellBasis b2 = eval_cell_basis(*v_space_, cell, quad[iq].xi, quad[iq].eta);
      const CellBasis b1 = eval_cell_basis(*p_space_, cell, quad[iq].xi, quad[iq].eta);
      q.w = quad[iq].w * b2.jac_det;
      for (int n = 0; n < 6; ++n) {
        q.phi2[n] = b2.phi[n];
        q.grad2[n] = b2.grad[n];
      }
      for (int n = 0; n < 3; ++n) {
        q.phi1[n] = b1.phi[n];
        q.grad1[n] = b1.grad[n];
      }
      q.fluid = mesh.cell_subdomain[cell] == Subdomain::Fluid;
      q.iota = 0.0;
      q.grad_iota = {0, 0};
      for (int n = 0; n < 3; ++n) {
        const double iv = iota_.coeffs[nodes1[n]];
        q.iota += iv * b1.phi[n];
        q.grad_iota += iv * b1.grad[n];
      }
    }
  }
  std::vector<Triplet> sym;
  sym.reserve(static_cast<size_t>(mesh.n_cells()) * kernel::kLocal * kernel::kLocal);
  for (int cell = 0; cell < mesh.n_cells(); ++cell)
    for (int a = 0; a < kernel::kLocal; ++a)
      for (int b = 0; b < kernel::kLocal; ++b)
        sym.push_back({cache_->cell_dofs[cell][a], cache_->cell_dofs[cell][b], 0.0});
  cache_->jac_pattern =
      CsrMatrix::from_triplets(n_total_, n_total_, std::move(sym)).with_diagonal();
}

void FsiSystem::build_drag_field() {
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

  // one cell layer around the wetted boundary
  std::vector<char> layer(mesh.n_cells(), 0);
  int nodes[6];
  for (int c = 0; c < mesh.n_cells(); ++c) {
    s2_space_->cell_nodes(c, nodes);
    for (int i = 0; i < 6; ++i)
      if (on_obstacle.count(nodes[i])) layer[c] = 1;
  }
  // free nodes: interior to the layer
  std::vector<char> in_layer(s2_space_->n_nodes(), 0), outside(s2_space_->n_nodes(), 0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    s2_space_->cell_nodes(c, nodes);
    for (int i = 0; i < 6; ++i) (layer[c] ? in_layer : outside)[nodes[i]] = 1;
  }
  std::vector<int> free_nodes;
  std::map<int, int> free_index;
  for (int n = 0; n < s2_space_->n_nodes(); ++n)
    if (in_layer[n] && !outside[n] && !on_obstacle.count(n) && !on_boundary.count(n)) {
      free_index[n] = static_cast<int>(free_nodes.size());
      free_nodes.push_back(n);
    }
  for (int n : on_obstacle) psi_.coeffs[n] = 1.0;
  if (free_nodes.empty()) return;

  // harmonic extension on the layer for the free nodes
  std::vector<Triplet> trip;
  std::vector<double> rhs(free_nodes.size(), 0.0);
  const auto quad = tri_quadrature(4);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    if (!layer[c]) continue;
    s2_space_->cell_nodes(c, nodes);
    for (const auto& qp : quad) {
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
  const CsrMatrix a =
      CsrMatrix::from_triplets(static_cast<int>(free_nodes.size()),
                               static_cast<int>(free_nodes.size()), std::move(trip));
  const auto sol = solve_sparse(a, rhs);
  for (size_t i = 0; i < free_nodes.size(); ++i) psi_.coeffs[free_nodes[i]] = sol[i];
}

void FsiSystem::impose_dirichlet(MonolithicState& y, double t) const {
  for (size_t i = 0; i < bc_dofs_.size(); ++i) {
    double val = 0.0;
    if (bc_inflow_[i] && bc_comps_[i] == 0)
      val = inflow_profile(phys_.vbar, channel_height_, bc_points_[i].y, t);
    y.x[bc_dofs_[i]] = val;
  }
}

namespace {

kernel::Terms make_terms(const PhysicalParams& phys, const CouplingParams& cpl,
                         const GroupWeights& gw, double k, double theta) {
  kernel::Terms tm;
  tm.rho_f = phys.rho_f;
  tm.mu_f = phys.mu_f();
  tm.rho_s = phys.rho_s;
  tm.lambda_s = phys.lambda_s;
  tm.mu_s = phys.mu_s;
  tm.alpha_p = cpl.alpha_p;
  tm.alpha_w = cpl.alpha_w;
  tm.alpha_z = cpl.alpha_z;
  tm.k = k;
  tm.theta = theta;
  tm.wT = phys.time_terms ? gw.wT : 0.0;
  tm.wE = gw.wE;
  tm.wP = gw.wP;
  tm.wI = gw.wI;
  tm.wE_prev = gw.wE_prev;
  tm.convection = phys.convection;
  return tm;
}

}  // namespace

std::vector<double> FsiSystem::step_residual(const MonolithicState& y,
                                             const MonolithicState& y_prev,
                                             const Transformation& tau, double k, double theta,
                                             double t, double t_prev) const {
  const GroupWeights gw{1.0, theta, 1.0, 1.0, 1.0 - theta};
  const kernel::Terms tm = make_terms(phys_, coupling_, gw, k, theta);
  std::vector<double> r(n_total_, 0.0);

  double yl[kernel::kLocal], ypl[kernel::kLocal], ut[6];
  double rl[kernel::kLocal];
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    const auto& dofs = cache_->cell_dofs[cell];
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a] = y.x[dofs[a]];
      ypl[a] = y_prev.x[dofs[a]];
      rl[a] = 0.0;
    }
    for (int a = 0; a < 6; ++a) ut[a] = tau.u_tau.coeffs[cache_->tau_dofs[cell][a]];
    const bool need_force = static_cast<bool>(phys_.f_f) || static_cast<bool>(phys_.f_s);
    for (int iq = 0; iq < cache_->nq; ++iq) {
      kernel::QuadCtx q = cache_->qctx[cell * cache_->nq + iq];
      if (need_force) {
        // quadrature point location in reference coordinates
        Vec2d p{0, 0};
        const auto& tcell = mesh_->cells[cell];
        for (int n = 0; n < 3; ++n) p += q.phi1[n] * mesh_->vertices[tcell[n]];
        const auto& f = q.fluid ? phys_.f_f : phys_.f_s;
        if (f) {
          q.f_cur = f(p, t);
          q.f_prev = f(p, t_prev);
        }
      }
      kernel::step_residual(q, tm, yl, ypl, ut, rl);
    }
    for (int a = 0; a < kernel::kLocal; ++a) r[dofs[a]] += rl[a];
  }
  for (int dof : bc_dofs_) r[dof] = 0.0;
  return r;
}

std::vector<double> FsiSystem::group_residual(TermGroup group, const MonolithicState& y,
                                              const MonolithicState& y_prev,
                                              const Transformation& tau, double k, double theta,
                                              double t) const {
  GroupWeights gw{0.0, 0.0, 0.0, 0.0, 0.0};
  switch (group) {
    case TermGroup::TimeDerivative:
      gw.wT = 1.0;
      break;
    case TermGroup::Explicit:
      gw.wE = 1.0;
      break;
    case TermGroup::Pressure:
      gw.wP = 1.0;
      break;
    case TermGroup::Implicit:
      gw.wI = 1.0;
      break;
  }
  kernel::Terms tm = make_terms(phys_, coupling_, gw, k, theta);
  tm.wT = gw.wT;  // groups are reported as defined, without the test switches

  std::vector<double> r(n_total_, 0.0);
  double yl[kernel::kLocal], ypl[kernel::kLocal], ut[6], rl[kernel::kLocal];
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    const auto& dofs = cache_->cell_dofs[cell];
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a] = y.x[dofs[a]];
      ypl[a] = y_prev.x[dofs[a]];
      rl[a] = 0.0;
    }
    for (int a = 0; a < 6; ++a) ut[a] = tau.u_tau.coeffs[cache_->tau_dofs[cell][a]];
    for (int iq = 0; iq < cache_->nq; ++iq) {
      kernel::QuadCtx q = cache_->qctx[cell * cache_->nq + iq];
      if ((q.fluid && phys_.f_f) || (!q.fluid && phys_.f_s)) {
        Vec2d p{0, 0};
        const auto& tcell = mesh_->cells[cell];
        for (int n = 0; n < 3; ++n) p += q.phi1[n] * mesh_->vertices[tcell[n]];
        const auto& f = q.fluid ? phys_.f_f : phys_.f_s;
        q.f_cur = f(p, t);
      }
      kernel::step_residual(q, tm, yl, ypl, ut, rl);
    }
    for (int a = 0; a < kernel::kLocal; ++a) r[dofs[a]] += rl[a];
  }
  return r;
}

CsrMatrix FsiSystem::step_jacobian(const MonolithicState& y, const MonolithicState& y_prev,
                                   const Transformation& tau, double k, double theta, double t,
                                   double t_prev) const {
  const GroupWeights gw{1.0, theta, 1.0, 1.0, 0.0};  // A_E(y_prev) has no y dependence
  const kernel::Terms tm = make_terms(phys_, coupling_, gw, k, theta);
  CsrAssembler assembler(cache_->jac_pattern);

  using D = Dual<kernel::kLocal>;
  std::vector<D> yl(kernel::kLocal), ypl(kernel::kLocal), ut(6), rl(kernel::kLocal);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    const auto& dofs = cache_->cell_dofs[cell];
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a] = D::seeded(y.x[dofs[a]], a);
      ypl[a] = D(y_prev.x[dofs[a]]);
      rl[a] = D(0.0);
    }
    for (int a = 0; a < 6; ++a) ut[a] = D(tau.u_tau.coeffs[cache_->tau_dofs[cell][a]]);
    for (int iq = 0; iq < cache_->nq; ++iq)
      kernel::step_residual(cache_->qctx[cell * cache_->nq + iq], tm, yl.data(), ypl.data(),
                            ut.data(), rl.data());
    for (int a = 0; a < kernel::kLocal; ++a)
      for (int b = 0; b < kernel::kLocal; ++b)
        if (rl[a].d[b] != 0.0) assembler.add(dofs[a], dofs[b], rl[a].d[b]);
  }
  (void)t;
  (void)t_prev;

  CsrMatrix jac = assembler.matrix();
  std::vector<double> dummy_rhs(n_total_, 0.0);
  const std::vector<double> zeros(bc_dofs_.size(), 0.0);
  jac.eliminate_dirichlet(bc_dofs_, zeros, dummy_rhs);
  return jac;
}

std::vector<double> FsiSystem::step_dprev_transpose(const MonolithicState& y,
                                                    const MonolithicState& y_prev,
                                                    const Transformation& tau, double k,
                                                    double theta, double t, double t_prev,
                                                    std::span<const double> lambda) const {
  const GroupWeights gw{1.0, 0.0, 0.0, 0.0, 1.0 - theta};  // only these touch y_prev
  const kernel::Terms tm = make_terms(phys_, coupling_, gw, k, theta);
  std::vector<double> out(n_total_, 0.0);

  using D = Dual<kernel::kLocal>;
  std::vector<D> yl(kernel::kLocal), ypl(kernel::kLocal), ut(6), rl(kernel::kLocal);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    const auto& dofs = cache_->cell_dofs[cell];
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a] = D(y.x[dofs[a]]);
      ypl[a] = D::seeded(y_prev.x[dofs[a]], a);
      rl[a] = D(0.0);
    }
    for (int a = 0; a < 6; ++a) ut[a] = D(tau.u_tau.coeffs[cache_->tau_dofs[cell][a]]);
    const bool need_force = static_cast<bool>(phys_.f_f) || static_cast<bool>(phys_.f_s);
    for (int iq = 0; iq < cache_->nq; ++iq) {
      kernel::QuadCtx q = cache_->qctx[cell * cache_->nq + iq];
      if (need_force) {
        Vec2d p{0, 0};
        const auto& tcell = mesh_->cells[cell];
        for (int n = 0; n < 3; ++n) p += q.phi1[n] * mesh_->vertices[tcell[n]];
        const auto& f = q.fluid ? phys_.f_f : phys_.f_s;
        if (f) {
          q.f_cur = f(p, t);
          q.f_prev = f(p, t_prev);
        }
      }
      kernel::step_residual(q, tm, yl.data(), ypl.data(), ut.data(), rl.data());
    }
    for (int a = 0; a < kernel::kLocal; ++a) {
      const double lam = lambda[dofs[a]];
      if (lam == 0.0) continue;
      for (int b = 0; b < kernel::kLocal; ++b) out[dofs[b]] += lam * rl[a].d[b];
    }
  }
  return out;
}

std::vector<double> FsiSystem::step_dtau_transpose(const MonolithicState& y,
                                                   const MonolithicState& y_prev,
                                                   const Transformation& tau, double k,
                                                   double theta, double t, double t_prev,
                                                   std::span<const double> lambda) const {
  const GroupWeights gw{1.0, theta, 1.0, 1.0, 1.0 - theta};
  const kernel::Terms tm = make_terms(phys_, coupling_, gw, k, theta);
  std::vector<double> out(2 * mesh_->n_vertices(), 0.0);

  using D = Dual<6>;
  std::vector<D> yl(kernel::kLocal), ypl(kernel::kLocal), ut(6), rl(kernel::kLocal);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    const auto& dofs = cache_->cell_dofs[cell];
    bool any_lambda = false;
    for (int a = 0; a < kernel::kLocal; ++a)
      if (lambda[dofs[a]] != 0.0) any_lambda = true;
    if (!any_lambda) continue;
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a] = D(y.x[dofs[a]]);
      ypl[a] = D(y_prev.x[dofs[a]]);
      rl[a] = D(0.0);
    }
    for (int a = 0; a < 6; ++a)
      ut[a] = D::seeded(tau.u_tau.coeffs[cache_->tau_dofs[cell][a]], a);
    const bool need_force = static_cast<bool>(phys_.f_f) || static_cast<bool>(phys_.f_s);
    for (int iq = 0; iq < cache_->nq; ++iq) {
      kernel::QuadCtx q = cache_->qctx[cell * cache_->nq + iq];
      if (need_force) {
        Vec2d p{0, 0};
        const auto& tcell = mesh_->cells[cell];
        for (int n = 0; n < 3; ++n) p += q.phi1[n] * mesh_->vertices[tcell[n]];
        const auto& f = q.fluid ? phys_.f_f : phys_.f_s;
        if (f) {
          q.f_cur = f(p, t);
          q.f_prev = f(p, t_prev);
        }
      }
      kernel::step_residual(q, tm, yl.data(), ypl.data(), ut.data(), rl.data());
    }
    for (int a = 0; a < kernel::kLocal; ++a) {
      const double lam = lambda[dofs[a]];
      if (lam == 0.0) continue;
      for (int b = 0; b < 6; ++b) out[cache_->tau_dofs[cell][b]] += lam * rl[a].d[b];
    }
  }
  return out;
}

std::vector<double> FsiSystem::step_dtau_apply(const MonolithicState& y,
                                               const MonolithicState& y_prev,
                                               const Transformation& tau, double k, double theta,
                                               double t, double t_prev,
                                               std::span<const double> delta_u) const {
  const GroupWeights gw{1.0, theta, 1.0, 1.0, 1.0 - theta};
  const kernel::Terms tm = make_terms(phys_, coupling_, gw, k, theta);
  std::vector<double> out(n_total_, 0.0);

  using D = Dual<1>;
  std::vector<D> yl(kernel::kLocal), ypl(kernel::kLocal), ut(6), rl(kernel::kLocal);
  for (int cell = 0; cell < mesh_->n_cells(); ++cell) {
    const auto& dofs = cache_->cell_dofs[cell];
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a] = D(y.x[dofs[a]]);
      ypl[a] = D(y_prev.x[dofs[a]]);
      rl[a] = D(0.0);
    }
    for (int a = 0; a < 6; ++a) {
      ut[a] = D(tau.u_tau.coeffs[cache_->tau_dofs[cell][a]]);
      ut[a].d[0] = delta_u[cache_->tau_dofs[cell][a]];
    }
    const bool need_force = static_cast<bool>(phys_.f_f) || static_cast<bool>(phys_.f_s);
    for (int iq = 0; iq < cache_->nq; ++iq) {
      kernel::QuadCtx q = cache_->qctx[cell * cache_->nq + iq];
      if (need_force) {
        Vec2d p{0, 0};
        const auto& tcell = mesh_->cells[cell];
        for (int n = 0; n < 3; ++n) p += q.phi1[n] * mesh_->vertices[tcell[n]];
        const auto& f = q.fluid ? phys_.f_f : phys_.f_s;
        if (f) {
          q.f_cur = f(p, t);
          q.f_prev = f(p, t_prev);
        }
      }
      kernel::step_residual(q, tm, yl.data(), ypl.data(), ut.data(), rl.data());
    }
    for (int a = 0; a < kernel::kLocal; ++a) out[dofs[a]] += rl[a].d[0];
  }
  for (int dof : bc_dofs_) out[dof] = 0.0;
  return out;
}

NewtonReport FsiSystem::theta_step(MonolithicState& y, const MonolithicState& y_prev,
                                   const Transformation& tau, double t, double k,
                                   double theta) const {
  NewtonReport report;
  const double t_prev = t - k;
  impose_dirichlet(y, t);

  std::vector<double> r = step_residual(y, y_prev, tau, k, theta, t, t_prev);
  double rn = norm2(r);
  report.residuals.push_back(rn);

  for (int iter = 0; iter < newton_max_iterations; ++iter) {
    if (rn <= newton_tolerance) {
      report.converged = true;
      return report;
    }
    CsrMatrix jac = step_jacobian(y, y_prev, tau, k, theta, t, t_prev);
    LuSolver lu;
    lu.factorize(jac);
    for (auto& v : r) v = -v;
    const std::vector<double> delta = lu.solve(r);

    double step = 1.0;
    MonolithicState y_try;
    std::vector<double> r_try;
    double rn_try = 0.0;
    for (int bt = 0;; ++bt) {
      y_try = y;
      for (int i = 0; i < n_total_; ++i) y_try.x[i] += step * delta[i];
      r_try = step_residual(y_try, y_prev, tau, k, theta, t, t_prev);
      rn_try = norm2(r_try);
      if (rn_try < rn || bt >= newton_max_backtracks) break;
      step *= 0.5;
      ++report.backtracks;
    }
    y = std::move(y_try);
    r = std::move(r_try);
    rn = rn_try;
    report.residuals.push_back(rn);
  }
  if (rn <= newton_tolerance) {
    report.converged = true;
    return report;
  }
  NewtonError err("Newton did not converge within " + std::to_string(newton_max_iterations) +
                  " iterations (last residual " + std::to_string(rn) + ")");
  err.residuals = report.residuals;
  throw err;
}

StateTrajectory FsiSystem::simulate(const Transformation& tau, const TimeGrid& grid) const {
  StateTrajectory traj;
  traj.grid = grid;
  traj.states.push_back(zero_state());
  const double k = grid.k();
  const double theta = grid.effective_theta();
  for (int j = 1; j <= grid.N; ++j) {
    MonolithicState y = traj.states.back();
    const NewtonReport rep = theta_step(y, traj.states.back(), tau, j * k, k, theta);
    traj.newton_residuals.push_back(rep.residuals);
    traj.states.push_back(std::move(y));
  }
  return traj;
}

namespace {

int locate_cell(const Mesh& mesh, Vec2d p, int hint) {
  auto inside = [&](int c, double& xi, double& eta) {
    const auto& t = mesh.cells[c];
    const Vec2d p0 = mesh.vertices[t[0]], p1 = mesh.vertices[t[1]], p2 = mesh.vertices[t[2]];
    const double inv = 1.0 / cross(p1 - p0, p2 - p0);
    xi = cross(p - p0, p2 - p0) * inv;
    eta = cross(p1 - p0, p - p0) * inv;
    return xi >= -1e-10 && eta >= -1e-10 && xi + eta <= 1.0 + 1e-10;
  };
  double xi, eta;
  if (hint >= 0 && hint < mesh.n_cells() && inside(hint, xi, eta)) return hint;
  for (int c = 0; c < mesh.n_cells(); ++c)
    if (inside(c, xi, eta)) return c;
  throw std::runtime_error("probe point outside the mesh");
}

}  // namespace

Vec2d FsiSystem::probe_displacement(const MonolithicState& y, Vec2d point) const {
  const int cell = locate_cell(*mesh_, point, cache_->probe_cell);
  cache_->probe_cell = cell;
  const auto& t = mesh_->cells[cell];
  const Vec2d p0 = mesh_->vertices[t[0]], p1 = mesh_->vertices[t[1]], p2 = mesh_->vertices[t[2]];
  const double inv = 1.0 / cross(p1 - p0, p2 - p0);
  const double xi = cross(point - p0, p2 - p0) * inv;
  const double eta = cross(p1 - p0, point - p0) * inv;
  const CellBasis b = eval_cell_basis(*v_space_, cell, xi, eta);
  int nodes[6];
  v_space_->cell_nodes(cell, nodes);
  Vec2d result{0, 0};
  for (int n = 0; n < 6; ++n)
    for (int c = 0; c < 2; ++c) result[c] += y.x[w_dof(nodes[n], c)] * b.phi[n];
  return result;
}

Vec2d FsiSystem::probe_map(const Transformation& tau, Vec2d point) const {
  const int cell = locate_cell(*mesh_, point, cache_->probe_cell);
  const auto& t = mesh_->cells[cell];
  const Vec2d p0 = mesh_->vertices[t[0]], p1 = mesh_->vertices[t[1]], p2 = mesh_->vertices[t[2]];
  const double inv = 1.0 / cross(p1 - p0, p2 - p0);
  const double xi = cross(point - p0, p2 - p0) * inv;
  const double eta = cross(p1 - p0, point - p0) * inv;
  const double lam[3] = {1.0 - xi - eta, xi, eta};
  Vec2d result = point;
  for (int n = 0; n < 3; ++n)
    for (int c = 0; c < 2; ++c) result[c] += tau.u_tau.coeffs[2 * t[n] + c] * lam[n];
  return result;
}

void save_trajectory_checkpoints(const StateTrajectory& traj, int interval,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint file '" + path + "'");
  out.precision(17);
  std::vector<int> indices;
  for (int j = 0; j < static_cast<int>(traj.states.size()); ++j)
    if (j % interval == 0 || j + 1 == static_cast<int>(traj.states.size())) indices.push_back(j);
  out << "checkpoints " << traj.grid.N << " " << traj.grid.k() << " "
      << traj.states[0].x.size() << " " << indices.size() << "\n";
  for (int j : indices) {
    out << j;
    for (double v : traj.states[j].x) out << " " << v;
    out << "\n";
  }
}

StateTrajectory load_trajectory_checkpoints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint file '" + path + "'");
  std::string kw;
  int n_steps = 0, n_dofs = 0, count = 0;
  double k = 0.0;
  in >> kw >> n_steps >> k >> n_dofs >> count;
  if (kw != "checkpoints") throw std::runtime_error("not a checkpoint file: " + path);
  StateTrajectory traj;
  traj.grid.N = n_steps;
  traj.grid.T = n_steps * k;
  traj.states.resize(count);
  for (int i = 0; i < count; ++i) {
    int idx;
    in >> idx;
    traj.states[i].x.resize(n_dofs);
    for (double& v : traj.states[i].x) in >> v;
  }
  return traj;
}

}  // namespace fsikit
