#include "fsikit/drag.hpp"

#include "fsi_kernel.hpp"
#include "fsikit/quadrature.hpp"

namespace fsikit {

namespace {

constexpr int kDragQuadDegree = 6;

struct DragCtx {
  kernel::QuadCtx q;
  Vec2<double> psi;
  Mat2<double> dpsi;
};

}  // namespace

// The drag kernels walk the fluid cells with the same local layout as the
// step residual; the fixed test field is interpolated from the P2 scalar
// drag field per quadrature point.
template <class Fn>
static void for_each_fluid_qp(const FsiSystem& sys, Fn&& fn) {
  const Mesh& mesh = sys.mesh();
  const auto quad = tri_quadrature(kDragQuadDegree);
  const Space& vs = sys.velocity_space();
  const Space& ps = sys.pressure_space();
  int nodes2[6], nodes1[3];
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    if (mesh.cell_subdomain[cell] != Subdomain::Fluid) continue;
    vs.cell_nodes(cell, nodes2);
    ps.cell_nodes(cell, nodes1);
    for (const auto& qp : quad) {
      DragCtx ctx;
      const CellBasis b2 = eval_cell_basis(vs, cell, qp.xi, qp.eta);
      const CellBasis b1 = eval_cell_basis(ps, cell, qp.xi, qp.eta);
      ctx.q.w = qp.w * b2.jac_det;
      for (int n = 0; n < 6; ++n) {
        ctx.q.phi2[n] = b2.phi[n];
        ctx.q.grad2[n] = b2.grad[n];
      }
      for (int n = 0; n < 3; ++n) {
        ctx.q.phi1[n] = b1.phi[n];
        ctx.q.grad1[n] = b1.grad[n];
      }
      ctx.q.fluid = true;
      // Psi = (s, 0) with s the stored P2 scalar field
      ctx.psi = {0.0, 0.0};
      ctx.dpsi = Mat2<double>();
      for (int n = 0; n < 6; ++n) {
        const double s = sys.drag_test_field().coeffs[nodes2[n]];
        ctx.psi.x += s * b2.phi[n];
        ctx.dpsi(0, 0) += s * b2.grad[n][0];
        ctx.dpsi(0, 1) += s * b2.grad[n][1];
      }
      fn(cell, nodes2, nodes1, ctx);
    }
  }
}

namespace {

kernel::Terms drag_terms(const FsiSystem& sys, double k) {
  kernel::Terms tm;
  tm.rho_f = sys.physical().rho_f;
  tm.mu_f = sys.physical().mu_f();
  tm.rho_s = sys.physical().rho_s;
  tm.lambda_s = sys.physical().lambda_s;
  tm.mu_s = sys.physical().mu_s;
  tm.k = k;
  tm.convection = sys.physical().convection;
  return tm;
}

template <class S>
void gather_state(const FsiSystem& sys, const MonolithicState& y, const int nodes2[6],
                  const int nodes1[3], S* out) {
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a) {
      out[kernel::kLocV + 2 * n + a] = S(y.x[sys.v_dof(nodes2[n], a)]);
      out[kernel::kLocW + 2 * n + a] = S(y.x[sys.w_dof(nodes2[n], a)]);
      out[kernel::kLocZ + 2 * n + a] = S(y.x[sys.z_dof(nodes2[n], a)]);
    }
  for (int n = 0; n < 3; ++n) out[kernel::kLocP + n] = S(y.x[sys.p_dof(nodes1[n])]);
}

}  // namespace

double DragObjective::instant(const MonolithicState& y, const MonolithicState& y_prev,
                              const Transformation& tau, double k) const {
  const kernel::Terms tm = drag_terms(*sys_, k);
  double value = 0.0;
  for_each_fluid_qp(*sys_, [&](int cell, const int nodes2[6], const int nodes1[3],
                               const DragCtx& ctx) {
    double yl[kernel::kLocal], ypl[kernel::kLocal], ut[6];
    gather_state(*sys_, y, nodes2, nodes1, yl);
    gather_state(*sys_, y_prev, nodes2, nodes1, ypl);
    const auto& t = sys_->mesh().cells[cell];
    for (int n = 0; n < 3; ++n)
      for (int a = 0; a < 2; ++a) ut[2 * n + a] = tau.u_tau.coeffs[2 * t[n] + a];
    value += kernel::drag_integrand(ctx.q, tm, yl, ypl, ut, ctx.psi, ctx.dpsi);
  });
  return value;
}

void DragObjective::instant_dstate(const MonolithicState& y, const MonolithicState& y_prev,
                                   const Transformation& tau, double k, double scale,
                                   std::span<double> out_cur, std::span<double> out_prev) const {
  const kernel::Terms tm = drag_terms(*sys_, k);
  using D = Dual<2 * kernel::kLocal>;
  for_each_fluid_qp(*sys_, [&](int cell, const int nodes2[6], const int nodes1[3],
                               const DragCtx& ctx) {
    D yl[kernel::kLocal], ypl[kernel::kLocal], ut[6];
    gather_state(*sys_, y, nodes2, nodes1, yl);
    gather_state(*sys_, y_prev, nodes2, nodes1, ypl);
    for (int a = 0; a < kernel::kLocal; ++a) {
      yl[a].d[a] = 1.0;
      ypl[a].d[kernel::kLocal + a] = 1.0;
    }
    const auto& t = sys_->mesh().cells[cell];
    for (int n = 0; n < 3; ++n)
      for (int a = 0; a < 2; ++a) ut[2 * n + a] = D(tau.u_tau.coeffs[2 * t[n] + a]);
    const D v = kernel::drag_integrand(ctx.q, tm, yl, ypl, ut, ctx.psi, ctx.dpsi);
    int dofs[kernel::kLocal];
    for (int n = 0; n < 6; ++n)
      for (int a = 0; a < 2; ++a) {
        dofs[kernel::kLocV + 2 * n + a] = sys_->v_dof(nodes2[n], a);
        dofs[kernel::kLocW + 2 * n + a] = sys_->w_dof(nodes2[n], a);
        dofs[kernel::kLocZ + 2 * n + a] = sys_->z_dof(nodes2[n], a);
      }
    for (int n = 0; n < 3; ++n) dofs[kernel::kLocP + n] = sys_->p_dof(nodes1[n]);
    for (int a = 0; a < kernel::kLocal; ++a) {
      out_cur[dofs[a]] += scale * v.d[a];
      out_prev[dofs[a]] += scale * v.d[kernel::kLocal + a];
    }
  });
}

void DragObjective::instant_dtau(const MonolithicState& y, const MonolithicState& y_prev,
                                 const Transformation& tau, double k, double scale,
                                 std::span<double> out) const {
  const kernel::Terms tm = drag_terms(*sys_, k);
  using D = Dual<6>;
  for_each_fluid_qp(*sys_, [&](int cell, const int nodes2[6], const int nodes1[3],
                               const DragCtx& ctx) {
    D yl[kernel::kLocal], ypl[kernel::kLocal], ut[6];
    gather_state(*sys_, y, nodes2, nodes1, yl);
    gather_state(*sys_, y_prev, nodes2, nodes1, ypl);
    const auto& t = sys_->mesh().cells[cell];
    for (int n = 0; n < 3; ++n)
      for (int a = 0; a < 2; ++a)
        ut[2 * n + a] = D::seeded(tau.u_tau.coeffs[2 * t[n] + a], 2 * n + a);
    const D v = kernel::drag_integrand(ctx.q, tm, yl, ypl, ut, ctx.psi, ctx.dpsi);
    for (int n = 0; n < 3; ++n)
      for (int a = 0; a < 2; ++a) out[2 * t[n] + a] += scale * v.d[2 * n + a];
  });
}

double DragObjective::trapezoid_weight(int j, int n_steps, double k) {
  if (n_steps == 1) return k;
  return (j == 1 || j == n_steps) ? 0.5 * k : k;
}

double DragObjective::mean_drag(const StateTrajectory& traj, const Transformation& tau) const {
  const int n = traj.grid.N;
  const double k = traj.grid.k();
  double sum = 0.0;
  for (int j = 1; j <= n; ++j)
    sum += trapezoid_weight(j, n, k) * instant(traj.states[j], traj.states[j - 1], tau, k);
  return -sum / traj.grid.T;
}

}  // namespace fsikit
