#include <doctest.h>

#include <cmath>
#include <random>

#include "fsikit/adjoint.hpp"
#include "fsikit/meshgen.hpp"
#include "fsikit/stokes.hpp"

using namespace fsikit;

namespace {

Mesh tiny_mixed_mesh() { return rect_mesh(4, 3, {0, 0}, {1.0, 0.8}, 0.5); }

ShapeControlParams interface_params() {
  ShapeControlParams p;
  p.design_tag = FacetTag::GammaI;
  p.barycenter_constraints = false;
  p.beta = 0.05;
  p.alpha = 0.5;
  return p;
}

std::vector<double> random_control(int n, unsigned seed, double scale) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d(n);
  for (auto& v : d) v = scale * dist(rng);
  return d;
}

}  // namespace

TEST_CASE("quadratic toy objective has exact taylor rate 2") {
  // f(d) = d^T M d with a fixed SPD matrix: remainder is exactly h^2 delta^T M delta
  const int n = 7;
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      m[i][j] = dist(rng);
      m[j][i] = m[i][j];
    }
  for (int i = 0; i < n; ++i) m[i][i] += 4.0;
  auto f = [&](std::span<const double> d) {
    double v = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) v += d[i] * m[i][j] * d[j];
    return v;
  };
  const auto d = random_control(n, 5, 1.0);
  const auto delta = random_control(n, 6, 1.0);
  std::vector<double> grad(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) grad[i] += 2.0 * m[i][j] * d[j];
  const double hs[] = {1e-1, 5e-2, 2.5e-2, 1.25e-2};
  const auto result = taylor_test(f, d, grad, delta, hs);
  for (double r : result.rates) CHECK(r == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("steady stokes drag shape gradient passes the taylor test") {
  ChannelSpec spec;
  spec.with_flap = false;
  spec.length = 1.1;
  spec.h_near = 0.025;
  spec.h_far = 0.15;
  const Mesh mesh = channel_mesh(spec);

  ShapeControlParams sp;
  sp.design_tag = FacetTag::GammaFDc;
  sp.beta = 0.02;
  sp.alpha = 0.1;
  const ShapeController ctrl(mesh, sp);
  const StokesSystem stokes(mesh, 1.0, 0.3);

  auto objective = [&](std::span<const double> d) {
    const Transformation tau = ctrl.apply_B(d);
    const auto y = stokes.solve(tau);
    return stokes.drag_volume(y, tau) + ctrl.regularization(d);
  };
  auto gradient = [&](std::span<const double> d) {
    const Transformation tau = ctrl.apply_B(d);
    const auto y = stokes.solve(tau);
    auto g = ctrl.apply_B_transpose(stokes.drag_shape_gradient(y, tau));
    const auto reg = ctrl.regularization_gradient(d);
    for (size_t i = 0; i < g.size(); ++i) g[i] += reg[i];
    return g;
  };

  const auto d = random_control(ctrl.n_controls(), 11, 1e-3);
  const auto grad = gradient(d);
  const double hs[] = {1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4};
  for (unsigned seed : {21u, 22u, 23u}) {
    const auto delta = random_control(ctrl.n_controls(), seed, 1.0);
    const auto result = taylor_test(objective, d, grad, delta, hs);
    CHECK(result.mean_rate >= 1.9);
  }
}

TEST_CASE("single linear step gradient matches a forward-sensitivity oracle") {
  const Mesh mesh = tiny_mixed_mesh();
  PhysicalParams phys;
  phys.rho_f = 1.0;
  phys.nu_f = 1.0;
  phys.rho_s = 2.0;
  phys.lambda_s = 4.0;
  phys.mu_s = 2.0;
  phys.vbar = 0.4;
  phys.convection = false;  // Stokes + linear solid coupling terms stay linearized
  CouplingParams cpl;
  cpl.alpha_p = cpl.alpha_w = cpl.alpha_z = 1e-6;
  const TimeGrid grid{0.05, 1, 1.0};  // single implicit Euler step

  ReducedFsiProblem problem(mesh, phys, cpl, interface_params(), grid);
  const auto d = random_control(problem.n_controls(), 31, 1e-3);
  const auto report = problem.gradient(d, 1);

  // forward sensitivities, one control at a time
  const auto& ctrl = problem.control();
  auto& sys = problem.system();
  const Transformation tau = ctrl.apply_B(d);
  const double k = grid.k(), theta = grid.effective_theta();
  MonolithicState y0 = sys.zero_state();
  MonolithicState y1 = y0;
  sys.theta_step(y1, y0, tau, k, k, theta);

  const CsrMatrix jac = sys.step_jacobian(y1, y0, tau, k, theta, k, 0.0);
  LuSolver lu;
  lu.factorize(jac);

  DragObjective drag(sys);
  std::vector<double> dj_dy(sys.n_dofs(), 0.0), dj_dyprev(sys.n_dofs(), 0.0);
  const double scale = -1.0 * DragObjective::trapezoid_weight(1, 1, k) / grid.T;
  drag.instant_dstate(y1, y0, tau, k, scale, dj_dy, dj_dyprev);
  std::vector<double> dj_du(2 * mesh.n_vertices(), 0.0);
  drag.instant_dtau(y1, y0, tau, k, scale, dj_du);

  const auto penalty_grad = ctrl.det_penalty_gradient_d(tau);
  const auto reg_grad = ctrl.regularization_gradient(d);

  for (int i = 0; i < problem.n_controls(); ++i) {
    std::vector<double> ei(problem.n_controls(), 0.0);
    ei[i] = 1.0;
    const auto du = ctrl.apply_B(ei).u_tau.coeffs;  // linear chain: directional
    // dy = -J^{-1} (dR/du) du
    auto dr = sys.step_dtau_apply(y1, y0, tau, k, theta, k, 0.0, du);
    for (auto& v : dr) v = -v;
    const auto dy = lu.solve(dr);
    double total = 0.0;
    for (int a = 0; a < sys.n_dofs(); ++a) total += dj_dy[a] * dy[a];
    for (size_t a = 0; a < du.size(); ++a) total += dj_du[a] * du[a];
    total += penalty_grad[i] + reg_grad[i];
    CHECK(std::abs(report.grad_d[i] - total) <=
          1e-12 * (std::abs(total) + std::abs(report.objective.total) + 1.0));
  }
}

TEST_CASE("checkpoint intervals do not change the gradient") {
  const Mesh mesh = tiny_mixed_mesh();
  PhysicalParams phys;
  phys.vbar = 0.5;
  CouplingParams cpl;
  const TimeGrid grid{0.4, 20, -1.0};
  ReducedFsiProblem problem(mesh, phys, cpl, interface_params(), grid);

  const auto d = random_control(problem.n_controls(), 41, 5e-4);
  const auto g1 = problem.gradient(d, 1);
  const auto g5 = problem.gradient(d, 5);
  const auto gs = problem.gradient(d, 0);  // ceil(sqrt(20)) = 5
  CHECK(gs.checkpoint_interval == ReducedFsiProblem::default_checkpoint_interval(20));

  double gnorm = 0.0;
  for (double v : g1.grad_d) gnorm = std::max(gnorm, std::abs(v));
  for (int i = 0; i < problem.n_controls(); ++i) {
    CHECK(std::abs(g1.grad_d[i] - g5.grad_d[i]) <= 1e-13 * gnorm);
    CHECK(std::abs(g1.grad_d[i] - gs.grad_d[i]) <= 1e-13 * gnorm);
  }
  // memory high-water mark stays within the O(N/m + m) bound
  CHECK(g5.peak_states_held <= 20 / 5 + 5 + 3);
}

TEST_CASE("mini unsteady fsi gradient passes the taylor test") {
  const Mesh mesh = tiny_mixed_mesh();
  PhysicalParams phys;
  phys.vbar = 0.5;
  const TimeGrid grid{0.25, 5, -1.0};
  ReducedFsiProblem problem(mesh, phys, CouplingParams{}, interface_params(), grid);

  const auto d = random_control(problem.n_controls(), 51, 5e-4);
  const auto report = problem.gradient(d, 2);
  auto f = [&](std::span<const double> dd) { return problem.objective(dd).total; };
  const double hs[] = {4e-3, 2e-3, 1e-3, 5e-4};
  const auto delta = random_control(problem.n_controls(), 52, 1.0);
  const auto result = taylor_test(f, d, report.grad_d, delta, hs);
  CHECK(result.mean_rate >= 1.9);
}

TEST_CASE("pure regularization objective has the exact gradient alpha S d") {
  const Mesh mesh = tiny_mixed_mesh();
  ReducedFsiProblem problem(mesh, PhysicalParams{}, CouplingParams{}, interface_params(),
                            TimeGrid{0.1, 2, -1.0});
  problem.drag_weight = 0.0;

  const auto d = random_control(problem.n_controls(), 61, 1e-2);
  const auto report = problem.gradient(d, 1);
  const auto& ctrl = problem.control();
  const auto expected_reg = ctrl.regularization_gradient(d);
  const auto expected_pen = ctrl.det_penalty_gradient_d(ctrl.apply_B(d));
  for (int i = 0; i < problem.n_controls(); ++i)
    CHECK(report.grad_d[i] ==
          doctest::Approx(expected_reg[i] + expected_pen[i]).epsilon(1e-13));
}

TEST_CASE("infeasible penalty point: zero penalty gradient and raised flag") {
  const Mesh mesh = tiny_mixed_mesh();
  ReducedFsiProblem problem(mesh, PhysicalParams{}, CouplingParams{}, interface_params(),
                            TimeGrid{0.1, 2, -1.0});

  // large control crushes cells beyond the determinant threshold
  auto d = random_control(problem.n_controls(), 71, 2.0);
  for (auto& v : d) v += 120.0;
  const auto value = problem.objective(d);
  CHECK(value.total >= kInfeasiblePenalty);
  const auto report = problem.gradient(d, 1);
  CHECK(report.penalty_infeasible);
  const auto reg = problem.control().regularization_gradient(d);
  for (int i = 0; i < problem.n_controls(); ++i)
    CHECK(report.grad_d[i] == doctest::Approx(reg[i]).epsilon(1e-14));
}

TEST_CASE("constraint functionals pass the taylor test") {
  ChannelSpec spec;
  spec.with_flap = false;
  spec.length = 1.1;
  spec.h_near = 0.03;
  spec.h_far = 0.18;
  const Mesh mesh = channel_mesh(spec);
  ShapeControlParams sp;
  sp.design_tag = FacetTag::GammaFDc;
  sp.beta = 0.02;
  const ShapeController ctrl(mesh, sp);

  const auto d = random_control(ctrl.n_controls(), 81, 1e-3);
  const Transformation tau = ctrl.apply_B(d);
  const auto jac = ctrl.constraint_jacobian_d(tau);
  const double hs[] = {1e-2, 5e-3, 2.5e-3, 1.25e-3};
  for (int row = 0; row < ctrl.n_constraints(); ++row) {
    auto f = [&](std::span<const double> dd) {
      return ctrl.geometric_constraints(ctrl.apply_B(dd)).g[row];
    };
    const auto delta = random_control(ctrl.n_controls(), 90 + row, 1.0);
    const auto result = taylor_test(f, d, jac[row], delta, hs);
    CHECK(result.mean_rate >= 1.9);
  }
}

TEST_CASE("determinant penalty passes the taylor test") {
  ChannelSpec spec;
  spec.with_flap = false;
  spec.length = 1.1;
  spec.h_near = 0.03;
  spec.h_far = 0.18;
  const Mesh mesh = channel_mesh(spec);
  ShapeControlParams sp;
  sp.design_tag = FacetTag::GammaFDc;
  sp.beta = 0.02;
  const ShapeController ctrl(mesh, sp);

  const auto d = random_control(ctrl.n_controls(), 101, 1e-3);
  auto f = [&](std::span<const double> dd) { return ctrl.det_penalty(ctrl.apply_B(dd)); };
  const auto grad = ctrl.det_penalty_gradient_d(ctrl.apply_B(d));
  const double hs[] = {2e-2, 1e-2, 5e-3, 2.5e-3};
  const auto delta = random_control(ctrl.n_controls(), 102, 1.0);
  const auto result = taylor_test(f, d, grad, delta, hs);
  CHECK(result.mean_rate >= 1.9);
}
