#include "fsikit/adjoint.hpp"

#include <chrono>
#include <cmath>

namespace fsikit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

ReducedFsiProblem::ReducedFsiProblem(const Mesh& mesh, PhysicalParams phys,
                                     CouplingParams coupling, ShapeControlParams shape,
                                     TimeGrid grid)
    : mesh_(&mesh), grid_(grid) {
  sys_ = std::make_unique<FsiSystem>(mesh, std::move(phys), coupling);
  ctrl_ = std::make_unique<ShapeController>(mesh, std::move(shape));
  drag_ = std::make_unique<DragObjective>(*sys_);
}

int ReducedFsiProblem::default_checkpoint_interval(int n_steps) {
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_steps)))));
}

ObjectiveValue ReducedFsiProblem::objective(std::span<const double> d) const {
  ObjectiveValue value;
  const Transformation tau = ctrl_->apply_B(d);
  value.penalty = ctrl_->det_penalty(tau);
  value.regularization = ctrl_->regularization(d);
  if (value.penalty >= kInfeasiblePenalty) {
    value.total = kInfeasiblePenalty;
    return value;
  }
  if (drag_weight != 0.0) {
    const StateTrajectory traj = sys_->simulate(tau, grid_);
    value.raw_drag = drag_weight * drag_->mean_drag(traj, tau);
  }
  value.total = value.raw_drag + value.penalty + value.regularization;
  return value;
}

std::vector<double> ReducedFsiProblem::constraints(std::span<const double> d) const {
  return ctrl_->geometric_constraints(ctrl_->apply_B(d)).g;
}

std::vector<std::vector<double>> ReducedFsiProblem::constraint_jacobian(
    std::span<const double> d) const {
  return ctrl_->constraint_jacobian_d(ctrl_->apply_B(d));
}

GradientReport ReducedFsiProblem::gradient(std::span<const double> d,
                                           int checkpoint_interval) const {
  GradientReport report;
  const int n = grid_.N;
  const double k = grid_.k();
  const double theta = grid_.effective_theta();
  const int m = checkpoint_interval > 0 ? checkpoint_interval : default_checkpoint_interval(n);
  report.checkpoint_interval = m;

  const Transformation tau = ctrl_->apply_B(d);
  report.objective.penalty = ctrl_->det_penalty(tau);
  report.objective.regularization = ctrl_->regularization(d);
  report.grad_d = ctrl_->regularization_gradient(d);
  if (report.objective.penalty >= kInfeasiblePenalty) {
    // penalty gradient is zero at infeasible points by convention
    report.penalty_infeasible = true;
    report.objective.total = kInfeasiblePenalty;
    return report;
  }
  {
    const auto pg = ctrl_->det_penalty_gradient_d(tau);
    for (int i = 0; i < ctrl_->n_controls(); ++i) report.grad_d[i] += pg[i];
  }
  if (drag_weight == 0.0) {
    report.objective.total = report.objective.penalty + report.objective.regularization;
    return report;
  }

  // Forward pass, storing only every m-th state.
  const auto t_fwd = Clock::now();
  std::vector<MonolithicState> checkpoints;  // states at indices 0, m, 2m, ...
  checkpoints.push_back(sys_->zero_state());
  {
    MonolithicState current = checkpoints[0];
    for (int j = 1; j <= n; ++j) {
      MonolithicState next = current;
      sys_->theta_step(next, current, tau, j * k, k, theta);
      current = std::move(next);
      if (j % m == 0) checkpoints.push_back(current);
    }
  }
  report.seconds_forward = seconds_since(t_fwd);

  // Reverse sweep over recomputed windows.
  const auto t_adj = Clock::now();
  const double t_total = grid_.T;
  std::vector<double> grad_u(2 * mesh_->n_vertices(), 0.0);
  std::vector<double> lambda_above;        // lambda_{j+1}
  MonolithicState state_above;             // y_{j+1}
  std::vector<double> carry_prev;          // -(w_{j+1}/T) dD_{j+1}/dy_j contribution
  double raw_drag = 0.0;
  bool have_above = false;

  const int n_windows = (n + m - 1) / m;
  for (int win = n_windows - 1; win >= 0; --win) {
    const int lo = win * m;                    // checkpoint index
    const int hi = std::min((win + 1) * m, n);  // top step of this window
    // recompute the window states y_{lo..hi} from the checkpoint
    std::vector<MonolithicState> states;
    states.push_back(checkpoints[win]);
    for (int j = lo + 1; j <= hi; ++j) {
      MonolithicState next = states.back();
      sys_->theta_step(next, states.back(), tau, j * k, k, theta);
      states.push_back(std::move(next));
    }
    report.peak_states_held =
        std::max(report.peak_states_held,
                 static_cast<int>(checkpoints.size() + states.size() + (have_above ? 1 : 0)));

    for (int j = hi; j > lo; --j) {
      const MonolithicState& y_j = states[j - lo];
      const MonolithicState& y_jm1 = states[j - lo - 1];
      const double t_j = j * k;

      const double w_j = DragObjective::trapezoid_weight(j, n, k);
      const double scale = -drag_weight * w_j / t_total;
      raw_drag += scale * drag_->instant(y_j, y_jm1, tau, k);

      // right-hand side: -dJ/dy_j - (dR_{j+1}/dy_j)^T lambda_{j+1}
      std::vector<double> rhs(sys_->n_dofs(), 0.0);
      std::vector<double> carry_next(sys_->n_dofs(), 0.0);
      drag_->instant_dstate(y_j, y_jm1, tau, k, scale, rhs, carry_next);
      if (!carry_prev.empty())
        for (int i = 0; i < sys_->n_dofs(); ++i) rhs[i] += carry_prev[i];
      if (have_above) {
        const auto coupling = sys_->step_dprev_transpose(state_above, y_j, tau, k, theta,
                                                         t_j + k, t_j, lambda_above);
        for (int i = 0; i < sys_->n_dofs(); ++i) rhs[i] += coupling[i];
      }
      for (double& v : rhs) v = -v;
      for (int dof : sys_->dirichlet_dofs()) rhs[dof] = 0.0;

      CsrMatrix jac = sys_->step_jacobian(y_j, y_jm1, tau, k, theta, t_j, t_j - k);
      LuSolver lu;
      lu.factorize(jac);
      std::vector<double> lambda = lu.solve_transpose(rhs);

      // accumulate the explicit tau-dependence of this step and of the drag
      const auto gt = sys_->step_dtau_transpose(y_j, y_jm1, tau, k, theta, t_j, t_j - k, lambda);
      for (size_t i = 0; i < grad_u.size(); ++i) grad_u[i] += gt[i];
      drag_->instant_dtau(y_j, y_jm1, tau, k, scale, grad_u);

      lambda_above = std::move(lambda);
      state_above = y_j;
      have_above = true;
      carry_prev = std::move(carry_next);
    }
  }
  // carry at j = 0 hits the fixed zero initial state and is discarded
  report.seconds_adjoint = seconds_since(t_adj);

  const auto chain = ctrl_->apply_B_transpose(grad_u);
  for (int i = 0; i < ctrl_->n_controls(); ++i) report.grad_d[i] += chain[i];

  report.objective.raw_drag = raw_drag;
  report.objective.total =
      raw_drag + report.objective.penalty + report.objective.regularization;
  return report;
}

TaylorResult taylor_test(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> d, std::span<const double> grad,
                         std::span<const double> delta, std::span<const double> h_values) {
  TaylorResult result;
  const double f0 = f(d);
  double gdot = 0.0;
  for (size_t i = 0; i < d.size(); ++i) gdot += grad[i] * delta[i];
  std::vector<double> dp(d.begin(), d.end());
  for (double h : h_values) {
    for (size_t i = 0; i < d.size(); ++i) dp[i] = d[i] + h * delta[i];
    const double fh = f(dp);
    result.h.push_back(h);
    result.remainders.push_back(std::abs(fh - f0 - h * gdot));
  }
  for (size_t i = 0; i + 1 < result.remainders.size(); ++i) {
    const double ratio = result.remainders[i] / result.remainders[i + 1];
    const double step = result.h[i] / result.h[i + 1];
    result.rates.push_back(std::log(ratio) / std::log(step));
  }
  for (double r : result.rates) result.mean_rate += r;
  if (!result.rates.empty()) result.mean_rate /= static_cast<double>(result.rates.size());
  return result;
}

}  // namespace fsikit
