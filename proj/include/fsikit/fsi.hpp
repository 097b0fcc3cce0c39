#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsikit/fem.hpp"
#include "fsikit/mesh.hpp"
#include "fsikit/shape_control.hpp"
#include "fsikit/sparse.hpp"

namespace fsikit {

struct PhysicalParams {
  double rho_f = 1e3;
  double nu_f = 1e-3;
  double rho_s = 1e4;
  double lambda_s = 2e6;
  double mu_s = 5e5;
  double vbar = 1.0;
  std::function<Vec2d(Vec2d, double)> f_f;  // body forces on the reference domain
  std::function<Vec2d(Vec2d, double)> f_s;
  bool convection = true;   // test switch: drop the fluid convection term
  bool time_terms = true;   // test switch: drop the time-derivative group
  double mu_f() const { return rho_f * nu_f; }
};

struct CouplingParams {
  double alpha_p = 1e-9;
  double alpha_w = 1e-9;
  double alpha_z = 1e-9;
};

struct TimeGrid {
  double T = 1.0;
  int N = 50;
  double theta = -1.0;  // < 0: shifted Crank-Nicolson theta = 1/2 + k
  double k() const { return T / N; }
  double effective_theta() const { return theta < 0.0 ? 0.5 + k() : theta; }
};

/// Parabolic inflow ramped over the first two seconds.
double inflow_profile(double vbar, double height, double y, double t);

enum class TermGroup { TimeDerivative, Explicit, Pressure, Implicit };

struct MonolithicState {
  std::vector<double> x;
};

struct StateTrajectory {
  TimeGrid grid;
  std::vector<MonolithicState> states;  // N + 1 entries, states[0] = 0
  std::vector<std::vector<double>> newton_residuals;  // per step
};

struct NewtonReport {
  std::vector<double> residuals;
  int backtracks = 0;
  bool converged = false;
};

struct NewtonError : std::runtime_error {
  using std::runtime_error::runtime_error;
  std::vector<double> residuals;
};

/// Monolithic FSI system on a fixed shape reference mesh: Taylor-Hood
/// velocity/pressure plus P2 displacement and auxiliary extension variable on
/// the whole domain. Assembles the theta-scheme step residual, its exact
/// Jacobian, and the partial derivatives needed by the reverse-time adjoint.
class FsiSystem {
 public:
  FsiSystem(const Mesh& mesh, PhysicalParams phys, CouplingParams coupling);
  ~FsiSystem();

  const Mesh& mesh() const { return *mesh_; }
  const PhysicalParams& physical() const { return phys_; }
  const CouplingParams& coupling() const { return coupling_; }
  const Space& velocity_space() const { return *v_space_; }
  const Space& pressure_space() const { return *p_space_; }

  int n_dofs() const { return n_total_; }
  int v_dof(int p2_node, int comp) const { return 2 * p2_node + comp; }
  int p_dof(int p1_node) const { return off_p_ + p1_node; }
  int w_dof(int p2_node, int comp) const { return off_w_ + 2 * p2_node + comp; }
  int z_dof(int p2_node, int comp) const { return off_z_ + 2 * p2_node + comp; }

  MonolithicState zero_state() const { return {std::vector<double>(n_total_, 0.0)}; }
  /// Overwrite the Dirichlet rows of a state with the boundary data at time t.
  void impose_dirichlet(MonolithicState& y, double t) const;
  std::span<const int> dirichlet_dofs() const { return bc_dofs_; }

  /// Interface cutoff field (P1 scalar: 0 at interface vertices, 1 elsewhere).
  const FEField& cutoff() const { return iota_; }
  /// Drag test field: unit horizontal trace on the wetted obstacle boundary,
  /// harmonically extended one cell layer, zero beyond (P2 scalar).
  const FEField& drag_test_field() const { return psi_; }

  /// Combined step residual at time t_j; Dirichlet rows are zeroed (the state
  /// is assumed to satisfy the boundary data).
  std::vector<double> step_residual(const MonolithicState& y, const MonolithicState& y_prev,
                                    const Transformation& tau, double k, double theta,
                                    double t, double t_prev) const;
  /// One of the four term groups applied to all test functions (the
  /// time-derivative group uses the difference quotients with step k).
  std::vector<double> group_residual(TermGroup group, const MonolithicState& y,
                                     const MonolithicState& y_prev, const Transformation& tau,
                                     double k, double theta, double t) const;
  /// Exact Jacobian of step_residual w.r.t. y, Dirichlet rows eliminated.
  CsrMatrix step_jacobian(const MonolithicState& y, const MonolithicState& y_prev,
                          const Transformation& tau, double k, double theta, double t,
                          double t_prev) const;
  /// (d step_residual / d y_prev)^T lambda.
  std::vector<double> step_dprev_transpose(const MonolithicState& y,
                                           const MonolithicState& y_prev,
                                           const Transformation& tau, double k, double theta,
                                           double t, double t_prev,
                                           std::span<const double> lambda) const;
  /// (d step_residual / d u_tau)^T lambda, over the P1 displacement dofs.
  std::vector<double> step_dtau_transpose(const MonolithicState& y,
                                          const MonolithicState& y_prev,
                                          const Transformation& tau, double k, double theta,
                                          double t, double t_prev,
                                          std::span<const double> lambda) const;
  /// Forward action (d step_residual / d u_tau) delta_u (sensitivity checks).
  std::vector<double> step_dtau_apply(const MonolithicState& y, const MonolithicState& y_prev,
                                      const Transformation& tau, double k, double theta,
                                      double t, double t_prev,
                                      std::span<const double> delta_u) const;

  NewtonReport theta_step(MonolithicState& y, const MonolithicState& y_prev,
                          const Transformation& tau, double t, double k, double theta) const;

  StateTrajectory simulate(const Transformation& tau, const TimeGrid& grid) const;

  /// P2 evaluation of the displacement field at a reference point.
  Vec2d probe_displacement(const MonolithicState& y, Vec2d point) const;
  /// P1 evaluation of a transformation's displacement at a reference point.
  Vec2d probe_map(const Transformation& tau, Vec2d point) const;

  double newton_tolerance = 1e-9;
  int newton_max_iterations = 20;
  int newton_max_backtracks = 8;

 private:
  struct AssemblyCache;
  void build_drag_field();

  const Mesh* mesh_;
  PhysicalParams phys_;
  CouplingParams coupling_;
  std::unique_ptr<Space> v_space_;   // P2 vector
  std::unique_ptr<Space> p_space_;   // P1 scalar
  std::unique_ptr<Space> s2_space_;  // P2 scalar (drag test field)
  int off_p_ = 0, off_w_ = 0, off_z_ = 0, n_total_ = 0;

  std::vector<int> bc_dofs_;  // sorted
  std::vector<Vec2d> bc_points_;
  std::vector<int> bc_comps_;   // 0/1 velocity component, -1: homogeneous w
  std::vector<int> bc_inflow_;  // 1 if the dof carries the inflow profile
  double channel_height_ = 0.41;

  FEField iota_;
  FEField psi_;
  std::unique_ptr<AssemblyCache> cache_;

  friend class DragObjective;
};

/// Checkpoint dumps of trajectory states (ASCII: header with N, k and space
/// sizes, then one coefficient array per stored index).
void save_trajectory_checkpoints(const StateTrajectory& traj, int interval,
                                 const std::string& path);
StateTrajectory load_trajectory_checkpoints(const std::string& path);

}  // namespace fsikit
