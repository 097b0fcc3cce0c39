#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fsikit/fem.hpp"
#include "fsikit/mesh.hpp"

namespace fsikit {

/// Linear FSI with a stationary interface: Stokes flow coupled to linear
/// elastodynamics on a fixed mixed mesh, homogeneous Dirichlet velocity on
/// the whole outer boundary. The solid displacement is eliminated through
/// its time integral W(v), so the unknowns are a single H1_0 velocity and a
/// fluid pressure.
struct LinearFsiConfig {
  const Mesh* mesh = nullptr;
  double rho_f = 1.0, mu_f = 1.0;
  double rho_s = 1.0, mu_s = 1.0, lambda_s = 1.0;
  double T = 1.0;
  int N = 8;
  double theta = -1.0;  // < 0: shifted Crank-Nicolson 1/2 + k
  std::function<Vec2d(Vec2d, double)> f_f, f_s;
  std::function<Vec2d(Vec2d)> v0;  // compatible: zero trace on the boundary
  std::function<Vec2d(Vec2d)> w0;  // zero on the solid Dirichlet boundary

  double k() const { return T / N; }
  double effective_theta() const { return theta < 0.0 ? 0.5 + k() : theta; }
};

struct LinearTrajectory {
  std::vector<std::vector<double>> v;  // per time node, full P2 vector coeffs
  std::vector<std::vector<double>> p;  // per time node, fluid pressure coeffs
};

struct StructureReport {
  double rel_frobenius_defect = 0.0;
  double max_probe_defect = 0.0;  // scaled by ||A|| ||eta|| ||psi||
  std::map<std::string, double> block_defects;
  bool passed = false;
};

class LinearFsi {
 public:
  explicit LinearFsi(LinearFsiConfig config);

  const LinearFsiConfig& config() const { return config_; }
  int n_velocity_dofs() const;  // free dofs
  int n_pressure_dofs() const;
  int space_time_dofs() const { return (config_.N + 1) * (n_velocity_dofs() + n_pressure_dofs()); }

  LinearTrajectory forward() const;

  /// Discrete W(v): trapezoid time integral of the velocity plus w0, using
  /// the same weights as the forward operator.
  std::vector<std::vector<double>> substitute_w(
      std::span<const std::vector<double>> v_trajectory) const;

  /// Assembles the space-time operator and verifies that its transpose equals
  /// the time-reversed operator. With left_endpoint_bug the inner integral of
  /// the solid form uses a left-endpoint rule, which must break the identity.
  StructureReport adjoint_structure_check(double tolerance,
                                          bool left_endpoint_bug = false) const;

  /// 1/2 rho ||v||^2 + 1/2 a_s(W, W) per time node.
  std::vector<double> energy_history(const LinearTrajectory& traj) const;

  /// L2 norm of a velocity coefficient vector (mass-weighted).
  double velocity_norm(std::span<const double> v) const;

 private:
  LinearFsiConfig config_;
  std::unique_ptr<Space> v_space_;  // P2 vector
  std::unique_ptr<Space> p_space_;  // P1 scalar
  std::vector<int> free_v_;         // free velocity dofs (interior)
  std::vector<int> v_index_;        // dof -> free index or -1
  std::vector<int> p_nodes_;        // fluid-supported P1 nodes
  std::vector<int> p_index_;        // node -> compact index or -1
  CsrMatrix mass_rho_;              // rho-weighted vector mass
  CsrMatrix mass_plain_;
  CsrMatrix a_f_;
  CsrMatrix a_s_;
  CsrMatrix div_;  // (div v, q) over fluid cells, full index spaces

  std::vector<double> interpolate_v(const std::function<Vec2d(Vec2d)>& fn) const;
};

}  // namespace fsikit
