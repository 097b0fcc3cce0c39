#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fsikit/fem.hpp"
#include "fsikit/shape_control.hpp"

namespace fsikit {

/// Steady transformed Stokes flow on a fluid-only mesh: Taylor-Hood
/// velocity/pressure, parabolic inflow, do-nothing outflow, no-slip walls and
/// obstacle. The transformation tau = id + u_tau enters through the usual
/// pullback factors; the drag functional is evaluated in volume form (with
/// the fixed test field) and, at tau = id, in surface form as a cross check.
class StokesSystem {
 public:
  StokesSystem(const Mesh& mesh, double mu, double vbar);
  ~StokesSystem();

  const Mesh& mesh() const { return *mesh_; }
  int n_dofs() const { return n_total_; }
  int v_dof(int p2_node, int comp) const { return 2 * p2_node + comp; }
  int p_dof(int p1_node) const { return off_p_ + p1_node; }
  const Space& velocity_space() const { return *v_space_; }
  const Space& pressure_space() const { return *p_space_; }
  const FEField& drag_test_field() const { return psi_; }

  std::vector<double> solve(const Transformation& tau) const;
  /// Residual of the transformed Stokes system at a given state (free rows).
  std::vector<double> residual(std::span<const double> y, const Transformation& tau) const;

  double drag_volume(std::span<const double> y, const Transformation& tau) const;
  /// Boundary-traction drag over the obstacle (reference configuration).
  double drag_surface(std::span<const double> y) const;

  /// Total derivative of the volume drag w.r.t. the u_tau dofs (adjoint).
  std::vector<double> drag_shape_gradient(std::span<const double> y,
                                          const Transformation& tau) const;

 private:
  void build_drag_field();
  const Mesh* mesh_;
  double mu_, vbar_;
  double height_ = 0.0;
  std::unique_ptr<Space> v_space_;
  std::unique_ptr<Space> p_space_;
  std::unique_ptr<Space> s2_space_;
  int off_p_ = 0, n_total_ = 0;
  std::vector<int> bc_dofs_;
  std::vector<double> bc_values_;
  FEField psi_;
};

}  // namespace fsikit
