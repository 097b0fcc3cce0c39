#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fsikit/fem.hpp"
#include "fsikit/mesh.hpp"
#include "fsikit/sparse.hpp"

namespace fsikit {

struct ShapeControlParams {
  double beta = 0.01;      // Laplace-Beltrami weight
  double gamma_p = 1e-3;   // determinant penalty weight
  double eta_ext = 0.2;    // determinant threshold
  double alpha = 0.1;      // control regularization weight
  FacetTag design_tag = FacetTag::GammaFDc;
  bool barycenter_constraints = true;  // volume + barycenter (obstacle case);
                                       // false: solid volume only (interface case)
};

/// tau = id + u_tau with u_tau a P1 vector field on the full mesh, together
/// with the control that produced it.
struct Transformation {
  FEField u_tau;
  std::vector<double> provenance;
};

struct ConstraintValue {
  std::vector<double> g;
};

constexpr double kInfeasiblePenalty = 1e16;

/// Control-to-transformation chain d -> tau = id + B(d): a regularized
/// Laplace-Beltrami lift on the design curve followed by an elastic volume
/// extension, plus the determinant penalty, the geometric constraints and the
/// mass-matrix change of variables. All operators are assembled and factorized
/// once per (mesh, params).
class ShapeController {
 public:
  ShapeController(const Mesh& mesh, ShapeControlParams params);
  ~ShapeController();
  ShapeController(ShapeController&&) noexcept;

  const Mesh& mesh() const { return *mesh_; }
  const ShapeControlParams& params() const { return params_; }
  const CurveMesh& design_curve() const { return *curve_; }
  int n_controls() const;
  int n_constraints() const { return params_.barycenter_constraints ? 3 : 1; }
  const Space& control_space() const { return *control_space_; }
  const Space& displacement_space() const { return *vol_space_; }

  /// H1-regularized weight field on the design curve (cached).
  const FEField& smooth_beta() const { return beta_field_; }
  /// Componentwise Laplace-Beltrami solve of the scalar control against the
  /// vertex normal; zero at curve endpoints.
  FEField laplace_beltrami_lift(std::span<const double> d) const;
  /// Elastic extension of a boundary field into the volume (fluid subdomain
  /// for boundary design, full domain for interface design).
  Transformation elastic_extension(const FEField& b) const;
  Transformation apply_B(std::span<const double> d) const;

  /// Chain-rule pullback: gradient w.r.t. u_tau dofs -> gradient w.r.t. d.
  std::vector<double> apply_B_transpose(std::span<const double> grad_u) const;

  double det_penalty(const Transformation& tau) const;
  /// Gradient of the penalty w.r.t. u_tau dofs; zero at infeasible points.
  std::vector<double> det_penalty_gradient_u(const Transformation& tau) const;
  std::vector<double> det_penalty_gradient_d(const Transformation& tau) const;

  ConstraintValue geometric_constraints(const Transformation& tau) const;
  /// Per-constraint gradients w.r.t. u_tau dofs.
  std::vector<std::vector<double>> constraint_jacobian_u(const Transformation& tau) const;
  std::vector<std::vector<double>> constraint_jacobian_d(const Transformation& tau) const;

  const CsrMatrix& mass_matrix_S() const { return s_matrix_; }
  const CholeskyFactor& cholesky_S() const { return *s_factor_; }
  std::vector<double> to_breve(std::span<const double> d) const;
  std::vector<double> from_breve(std::span<const double> d_breve) const;
  std::vector<double> pullback_gradient(std::span<const double> grad) const;

  /// Regularization alpha/2 d^T S d and its gradient alpha S d.
  double regularization(std::span<const double> d) const;
  std::vector<double> regularization_gradient(std::span<const double> d) const;

 private:
  std::vector<double> pinned_controls(std::span<const double> d) const;

  const Mesh* mesh_;
  ShapeControlParams params_;
  std::shared_ptr<const CurveMesh> curve_;
  std::unique_ptr<Space> control_space_;   // curve P1 scalar
  std::unique_ptr<Space> curve_vec_space_; // curve P1 vector
  std::unique_ptr<Space> vol_space_;       // volume P1 vector

  FEField beta_field_;
  CsrMatrix lb_op_;          // Laplace-Beltrami operator (scalar, with bc rows)
  LuSolver lb_lu_;
  CsrMatrix normal_mass_[2]; // (n_c phi_i, phi_j) on the curve
  CsrMatrix ext_op_;         // elasticity operator with bc rows
  LuSolver ext_lu_;
  CsrMatrix trace_;          // volume x curve coupling on the design curve
  CsrMatrix s_matrix_;
  std::unique_ptr<CholeskyFactor> s_factor_;
  std::vector<int> ext_dirichlet_;  // constrained volume dofs
  std::vector<int> lb_dirichlet_;   // constrained curve scalar nodes

  // references for the geometric constraints, computed at u = 0
  double ref_volume_ = 0.0;
  double obstacle_volume_ = 0.0;
  Vec2d domain_moment_{0, 0};    // integral of z over the meshed domain
  Vec2d obstacle_moment_{0, 0};  // integral of z over the carved obstacle
};

}  // namespace fsikit
