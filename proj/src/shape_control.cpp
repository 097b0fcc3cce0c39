#include "fsikit/shape_control.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fsikit/dual.hpp"
#include "fsikit/quadrature.hpp"

namespace fsikit {

namespace {

// Constraint integrals use the degree-2 rule throughout so that the
// references computed at u = 0 cancel exactly.
constexpr int kConstraintQuadDegree = 2;

}  // namespace

ShapeController::~ShapeController() = default;
ShapeController::ShapeController(ShapeController&&) noexcept = default;

int ShapeController::n_controls() const { return curve_->n_vertices(); }

ShapeController::ShapeController(const Mesh& mesh, ShapeControlParams params)
    : mesh_(&mesh), params_(std::move(params)) {
  curve_ = std::make_shared<CurveMesh>(extract_curve(mesh, params_.design_tag));
  control_space_ = std::make_unique<Space>(Space::curve(*curve_, Family::P1, 1));
  curve_vec_space_ = std::make_unique<Space>(Space::curve(*curve_, Family::P1, 2));
  vol_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P1, 2));

  if (!curve_->closed) lb_dirichlet_ = {0, curve_->n_vertices() - 1};

  // S and its Cholesky factor (chain ordering keeps the factor banded)
  s_matrix_ = assemble_form(FormKind::CurveMass, *control_space_, *control_space_);
  s_factor_ = std::make_unique<CholeskyFactor>(s_matrix_);

  // regularized weight field beta~: -beta Lap_G beta~ + beta~ = beta,
  // beta~ = 1 on the curve endpoints; constant beta on closed curves
  beta_field_ = FEField(*control_space_);
  if (curve_->closed) {
    std::fill(beta_field_.coeffs.begin(), beta_field_.coeffs.end(), params_.beta);
  } else {
    CsrMatrix op = assemble_form(FormKind::CurveStiffness, *control_space_, *control_space_);
    for (auto& v : op.values()) v *= params_.beta;
    const CsrMatrix m = assemble_form(FormKind::CurveMass, *control_space_, *control_space_);
    std::vector<Triplet> trip;
    for (int r = 0; r < op.rows(); ++r)
      for (int k = op.row_ptr()[r]; k < op.row_ptr()[r + 1]; ++k)
        trip.push_back({r, op.col_idx()[k], op.values()[k]});
    for (int r = 0; r < m.rows(); ++r)
      for (int k = m.row_ptr()[r]; k < m.row_ptr()[r + 1]; ++k)
        trip.push_back({r, m.col_idx()[k], m.values()[k]});
    CsrMatrix sys = CsrMatrix::from_triplets(op.rows(), op.cols(), std::move(trip));
    std::vector<double> ones(control_space_->n_dofs(), params_.beta);
    std::vector<double> rhs = m.multiply(ones);
    const std::vector<double> bc_vals(lb_dirichlet_.size(), 1.0);
    sys.eliminate_dirichlet(lb_dirichlet_, bc_vals, rhs);
    beta_field_.coeffs = solve_sparse(sys, rhs);
  }

  // Laplace-Beltrami operator with the beta~ coefficient
  {
    const FEField* coef[] = {&beta_field_};
    CsrMatrix stiff =
        assemble_form(FormKind::CurveStiffness, *control_space_, *control_space_, coef);
    const CsrMatrix m = assemble_form(FormKind::CurveMass, *control_space_, *control_space_);
    std::vector<Triplet> trip;
    for (int r = 0; r < stiff.rows(); ++r)
      for (int k = stiff.row_ptr()[r]; k < stiff.row_ptr()[r + 1]; ++k)
        trip.push_back({r, stiff.col_idx()[k], stiff.values()[k]});
    for (int r = 0; r < m.rows(); ++r)
      for (int k = m.row_ptr()[r]; k < m.row_ptr()[r + 1]; ++k)
        trip.push_back({r, m.col_idx()[k], m.values()[k]});
    lb_op_ = CsrMatrix::from_triplets(stiff.rows(), stiff.cols(), std::move(trip));
    std::vector<double> dummy(control_space_->n_dofs(), 0.0);
    const std::vector<double> zeros(lb_dirichlet_.size(), 0.0);
    lb_op_.eliminate_dirichlet(lb_dirichlet_, zeros, dummy);
    lb_lu_.factorize(lb_op_);
  }

  // (n_c phi_i, phi_j) coupling for the lift right-hand side
  for (int c = 0; c < 2; ++c) {
    FEField nc(*control_space_);
    for (int i = 0; i < curve_->n_vertices(); ++i) nc.coeffs[i] = curve_->vertex_normal[i][c];
    const FEField* coef[] = {&nc};
    normal_mass_[c] =
        assemble_form(FormKind::CurveMass, *control_space_, *control_space_, coef);
  }

  // elastic extension operator
  {
    const bool interface_design = params_.design_tag == FacetTag::GammaI;
    const CellFilter filter = interface_design ? CellFilter::All : CellFilter::Fluid;
    ext_op_ =
        assemble_form(FormKind::Elasticity, *vol_space_, *vol_space_, {}, 2, filter).with_diagonal();

    std::set<int> fixed_nodes;
    std::vector<FacetTag> fixed_tags;
    for (FacetTag t : {FacetTag::GammaFDi, FacetTag::GammaFD0, FacetTag::GammaFN,
                       FacetTag::GammaFDc, FacetTag::GammaSDc, FacetTag::GammaI})
      if (t != params_.design_tag && mesh.has_tag(t)) fixed_tags.push_back(t);
    for (int n : nodes_on_tags(*vol_space_, fixed_tags)) fixed_nodes.insert(n);
    if (!interface_design) {
      // the deformation vanishes identically on the solid subdomain
      std::vector<char> in_fluid(mesh.n_vertices(), 0);
      for (int c = 0; c < mesh.n_cells(); ++c)
        if (mesh.cell_subdomain[c] == Subdomain::Fluid)
          for (int v : mesh.cells[c]) in_fluid[v] = 1;
      for (int v = 0; v < mesh.n_vertices(); ++v)
        if (!in_fluid[v]) fixed_nodes.insert(v);
    }
    // design-curve endpoints stay pinned
    if (!curve_->closed) {
      fixed_nodes.insert(curve_->chain_vertices.front());
      fixed_nodes.insert(curve_->chain_vertices.back());
    }
    for (int n : fixed_nodes) {
      ext_dirichlet_.push_back(vol_space_->dof(n, 0));
      ext_dirichlet_.push_back(vol_space_->dof(n, 1));
    }
    std::sort(ext_dirichlet_.begin(), ext_dirichlet_.end());

    std::vector<double> dummy(vol_space_->n_dofs(), 0.0);
    const std::vector<double> zeros(ext_dirichlet_.size(), 0.0);
    ext_op_.eliminate_dirichlet(ext_dirichlet_, zeros, dummy);
    ext_lu_.factorize(ext_op_);

    trace_ = assemble_trace_mass(*vol_space_, *curve_vec_space_);
  }

  // constraint references at u = 0
  {
    ref_volume_ = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c)
      if (params_.barycenter_constraints || mesh.cell_subdomain[c] == Subdomain::Solid)
        ref_volume_ += mesh.cell_area(c);

    const auto quad = tri_quadrature(kConstraintQuadDegree);
    domain_moment_ = {0, 0};
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const auto& t = mesh.cells[c];
      const Vec2d p0 = mesh.vertices[t[0]], p1 = mesh.vertices[t[1]], p2 = mesh.vertices[t[2]];
      for (const auto& qp : quad) {
        const Vec2d p{p0.x + (p1.x - p0.x) * qp.xi + (p2.x - p0.x) * qp.eta,
                      p0.y + (p1.y - p0.y) * qp.xi + (p2.y - p0.y) * qp.eta};
        domain_moment_ += (qp.w * 2.0 * mesh.cell_area(c)) * p;
      }
    }

    // Obstacle volume and moment from the rim polygon via the divergence
    // theorem. Rim facet normals point out of the meshed domain, i.e. into
    // the obstacle, so the obstacle's outward normal is their negative.
    obstacle_volume_ = 0.0;
    obstacle_moment_ = {0, 0};
    const auto seg_quad = seg_quadrature(2);
    for (int fi = 0; fi < static_cast<int>(mesh.facets.size()); ++fi) {
      const auto& f = mesh.facets[fi];
      if (f.tag != FacetTag::GammaFDc && f.tag != FacetTag::GammaSDc) continue;
      const Vec2d a = mesh.vertices[f.v0], b = mesh.vertices[f.v1];
      const Vec2d n = -1.0 * mesh.facet_normal(fi);
      const double len = norm(b - a);
      for (const auto& qp : seg_quad) {
        const Vec2d p{a.x + (b.x - a.x) * qp.t, a.y + (b.y - a.y) * qp.t};
        const double w = qp.w * len;
        obstacle_volume_ += 0.5 * w * dot(p, n);
        obstacle_moment_.x += 0.5 * w * p.x * p.x * n.x;
        obstacle_moment_.y += 0.5 * w * p.y * p.y * n.y;
      }
    }
    if (obstacle_volume_ <= 0.0) {  // meshes without a carved obstacle
      obstacle_volume_ = 1.0;
      obstacle_moment_ = {0, 0};
    }
  }
}

std::vector<double> ShapeController::pinned_controls(std::span<const double> d) const {
  std::vector<double> dd(d.begin(), d.end());
  for (int i : lb_dirichlet_) dd[i] = 0.0;
  return dd;
}

FEField ShapeController::laplace_beltrami_lift(std::span<const double> d) const {
  const auto dd = pinned_controls(d);
  FEField b(*curve_vec_space_);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> rhs = normal_mass_[c].multiply(dd);
    for (int i : lb_dirichlet_) rhs[i] = 0.0;
    const auto bc = lb_lu_.solve(rhs);
    for (int i = 0; i < curve_->n_vertices(); ++i) b.coeffs[curve_vec_space_->dof(i, c)] = bc[i];
  }
  return b;
}

Transformation ShapeController::elastic_extension(const FEField& b) const {
  std::vector<double> rhs = trace_.multiply(b.coeffs);
  for (int dof : ext_dirichlet_) rhs[dof] = 0.0;
  Transformation tau;
  tau.u_tau = FEField(*vol_space_);
  tau.u_tau.coeffs = ext_lu_.solve(rhs);
  return tau;
}

Transformation ShapeController::apply_B(std::span<const double> d) const {
  Transformation tau = elastic_extension(laplace_beltrami_lift(d));
  tau.provenance.assign(d.begin(), d.end());
  return tau;
}

std::vector<double> ShapeController::apply_B_transpose(std::span<const double> grad_u) const {
  // transpose of: d -> rhs_c = M_n d -> b_c = L^{-1} rhs_c -> rhs_u = T b
  //               -> u = A^{-1} rhs_u       (A, L symmetric)
  std::vector<double> gu(grad_u.begin(), grad_u.end());
  for (int dof : ext_dirichlet_) gu[dof] = 0.0;
  const auto w = ext_lu_.solve_transpose(gu);
  const auto gb = trace_.multiply_transpose(w);
  std::vector<double> grad_d(n_controls(), 0.0);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> gbc(curve_->n_vertices());
    for (int i = 0; i < curve_->n_vertices(); ++i) gbc[i] = gb[curve_vec_space_->dof(i, c)];
    for (int i : lb_dirichlet_) gbc[i] = 0.0;
    const auto lam = lb_lu_.solve_transpose(gbc);
    const auto add = normal_mass_[c].multiply_transpose(lam);
    for (int i = 0; i < n_controls(); ++i) grad_d[i] += add[i];
  }
  for (int i : lb_dirichlet_) grad_d[i] = 0.0;
  return grad_d;
}

namespace {

template <class T>
T cell_det(const Mesh& mesh, int cell, const T* u_loc) {
  const auto grads = mesh.barycentric_gradients(cell);
  Mat2<T> g = Mat2<T>::identity();
  for (int i = 0; i < 3; ++i) {
    g(0, 0) += u_loc[2 * i] * grads[i].x;
    g(0, 1) += u_loc[2 * i] * grads[i].y;
    g(1, 0) += u_loc[2 * i + 1] * grads[i].x;
    g(1, 1) += u_loc[2 * i + 1] * grads[i].y;
  }
  return det(g);
}

}  // namespace

double ShapeController::det_penalty(const Transformation& tau) const {
  const auto& u = tau.u_tau.coeffs;
  double sum = 0.0;
  for (int c = 0; c < mesh_->n_cells(); ++c) {
    double ul[6];
    for (int i = 0; i < 3; ++i) {
      ul[2 * i] = u[2 * mesh_->cells[c][i]];
      ul[2 * i + 1] = u[2 * mesh_->cells[c][i] + 1];
    }
    const double d = cell_det(*mesh_, c, ul);
    if (d <= params_.eta_ext) return kInfeasiblePenalty;
    sum += mesh_->cell_area(c) / (d - params_.eta_ext);
  }
  return params_.gamma_p * sum;
}

std::vector<double> ShapeController::det_penalty_gradient_u(const Transformation& tau) const {
  std::vector<double> grad(vol_space_->n_dofs(), 0.0);
  if (det_penalty(tau) >= kInfeasiblePenalty) return grad;  // zero by convention
  const auto& u = tau.u_tau.coeffs;
  for (int c = 0; c < mesh_->n_cells(); ++c) {
    Dual<6> ul[6];
    for (int i = 0; i < 3; ++i) {
      ul[2 * i] = Dual<6>::seeded(u[2 * mesh_->cells[c][i]], 2 * i);
      ul[2 * i + 1] = Dual<6>::seeded(u[2 * mesh_->cells[c][i] + 1], 2 * i + 1);
    }
    const Dual<6> val = mesh_->cell_area(c) / (cell_det(*mesh_, c, ul) - params_.eta_ext);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 2; ++k)
        grad[vol_space_->dof(mesh_->cells[c][i], k)] += params_.gamma_p * val.d[2 * i + k];
  }
  return grad;
}

std::vector<double> ShapeController::det_penalty_gradient_d(const Transformation& tau) const {
  return apply_B_transpose(det_penalty_gradient_u(tau));
}

ConstraintValue ShapeController::geometric_constraints(const Transformation& tau) const {
  const auto& u = tau.u_tau.coeffs;
  const auto quad = tri_quadrature(kConstraintQuadDegree);
  double vol = 0.0;
  Vec2d moment{0, 0};
  for (int c = 0; c < mesh_->n_cells(); ++c) {
    const bool count_vol =
        params_.barycenter_constraints || mesh_->cell_subdomain[c] == Subdomain::Solid;
    double ul[6];
    const auto& t = mesh_->cells[c];
    for (int i = 0; i < 3; ++i) {
      ul[2 * i] = u[2 * t[i]];
      ul[2 * i + 1] = u[2 * t[i] + 1];
    }
    const double d = cell_det(*mesh_, c, ul);
    if (count_vol) vol += mesh_->cell_area(c) * d;
    if (!params_.barycenter_constraints) continue;
    const Vec2d p0 = mesh_->vertices[t[0]], p1 = mesh_->vertices[t[1]], p2 = mesh_->vertices[t[2]];
    for (const auto& qp : quad) {
      const double lam[3] = {1.0 - qp.xi - qp.eta, qp.xi, qp.eta};
      Vec2d z{p0.x + (p1.x - p0.x) * qp.xi + (p2.x - p0.x) * qp.eta,
              p0.y + (p1.y - p0.y) * qp.xi + (p2.y - p0.y) * qp.eta};
      for (int i = 0; i < 3; ++i) {
        z.x += lam[i] * ul[2 * i];
        z.y += lam[i] * ul[2 * i + 1];
      }
      moment += (qp.w * 2.0 * mesh_->cell_area(c) * d) * z;
    }
  }
  ConstraintValue g;
  g.g.push_back(vol - ref_volume_);
  if (params_.barycenter_constraints) {
    const Vec2d c_total = domain_moment_ + obstacle_moment_;
    const Vec2d b_ref = (1.0 / obstacle_volume_) * obstacle_moment_;
    g.g.push_back((c_total.x - moment.x) / obstacle_volume_ - b_ref.x);
    g.g.push_back((c_total.y - moment.y) / obstacle_volume_ - b_ref.y);
  }
  return g;
}

std::vector<std::vector<double>> ShapeController::constraint_jacobian_u(
    const Transformation& tau) const {
  const auto& u = tau.u_tau.coeffs;
  const auto quad = tri_quadrature(kConstraintQuadDegree);
  std::vector<std::vector<double>> jac(n_constraints(),
                                       std::vector<double>(vol_space_->n_dofs(), 0.0));
  for (int c = 0; c < mesh_->n_cells(); ++c) {
    const bool count_vol =
        params_.barycenter_constraints || mesh_->cell_subdomain[c] == Subdomain::Solid;
    const auto& t = mesh_->cells[c];
    Dual<6> ul[6];
    for (int i = 0; i < 3; ++i) {
      ul[2 * i] = Dual<6>::seeded(u[2 * t[i]], 2 * i);
      ul[2 * i + 1] = Dual<6>::seeded(u[2 * t[i] + 1], 2 * i + 1);
    }
    const Dual<6> d = cell_det(*mesh_, c, ul);
    auto scatter = [&](int row, const Dual<6>& v, double scale) {
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k)
          jac[row][vol_space_->dof(t[i], k)] += scale * v.d[2 * i + k];
    };
    if (count_vol) scatter(0, d, mesh_->cell_area(c));
    if (!params_.barycenter_constraints) continue;
    const Vec2d p0 = mesh_->vertices[t[0]], p1 = mesh_->vertices[t[1]], p2 = mesh_->vertices[t[2]];
    for (const auto& qp : quad) {
      const double lam[3] = {1.0 - qp.xi - qp.eta, qp.xi, qp.eta};
      Vec2<Dual<6>> z{Dual<6>(p0.x + (p1.x - p0.x) * qp.xi + (p2.x - p0.x) * qp.eta),
                      Dual<6>(p0.y + (p1.y - p0.y) * qp.xi + (p2.y - p0.y) * qp.eta)};
      for (int i = 0; i < 3; ++i) {
        z.x += lam[i] * ul[2 * i];
        z.y += lam[i] * ul[2 * i + 1];
      }
      const double w = qp.w * 2.0 * mesh_->cell_area(c);
      scatter(1, z.x * d, -w / obstacle_volume_);
      scatter(2, z.y * d, -w / obstacle_volume_);
    }
  }
  return jac;
}

std::vector<std::vector<double>> ShapeController::constraint_jacobian_d(
    const Transformation& tau) const {
  auto ju = constraint_jacobian_u(tau);
  std::vector<std::vector<double>> jd;
  jd.reserve(ju.size());
  for (const auto& row : ju) jd.push_back(apply_B_transpose(row));
  return jd;
}

std::vector<double> ShapeController::to_breve(std::span<const double> d) const {
  return s_factor_->apply(d);
}

std::vector<double> ShapeController::from_breve(std::span<const double> d_breve) const {
  return s_factor_->solve(d_breve);
}

std::vector<double> ShapeController::pullback_gradient(std::span<const double> grad) const {
  return s_factor_->solve_transpose(grad);
}

double ShapeController::regularization(std::span<const double> d) const {
  const auto sd = s_matrix_.multiply(d);
  double v = 0.0;
  for (size_t i = 0; i < sd.size(); ++i) v += d[i] * sd[i];
  return 0.5 * params_.alpha * v;
}

std::vector<double> ShapeController::regularization_gradient(std::span<const double> d) const {
  auto g = s_matrix_.multiply(d);
  for (auto& v : g) v *= params_.alpha;
  return g;
}

}  // namespace fsikit
