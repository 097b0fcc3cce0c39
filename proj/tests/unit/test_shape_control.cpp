#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "fsikit/meshgen.hpp"
#include "fsikit/shape_control.hpp"

using namespace fsikit;

namespace {

ShapeControlParams disk_params(double beta = 0.01) {
  ShapeControlParams p;
  p.beta = beta;
  p.design_tag = FacetTag::GammaFDc;
  return p;
}

}  // namespace

TEST_CASE("smooth_beta: constant cases") {
  // open curve with beta = 1: boundary value equals the forcing fixed point
  const Mesh strip = rect_mesh(20, 1, {0, 0}, {1.0, 0.05});
  ShapeControlParams p;
  p.beta = 1.0;
  p.design_tag = FacetTag::GammaFD0;  // bottom+top are two chains -> invalid; use inflow edge
  p.design_tag = FacetTag::GammaFDi;
  const ShapeController ctrl(strip, p);
  for (double v : ctrl.smooth_beta().coeffs) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  // closed curve: no boundary, constant solution beta
  const Mesh disk = disk_mesh(48);
  const ShapeController dctrl(disk, disk_params(0.37));
  for (double v : dctrl.smooth_beta().coeffs) CHECK(v == doctest::Approx(0.37).epsilon(1e-13));
}

TEST_CASE("smooth_beta matches the analytic two-point boundary value problem") {
  // straight segment of length 1 with 200 elements along the bottom wall
  Mesh strip = rect_mesh(200, 1, {0, 0}, {1.0, 0.005});
  // retag so that exactly the bottom edge carries the design tag
  for (auto& f : strip.facets) {
    const Vec2d a = strip.vertices[f.v0], b = strip.vertices[f.v1];
    if (std::abs(a.y) < 1e-12 && std::abs(b.y) < 1e-12) f.tag = FacetTag::GammaFDc;
  }
  strip.finalize();
  ShapeControlParams p;
  p.beta = 0.01;
  p.design_tag = FacetTag::GammaFDc;
  const ShapeController ctrl(strip, p);
  const auto& curve = ctrl.design_curve();
  REQUIRE(curve.n_vertices() == 201);
  const double beta = p.beta;
  auto exact = [&](double s) {
    return beta + (1.0 - beta) * std::cosh((s - 0.5) / std::sqrt(beta)) /
                      std::cosh(0.5 / std::sqrt(beta));
  };
  const auto& bf = ctrl.smooth_beta();
  for (int i = 0; i < curve.n_vertices(); ++i) {
    const double s = curve.arclength[i];
    CHECK(bf.coeffs[i] == doctest::Approx(exact(s)).epsilon(0).scale(1).epsilon(1e-3));
  }
  // value at the midpoint, quoted against the closed form
  const int mid = 100;
  CHECK(std::abs(bf.coeffs[mid] - exact(0.5)) < 1e-3);
  CHECK(exact(0.5) == doctest::Approx(0.01 + 0.99 / std::cosh(5.0)).epsilon(1e-12));
}

TEST_CASE("laplace_beltrami_lift: zero control, circle harmonics, linearity") {
  const Mesh disk = disk_mesh(256);
  const double beta = 0.05;
  const ShapeController ctrl(disk, disk_params(beta));
  const int n = ctrl.n_controls();

  const std::vector<double> zero(n, 0.0);
  for (double v : ctrl.laplace_beltrami_lift(zero).coeffs) CHECK(std::abs(v) < 1e-15);

  // d = 1 on the closed unit circle: b = n / (1 + beta)
  const std::vector<double> ones(n, 1.0);
  const FEField b = ctrl.laplace_beltrami_lift(ones);
  const auto& curve = ctrl.design_curve();
  for (int i = 0; i < n; ++i) {
    const Vec2d nrm = curve.vertex_normal[i];
    CHECK(std::abs(b.coeffs[2 * i] - nrm.x / (1.0 + beta)) < 1e-3);
    CHECK(std::abs(b.coeffs[2 * i + 1] - nrm.y / (1.0 + beta)) < 1e-3);
  }

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d1(n), d2(n), dsum(n);
  for (int i = 0; i < n; ++i) {
    d1[i] = dist(rng);
    d2[i] = dist(rng);
    dsum[i] = d1[i] + d2[i];
  }
  const auto b1 = ctrl.laplace_beltrami_lift(d1);
  const auto b2 = ctrl.laplace_beltrami_lift(d2);
  const auto bs = ctrl.laplace_beltrami_lift(dsum);
  for (size_t i = 0; i < bs.coeffs.size(); ++i)
    CHECK(bs.coeffs[i] == doctest::Approx(b1.coeffs[i] + b2.coeffs[i]).epsilon(1e-13));
}

TEST_CASE("elastic_extension: zero load, linearity, dense oracle on 8 cells") {
  const Mesh mesh = rect_mesh(2, 2);
  ShapeControlParams p;
  p.design_tag = FacetTag::GammaFDi;
  const ShapeController ctrl(mesh, p);

  const std::vector<double> zero(ctrl.n_controls(), 0.0);
  const Transformation tau0 = ctrl.apply_B(zero);
  for (double v : tau0.u_tau.coeffs) CHECK(std::abs(v) < 1e-15);

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d1(ctrl.n_controls()), d2(ctrl.n_controls()), ds(ctrl.n_controls());
  for (int i = 0; i < ctrl.n_controls(); ++i) {
    d1[i] = dist(rng);
    d2[i] = dist(rng);
    ds[i] = d1[i] + d2[i];
  }
  const auto u1 = ctrl.apply_B(d1).u_tau.coeffs;
  const auto u2 = ctrl.apply_B(d2).u_tau.coeffs;
  const auto us = ctrl.apply_B(ds).u_tau.coeffs;
  for (size_t i = 0; i < us.size(); ++i)
    CHECK(us[i] == doctest::Approx(u1[i] + u2[i]).epsilon(1e-13));

  // dense oracle: independently assembled discrete system for a unit Neumann
  // load on the design edge; the controller's solution must satisfy it
  const FEField b = ctrl.laplace_beltrami_lift(d1);
  const auto u = ctrl.elastic_extension(b).u_tau.coeffs;
  const int nd = 2 * mesh.n_vertices();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nd, nd);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto g = mesh.barycentric_gradients(c);
    const double area = mesh.cell_area(c);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb) {
            double v = g[i][bb] * g[j][a];
            if (a == bb) v += dot(g[i], g[j]);
            k(2 * mesh.cells[c][i] + a, 2 * mesh.cells[c][j] + bb) += area * v;
          }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nd);
  const auto& curve = ctrl.design_curve();
  for (int s = 0; s < curve.n_segments(); ++s) {
    const auto [ia, ib] = curve.segment_vertices(s);
    const int va = curve.chain_vertices[ia], vb = curve.chain_vertices[ib];
    const double len = norm(mesh.vertices[va] - mesh.vertices[vb]);
    for (int c = 0; c < 2; ++c) {
      const double ba = b.coeffs[2 * ia + c], bbv = b.coeffs[2 * ib + c];
      rhs(2 * va + c) += len / 6.0 * (2.0 * ba + bbv);
      rhs(2 * vb + c) += len / 6.0 * (ba + 2.0 * bbv);
    }
  }
  // Dirichlet: everything except interior design-curve nodes
  std::vector<char> fixed(nd, 1);
  for (int i = 1; i + 1 < curve.n_vertices(); ++i) {
    fixed[2 * curve.chain_vertices[i]] = 0;
    fixed[2 * curve.chain_vertices[i] + 1] = 0;
  }
  // interior vertices of the mesh are free as well
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    bool on_boundary = false;
    for (const auto& f : mesh.facets)
      if (f.v0 == v || f.v1 == v) on_boundary = true;
    if (!on_boundary) fixed[2 * v] = fixed[2 * v + 1] = 0;
  }
  double residual = 0.0;
  for (int r = 0; r < nd; ++r) {
    if (fixed[r]) {
      CHECK(std::abs(u[r]) < 1e-14);
      continue;
    }
    double kr = 0.0;
    for (int cc = 0; cc < nd; ++cc) kr += k(r, cc) * u[cc];
    residual = std::max(residual, std::abs(kr - rhs(r)));
  }
  CHECK(residual < 1e-12);
}

TEST_CASE("apply_B: scaling and positive determinant on the fsi2 design curve") {
  ChannelSpec spec;
  spec.h_near = 0.014;
  spec.h_flap = 0.035;
  spec.h_far = 0.26;
  const Mesh mesh = channel_mesh(spec);
  const ShapeController ctrl(mesh, disk_params(0.01));

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d(ctrl.n_controls()), d3(ctrl.n_controls());
  for (int i = 0; i < ctrl.n_controls(); ++i) {
    d[i] = 1e-3 * dist(rng);
    d3[i] = -2.5 * d[i];
  }
  const auto u = ctrl.apply_B(d).u_tau.coeffs;
  const auto u3 = ctrl.apply_B(d3).u_tau.coeffs;
  for (size_t i = 0; i < u.size(); ++i)
    CHECK(u3[i] == doctest::Approx(-2.5 * u[i]).epsilon(1e-12));

  CHECK(min_cell_det(mesh, u) > 0.0);
}

TEST_CASE("det_penalty values") {
  const Mesh mesh = rect_mesh(3, 3);  // unit area
  ShapeControlParams p;
  p.design_tag = FacetTag::GammaFDi;
  p.gamma_p = 1e-3;
  p.eta_ext = 0.2;
  const ShapeController ctrl(mesh, p);

  Transformation tau;
  tau.u_tau = FEField(ctrl.displacement_space());
  CHECK(ctrl.det_penalty(tau) == doctest::Approx(1.25e-3).epsilon(1e-13));

  // uniform shear keeps det = 1
  for (int v = 0; v < mesh.n_vertices(); ++v)
    tau.u_tau.coeffs[2 * v] = 0.5 * mesh.vertices[v].y;
  CHECK(ctrl.det_penalty(tau) == doctest::Approx(1.25e-3).epsilon(1e-12));

  // compress one corner cell below the threshold
  Transformation bad;
  bad.u_tau = FEField(ctrl.displacement_space());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    bad.u_tau.coeffs[2 * v] = -0.9 * mesh.vertices[v].x;  // det = 0.1
  }
  CHECK(ctrl.det_penalty(bad) == kInfeasiblePenalty);
  for (double gcomp : ctrl.det_penalty_gradient_u(bad)) CHECK(gcomp == 0.0);
}

TEST_CASE("geometric constraints: zero at identity, affine volume, oracle") {
  const Mesh mesh = rect_mesh(4, 4);
  ShapeControlParams p;
  p.design_tag = FacetTag::GammaFDi;
  const ShapeController ctrl(mesh, p);

  Transformation tau;
  tau.u_tau = FEField(ctrl.displacement_space());
  const auto g0 = ctrl.geometric_constraints(tau);
  for (double v : g0.g) CHECK(v == 0.0);

  // affine compression (x,y) -> (0.9 x, y): det = 0.9 everywhere
  for (int v = 0; v < mesh.n_vertices(); ++v) tau.u_tau.coeffs[2 * v] = -0.1 * mesh.vertices[v].x;
  const auto g = ctrl.geometric_constraints(tau);
  CHECK(g.g[0] == doctest::Approx(-0.1 * 1.0).epsilon(1e-13));

  // random displacement: volume row equals the deformed-vertex area oracle
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dist(-0.01, 0.01);
  for (auto& v : tau.u_tau.coeffs) v = dist(rng);
  const auto gr = ctrl.geometric_constraints(tau);
  double deformed_area = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    Vec2d q[3];
    for (int i = 0; i < 3; ++i) {
      const int v = mesh.cells[c][i];
      q[i] = {mesh.vertices[v].x + tau.u_tau.coeffs[2 * v],
              mesh.vertices[v].y + tau.u_tau.coeffs[2 * v + 1]};
    }
    deformed_area += 0.5 * cross(q[1] - q[0], q[2] - q[0]);
  }
  CHECK(gr.g[0] == doctest::Approx(deformed_area - 1.0).epsilon(1e-12));
}

TEST_CASE("penalty and constraint gradients match central differences") {
  ChannelSpec spec;
  spec.with_flap = false;
  spec.length = 1.1;
  spec.h_near = 0.02;
  spec.h_far = 0.12;
  const Mesh mesh = channel_mesh(spec);
  const ShapeController ctrl(mesh, disk_params(0.02));
  const int n = ctrl.n_controls();

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d(n), delta(n);
  for (int i = 0; i < n; ++i) {
    d[i] = 2e-3 * dist(rng);
    delta[i] = dist(rng);
  }

  auto penalty_of = [&](const std::vector<double>& dd) {
    return ctrl.det_penalty(ctrl.apply_B(dd));
  };
  const Transformation tau = ctrl.apply_B(d);
  const auto gp = ctrl.det_penalty_gradient_d(tau);
  double gdot = 0.0;
  for (int i = 0; i < n; ++i) gdot += gp[i] * delta[i];

  // second-order Taylor remainder decay of the central difference
  double prev = 0.0;
  const double floor = 1e-10 * (std::abs(gdot) + 1.0);
  for (int k = 0; k < 3; ++k) {
    const double h = 2e-2 / (1 << k);
    std::vector<double> dp(d), dm(d);
    for (int i = 0; i < n; ++i) {
      dp[i] += h * delta[i];
      dm[i] -= h * delta[i];
    }
    const double fd = (penalty_of(dp) - penalty_of(dm)) / (2.0 * h);
    const double err = std::abs(fd - gdot);
    if (k > 0) CHECK((err < 0.35 * prev || err < floor));  // ~ h^2 decay
    prev = err;
  }

  const auto jac = ctrl.constraint_jacobian_d(tau);
  for (int row = 0; row < ctrl.n_constraints(); ++row) {
    double jdot = 0.0;
    for (int i = 0; i < n; ++i) jdot += jac[row][i] * delta[i];
    const double h = 1e-5;
    std::vector<double> dp(d), dm(d);
    for (int i = 0; i < n; ++i) {
      dp[i] += h * delta[i];
      dm[i] -= h * delta[i];
    }
    const double fd = (ctrl.geometric_constraints(ctrl.apply_B(dp)).g[row] -
                       ctrl.geometric_constraints(ctrl.apply_B(dm)).g[row]) /
                      (2.0 * h);
    CHECK(fd == doctest::Approx(jdot).epsilon(1e-6));
  }
}

TEST_CASE("mass matrix S and its Cholesky factor") {
  // single tagged edge of length L = 0.7: S = L/6 [[2,1],[1,2]]
  const Mesh mesh = rect_mesh(1, 1, {0, 0}, {0.3, 0.7});
  ShapeControlParams p;
  p.design_tag = FacetTag::GammaFDi;
  const ShapeController ctrl(mesh, p);
  const auto& s = ctrl.mass_matrix_S();
  REQUIRE(s.rows() == 2);
  const double L = 0.7;
  CHECK(s.entry(0, 0) == doctest::Approx(L / 3.0).epsilon(1e-14));
  CHECK(s.entry(0, 1) == doctest::Approx(L / 6.0).epsilon(1e-14));
  CHECK(s.entry(1, 1) == doctest::Approx(L / 3.0).epsilon(1e-14));
  const CsrMatrix u = ctrl.cholesky_S().factor_csr();
  CHECK(u.entry(0, 0) == doctest::Approx(std::sqrt(L / 3.0)).epsilon(1e-13));
  CHECK(u.entry(1, 0) == 0.0);  // upper triangular
}

TEST_CASE("breve maps on the fsi2 design curve") {
  ChannelSpec spec;
  spec.h_near = 0.014;
  spec.h_flap = 0.035;
  spec.h_far = 0.26;
  const Mesh mesh = channel_mesh(spec);
  const ShapeController ctrl(mesh, disk_params(0.01));
  const int n = ctrl.n_controls();
  const auto& s = ctrl.mass_matrix_S();

  // factor identity: ||U^T U - S||_F <= 1e-13 ||S||_F
  const CsrMatrix u = ctrl.cholesky_S().factor_csr();
  const CsrMatrix ut = u.transposed();
  double defect = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double utu = 0.0;
      for (int k = 0; k < n; ++k) utu += ut.entry(r, k) * u.entry(k, c);
      defect += (utu - s.entry(r, c)) * (utu - s.entry(r, c));
    }
  CHECK(std::sqrt(defect) <= 1e-13 * s.frobenius_norm());

  std::mt19937 rng(41);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d(n);
  for (auto& v : d) v = dist(rng);

  // round trip and norm identity d^T S d = ||d_breve||^2
  const auto db = ctrl.to_breve(d);
  const auto back = ctrl.from_breve(db);
  double norm2 = 0.0, dsd = 0.0;
  const auto sd = s.multiply(d);
  for (int i = 0; i < n; ++i) {
    CHECK(back[i] == doctest::Approx(d[i]).epsilon(1e-13));
    norm2 += db[i] * db[i];
    dsd += d[i] * sd[i];
  }
  CHECK(norm2 == doctest::Approx(dsd).epsilon(1e-13));

  // ||d||^2_L2 against a quadrature oracle
  double quad_norm = 0.0;
  const auto& curve = ctrl.design_curve();
  for (int seg = 0; seg < curve.n_segments(); ++seg) {
    const auto [ia, ib] = curve.segment_vertices(seg);
    const double len = curve.segment_length(seg);
    for (const auto& qp : seg_quadrature(3)) {
      const double val = (1.0 - qp.t) * d[ia] + qp.t * d[ib];
      quad_norm += qp.w * len * val * val;
    }
  }
  CHECK(dsd == doctest::Approx(quad_norm).epsilon(1e-12));

  // steepest-descent equivalence: one unit step in breve coordinates equals
  // the Riesz-gradient step in d coordinates
  std::vector<double> grad(n);
  for (auto& v : grad) v = dist(rng);
  const double alpha = ctrl.params().alpha;
  // breve step
  std::vector<double> db_next(n);
  const auto pg = ctrl.pullback_gradient(grad);
  for (int i = 0; i < n; ++i) db_next[i] = db[i] - (pg[i] + alpha * db[i]);
  const auto d_next = ctrl.from_breve(db_next);
  // Riesz step
  const auto sinv_g = ctrl.from_breve(ctrl.pullback_gradient(grad));
  for (int i = 0; i < n; ++i) {
    const double expected = d[i] - (sinv_g[i] + alpha * d[i]);
    CHECK(d_next[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}
