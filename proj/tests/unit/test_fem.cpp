#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "fsikit/fem.hpp"
#include "fsikit/meshgen.hpp"

using namespace fsikit;

TEST_CASE("space sizes on the two-cell unit square") {
  const Mesh mesh = rect_mesh(1, 1);
  const Space p1 = build_space(mesh, Family::P1, 1);
  CHECK(p1.n_dofs() == 4);
  const Space p2v = build_space(mesh, Family::P2, 2);
  CHECK(p2v.n_dofs() == (4 + 5) * 2);
}

TEST_CASE("P2 dof count satisfies the Euler relation on a channel mesh") {
  ChannelSpec spec;
  const Mesh mesh = channel_mesh(spec);
  const Space p2v = build_space(mesh, Family::P2, 2);
  // one hole: V - E + F = 0, so E = V + F and P2 vector dofs = 2(V + E)
  CHECK(mesh.n_edges() == mesh.n_vertices() + mesh.n_cells());
  CHECK(p2v.n_dofs() == 2 * (mesh.n_vertices() + mesh.n_edges()));
  // at the full-scale resolution of 4262 vertices / 8225 cells the same
  // relation predicts 2*(4262 + 4262 + 8225) dofs
  CHECK(2 * (4262 + 4262 + 8225) == 33498);
}

TEST_CASE("mass matrix: row sums are the lumped masses, total is the area") {
  const Mesh mesh = rect_mesh(3, 3);
  const Space p1 = build_space(mesh, Family::P1, 1);
  const CsrMatrix m = assemble_form(FormKind::Mass, p1, p1);
  double total = 0.0;
  std::vector<double> ones(p1.n_dofs(), 1.0);
  const auto row_sums = m.multiply(ones);
  for (double r : row_sums) total += r;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  // lumped mass of a vertex is one third of its adjacent cell area
  std::vector<double> lumped(p1.n_dofs(), 0.0);
  for (int c = 0; c < mesh.n_cells(); ++c)
    for (int v : mesh.cells[c]) lumped[v] += mesh.cell_area(c) / 3.0;
  for (int i = 0; i < p1.n_dofs(); ++i)
    CHECK(row_sums[i] == doctest::Approx(lumped[i]).epsilon(1e-12));
}

TEST_CASE("mass matrices are symmetric positive definite") {
  const Mesh mesh = rect_mesh(4, 3);
  for (Family fam : {Family::P1, Family::P2}) {
    const Space s = build_space(mesh, fam, 1);
    const CsrMatrix m = assemble_form(FormKind::Mass, s, s);
    CHECK(m.symmetry_gap() <= 1e-14);
    CHECK_NOTHROW(CholeskyFactor{m});
  }
}

TEST_CASE("constants lie in the stiffness kernel") {
  const Mesh mesh = rect_mesh(2, 2);
  const Space p1 = build_space(mesh, Family::P1, 1);
  const CsrMatrix k = assemble_form(FormKind::Stiffness, p1, p1);
  std::vector<double> ones(p1.n_dofs(), 1.0);
  for (double v : k.multiply(ones)) CHECK(std::abs(v) < 1e-13);
}

TEST_CASE("quadrature integrates polynomials exactly up to the rule degree") {
  const Mesh mesh = rect_mesh(2, 1, {0, 0}, {1.5, 1.0});
  // integrate x^a y^b over the rectangle via the cell rule, compare analytic
  for (int degree : {1, 2, 4, 6}) {
    const auto quad = tri_quadrature(degree);
    for (int a = 0; a + 0 <= degree; ++a)
      for (int b = 0; a + b <= degree; ++b) {
        double integral = 0.0;
        for (int c = 0; c < mesh.n_cells(); ++c) {
          const auto& t = mesh.cells[c];
          const Vec2d p0 = mesh.vertices[t[0]], p1 = mesh.vertices[t[1]], p2 = mesh.vertices[t[2]];
          for (const auto& qp : quad) {
            const Vec2d p{p0.x + (p1.x - p0.x) * qp.xi + (p2.x - p0.x) * qp.eta,
                          p0.y + (p1.y - p0.y) * qp.xi + (p2.y - p0.y) * qp.eta};
            integral += qp.w * 2.0 * mesh.cell_area(c) * std::pow(p.x, a) * std::pow(p.y, b);
          }
        }
        const double exact = std::pow(1.5, a + 1) / (a + 1) * 1.0 / (b + 1);
        CHECK(integral == doctest::Approx(exact).epsilon(1e-13));
      }
  }
}

TEST_CASE("curve forms are linear in the coefficient field") {
  const Mesh disk = disk_mesh(24);
  const CurveMesh curve = extract_curve(disk, FacetTag::GammaFDc);
  const Space cs = Space::curve(curve, Family::P1, 1);
  FEField c1(cs), c2(cs), csum(cs);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(0.1, 2.0);
  for (int i = 0; i < cs.n_dofs(); ++i) {
    c1.coeffs[i] = dist(rng);
    c2.coeffs[i] = dist(rng);
    csum.coeffs[i] = c1.coeffs[i] + c2.coeffs[i];
  }
  const FEField* f1[] = {&c1};
  const FEField* f2[] = {&c2};
  const FEField* fs[] = {&csum};
  const CsrMatrix a1 = assemble_form(FormKind::CurveStiffness, cs, cs, f1);
  const CsrMatrix a2 = assemble_form(FormKind::CurveStiffness, cs, cs, f2);
  const CsrMatrix as = assemble_form(FormKind::CurveStiffness, cs, cs, fs);
  for (size_t k = 0; k < as.values().size(); ++k)
    CHECK(as.values()[k] ==
          doctest::Approx(a1.values()[k] + a2.values()[k]).epsilon(1e-13));
}

TEST_CASE("laplace-beltrami spectrum on the unit circle") {
  const Mesh disk = disk_mesh(128);
  const CurveMesh curve = extract_curve(disk, FacetTag::GammaFDc);
  const Space cs = Space::curve(curve, Family::P1, 1);
  const CsrMatrix k = assemble_form(FormKind::CurveStiffness, cs, cs);
  const CsrMatrix m = assemble_form(FormKind::CurveMass, cs, cs);
  const int n = cs.n_dofs();
  Eigen::MatrixXd kd = Eigen::MatrixXd::Zero(n, n), md = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < n; ++r)
    for (int kk = k.row_ptr()[r]; kk < k.row_ptr()[r + 1]; ++kk)
      kd(r, k.col_idx()[kk]) = k.values()[kk];
  for (int r = 0; r < n; ++r)
    for (int kk = m.row_ptr()[r]; kk < m.row_ptr()[r + 1]; ++kk)
      md(r, m.col_idx()[kk]) = m.values()[kk];
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(kd, md);
  const auto& ev = eig.eigenvalues();
  CHECK(std::abs(ev[0]) < 1e-10);  // constant mode
  CHECK(ev[1] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(ev[2] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(ev[3] == doctest::Approx(4.0).epsilon(5e-2));
}

TEST_CASE("solve_sparse basics") {
  {
    std::vector<Triplet> t{{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}};
    const CsrMatrix eye = CsrMatrix::from_triplets(3, 3, std::move(t));
    std::vector<double> b{4.0, -1.0, 2.5};
    const auto x = solve_sparse(eye, b);
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(b[i]).epsilon(1e-15));
  }
  {
    std::vector<Triplet> t{{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 2.0}};
    const CsrMatrix a = CsrMatrix::from_triplets(2, 2, std::move(t));
    std::vector<double> b{3.0, 3.0};
    const auto x = solve_sparse(a, b);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  {
    std::vector<Triplet> t{{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 2.0}, {1, 1, 4.0}};
    const CsrMatrix sing = CsrMatrix::from_triplets(2, 2, std::move(t));
    std::vector<double> b{1.0, 1.0};
    CHECK_THROWS_AS(solve_sparse(sing, b), SolverError);
  }
}

TEST_CASE("zero dirichlet data on all dofs forces the zero solution") {
  const Mesh mesh = rect_mesh(3, 3);
  const Space p1 = build_space(mesh, Family::P1, 1);
  CsrMatrix a = assemble_form(FormKind::Stiffness, p1, p1);
  std::vector<double> b(p1.n_dofs(), 1.0);
  DirichletBC bc;
  bc.space = &p1;
  for (int i = 0; i < p1.n_dofs(); ++i) {
    bc.dofs.push_back(i);
    bc.points.push_back(p1.node_point(i));
    bc.comps.push_back(0);
  }
  apply_dirichlet(a, b, bc, 0.0);
  for (double x : solve_sparse(a, b)) CHECK(std::abs(x) < 1e-15);
}

namespace {

double poisson_l2_error(int n) {
  const Mesh mesh = rect_mesh(n, n);
  const Space p1 = build_space(mesh, Family::P1, 1);
  CsrMatrix a = assemble_form(FormKind::Stiffness, p1, p1);
  auto b = assemble_load(
      p1, [](Vec2d p, int) { return 2.0 * p.y * (1.0 - p.y) + 2.0 * p.x * (1.0 - p.x); }, 4);
  const FacetTag all[] = {FacetTag::GammaFDi, FacetTag::GammaFD0, FacetTag::GammaFN};
  const DirichletBC bc = make_dirichlet(p1, all);
  apply_dirichlet(a, b, bc, 0.0);
  const auto u = solve_sparse(a, b);

  double err2 = 0.0;
  const auto quad = tri_quadrature(6);
  int nodes[6];
  for (int c = 0; c < mesh.n_cells(); ++c) {
    p1.cell_nodes(c, nodes);
    for (const auto& qp : quad) {
      const CellBasis cb = eval_cell_basis(p1, c, qp.xi, qp.eta);
      double uh = 0.0;
      for (int i = 0; i < cb.n; ++i) uh += u[nodes[i]] * cb.phi[i];
      const double ue = cb.point.x * (1.0 - cb.point.x) * cb.point.y * (1.0 - cb.point.y);
      err2 += qp.w * cb.jac_det * (uh - ue) * (uh - ue);
    }
  }
  return std::sqrt(err2);
}

}  // namespace

TEST_CASE("manufactured poisson solution converges at second order") {
  const double e1 = poisson_l2_error(8);
  const double e2 = poisson_l2_error(16);
  const double e3 = poisson_l2_error(32);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
  CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.15));
}
