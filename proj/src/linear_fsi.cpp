#include "fsikit/linear_fsi.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fsikit/quadrature.hpp"
#include "fsikit/sparse.hpp"

namespace fsikit {

namespace {

CsrMatrix scaled(CsrMatrix m, double s) {
  for (auto& v : m.values()) v *= s;
  return m;
}

CsrMatrix add(const CsrMatrix& a, const CsrMatrix& b) {
  std::vector<Triplet> t;
  for (int r = 0; r < a.rows(); ++r)
    for (int k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k)
      t.push_back({r, a.col_idx()[k], a.values()[k]});
  for (int r = 0; r < b.rows(); ++r)
    for (int k = b.row_ptr()[r]; k < b.row_ptr()[r + 1]; ++k)
      t.push_back({r, b.col_idx()[k], b.values()[k]});
  return CsrMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
}

}  // namespace

LinearFsi::LinearFsi(LinearFsiConfig config) : config_(std::move(config)) {
  const Mesh& mesh = *config_.mesh;
  v_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P2, 2));
  p_space_ = std::make_unique<Space>(Space::volume(mesh, Family::P1, 1));

  // homogeneous Dirichlet velocity on the whole outer boundary
  const FacetTag all_tags[] = {FacetTag::GammaFDi, FacetTag::GammaFD0, FacetTag::GammaFN,
                               FacetTag::GammaFDc, FacetTag::GammaSDc};
  const Space s2 = Space::volume(mesh, Family::P2, 1);
  std::vector<char> on_boundary(s2.n_nodes(), 0);
  for (int n : nodes_on_tags(s2, all_tags)) on_boundary[n] = 1;
  v_index_.assign(v_space_->n_dofs(), -1);
  for (int n = 0; n < s2.n_nodes(); ++n) {
    if (on_boundary[n]) continue;
    for (int c = 0; c < 2; ++c) {
      v_index_[v_space_->dof(n, c)] = static_cast<int>(free_v_.size());
      free_v_.push_back(v_space_->dof(n, c));
    }
  }

  // pressure on fluid-supported vertices
  p_index_.assign(p_space_->n_nodes(), -1);
  std::vector<char> fluid_node(p_space_->n_nodes(), 0);
  for (int c = 0; c < mesh.n_cells(); ++c)
    if (mesh.cell_subdomain[c] == Subdomain::Fluid)
      for (int v : mesh.cells[c]) fluid_node[v] = 1;
  for (int n = 0; n < p_space_->n_nodes(); ++n)
    if (fluid_node[n]) {
      p_index_[n] = static_cast<int>(p_nodes_.size());
      p_nodes_.push_back(n);
    }

  mass_rho_ = add(scaled(assemble_form(FormKind::Mass, *v_space_, *v_space_, {}, 4,
                                       CellFilter::Fluid),
                         config_.rho_f),
                  scaled(assemble_form(FormKind::Mass, *v_space_, *v_space_, {}, 4,
                                       CellFilter::Solid),
                         config_.rho_s));
  mass_plain_ = assemble_form(FormKind::Mass, *v_space_, *v_space_, {}, 4);
  a_f_ = scaled(assemble_form(FormKind::Elasticity, *v_space_, *v_space_, {}, 4,
                              CellFilter::Fluid),
                config_.mu_f);
  a_s_ = add(scaled(assemble_form(FormKind::Elasticity, *v_space_, *v_space_, {}, 4,
                                  CellFilter::Solid),
                    config_.mu_s),
             scaled(assemble_form(FormKind::DivDiv, *v_space_, *v_space_, {}, 4,
                                  CellFilter::Solid),
                    config_.lambda_s));
  div_ = assemble_form(FormKind::Divergence, *p_space_, *v_space_, {}, 4, CellFilter::Fluid);
}

int LinearFsi::n_velocity_dofs() const { return static_cast<int>(free_v_.size()); }
int LinearFsi::n_pressure_dofs() const { return static_cast<int>(p_nodes_.size()); }

std::vector<double> LinearFsi::interpolate_v(const std::function<Vec2d(Vec2d)>& fn) const {
  std::vector<double> out(v_space_->n_dofs(), 0.0);
  if (!fn) return out;
  for (int n = 0; n < v_space_->n_nodes(); ++n) {
    const Vec2d v = fn(v_space_->node_point(n));
    out[v_space_->dof(n, 0)] = v.x;
    out[v_space_->dof(n, 1)] = v.y;
  }
  return out;
}

double LinearFsi::velocity_norm(std::span<const double> v) const {
  const auto mv = mass_plain_.multiply(v);
  double s = 0.0;
  for (size_t i = 0; i < v.size(); ++i) s += v[i] * mv[i];
  return std::sqrt(s);
}

LinearTrajectory LinearFsi::forward() const {
  const Mesh& mesh = *config_.mesh;
  const int nv = n_velocity_dofs();
  const int np = n_pressure_dofs();
  const int nfull = v_space_->n_dofs();
  const double k = config_.k();
  const double theta = config_.effective_theta();

  // step matrix: [rho M / k + theta (A_f + (k/2) A_s), -B^T; -B, 0]
  std::vector<Triplet> trip;
  auto add_block_vv = [&](const CsrMatrix& m, double s) {
    for (int r = 0; r < m.rows(); ++r) {
      if (v_index_[r] < 0) continue;
      for (int kk = m.row_ptr()[r]; kk < m.row_ptr()[r + 1]; ++kk) {
        const int c = m.col_idx()[kk];
        if (v_index_[c] < 0) continue;
        trip.push_back({v_index_[r], v_index_[c], s * m.values()[kk]});
      }
    }
  };
  add_block_vv(mass_rho_, 1.0 / k);
  add_block_vv(a_f_, theta);
  add_block_vv(a_s_, theta * 0.5 * k);
  for (int r = 0; r < div_.rows(); ++r) {
    if (p_index_[r] < 0) continue;
    for (int kk = div_.row_ptr()[r]; kk < div_.row_ptr()[r + 1]; ++kk) {
      const int c = div_.col_idx()[kk];
      if (v_index_[c] < 0) continue;
      trip.push_back({nv + p_index_[r], v_index_[c], -div_.values()[kk]});
      trip.push_back({v_index_[c], nv + p_index_[r], -div_.values()[kk]});
    }
  }
  CsrMatrix step =
      CsrMatrix::from_triplets(nv + np, nv + np, std::move(trip)).with_diagonal();
  LuSolver lu;
  lu.factorize(step);

  LinearTrajectory traj;
  std::vector<double> v_full = interpolate_v(config_.v0);
  for (int dof = 0; dof < nfull; ++dof)
    if (v_index_[dof] < 0) v_full[dof] = 0.0;  // enforce the boundary condition
  std::vector<double> w_full = interpolate_v(config_.w0);
  traj.v.push_back(v_full);
  traj.p.push_back(std::vector<double>(np, 0.0));

  auto body_force = [&](double t) {
    std::vector<double> f(nfull, 0.0);
    if (!config_.f_f && !config_.f_s) return f;
    const auto quad = tri_quadrature(4);
    int nodes[6];
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const bool fluid = mesh.cell_subdomain[c] == Subdomain::Fluid;
      const auto& fn = fluid ? config_.f_f : config_.f_s;
      if (!fn) continue;
      const double rho = fluid ? config_.rho_f : config_.rho_s;
      v_space_->cell_nodes(c, nodes);
      for (const auto& qp : quad) {
        const CellBasis b = eval_cell_basis(*v_space_, c, qp.xi, qp.eta);
        const Vec2d fv = fn(b.point, t);
        const double w = qp.w * b.jac_det * rho;
        for (int i = 0; i < 6; ++i)
          for (int a = 0; a < 2; ++a)
            f[v_space_->dof(nodes[i], a)] += w * fv[a] * b.phi[i];
      }
    }
    return f;
  };

  for (int j = 1; j <= config_.N; ++j) {
    const double t_j = j * k;
    // rhs from the previous level and the accumulated solid displacement
    std::vector<double> rhs_full = mass_rho_.multiply(v_full);
    for (auto& v : rhs_full) v /= k;
    const auto afv = a_f_.multiply(v_full);
    // a_s acts on W_j = w_full + (k/2)(v_{j-1} + v_j): the v_j part is in the
    // matrix, the known part goes to the rhs with full weight
    std::vector<double> w_known(w_full);
    for (int i = 0; i < nfull; ++i) w_known[i] += 0.5 * k * v_full[i];
    const auto asw_known = a_s_.multiply(w_known);
    const auto asw_prev = a_s_.multiply(w_full);
    const auto f_cur = body_force(t_j);
    const auto f_prev = body_force(t_j - k);
    std::vector<double> rhs(nv + np, 0.0);
    for (int dof = 0; dof < nfull; ++dof) {
      const int i = v_index_[dof];
      if (i < 0) continue;
      rhs[i] = rhs_full[dof] - (1.0 - theta) * afv[dof] - theta * asw_known[dof] -
               (1.0 - theta) * asw_prev[dof] + theta * f_cur[dof] +
               (1.0 - theta) * f_prev[dof];
    }
    const auto x = lu.solve(rhs);

    std::vector<double> v_next(nfull, 0.0);
    for (int dof = 0; dof < nfull; ++dof)
      if (v_index_[dof] >= 0) v_next[dof] = x[v_index_[dof]];
    for (int i = 0; i < nfull; ++i) w_full[i] += 0.5 * k * (v_full[i] + v_next[i]);
    v_full = std::move(v_next);
    traj.v.push_back(v_full);
    std::vector<double> p(np);
    for (int i = 0; i < np; ++i) p[i] = x[nv + i];
    traj.p.push_back(std::move(p));
  }
  return traj;
}

std::vector<std::vector<double>> LinearFsi::substitute_w(
    std::span<const std::vector<double>> v_trajectory) const {
  const double k = config_.k();
  std::vector<std::vector<double>> w;
  w.push_back(interpolate_v(config_.w0));
  for (size_t j = 1; j < v_trajectory.size(); ++j) {
    std::vector<double> next = w.back();
    for (size_t i = 0; i < next.size(); ++i)
      next[i] += 0.5 * k * (v_trajectory[j - 1][i] + v_trajectory[j][i]);
    w.push_back(std::move(next));
  }
  return w;
}

std::vector<double> LinearFsi::energy_history(const LinearTrajectory& traj) const {
  const auto w = substitute_w(traj.v);
  std::vector<double> energy;
  for (size_t j = 0; j < traj.v.size(); ++j) {
    const auto mv = mass_rho_.multiply(traj.v[j]);
    const auto asw = a_s_.multiply(w[j]);
    double e = 0.0;
    for (size_t i = 0; i < mv.size(); ++i)
      e += 0.5 * traj.v[j][i] * mv[i] + 0.5 * w[j][i] * asw[i];
    energy.push_back(e);
  }
  return energy;
}

StructureReport LinearFsi::adjoint_structure_check(double tolerance,
                                                   bool left_endpoint_bug) const {
  const int nv = n_velocity_dofs();
  const int np = n_pressure_dofs();
  const int n_nodes = config_.N + 1;
  const int block = nv + np;
  const int total = n_nodes * block;
  const double k = config_.k();

  // restrictions of the assembled forms to free/compact indices
  auto restrict_vv = [&](const CsrMatrix& m) {
    std::vector<Triplet> t;
    for (int r = 0; r < m.rows(); ++r) {
      if (v_index_[r] < 0) continue;
      for (int kk = m.row_ptr()[r]; kk < m.row_ptr()[r + 1]; ++kk)
        if (v_index_[m.col_idx()[kk]] >= 0)
          t.push_back({v_index_[r], v_index_[m.col_idx()[kk]], m.values()[kk]});
    }
    return CsrMatrix::from_triplets(nv, nv, std::move(t));
  };
  const CsrMatrix m_rho = restrict_vv(mass_rho_);
  const CsrMatrix af = restrict_vv(a_f_);
  const CsrMatrix as = restrict_vv(a_s_);
  std::vector<Triplet> bt;
  for (int r = 0; r < div_.rows(); ++r) {
    if (p_index_[r] < 0) continue;
    for (int kk = div_.row_ptr()[r]; kk < div_.row_ptr()[r + 1]; ++kk)
      if (v_index_[div_.col_idx()[kk]] >= 0)
        bt.push_back({p_index_[r], v_index_[div_.col_idx()[kk]], div_.values()[kk]});
  }
  const CsrMatrix bmat = CsrMatrix::from_triplets(np, nv, std::move(bt));

  auto vdof = [&](int node, int i) { return node * block + i; };
  auto pdof = [&](int node, int i) { return node * block + nv + i; };

  // trapezoid weights over the time nodes
  auto c_w = [&](int j) { return (j == 0 || j == config_.N) ? 0.5 * k : k; };
  // inner integral weights w_{j,i} for int_0^{t_j}
  auto w_in = [&](int j, int i) -> double {
    if (left_endpoint_bug) return i < j ? k : 0.0;
    if (j == 0) return i == 0 ? 0.5 * k : 0.0;  // degenerate-corner convention
    if (i > j) return 0.0;
    return (i == 0 || i == j) ? 0.5 * k : k;
  };

  // assemble per block for the diagnostics
  std::map<std::string, std::vector<Triplet>> blocks;
  for (int j = 1; j <= config_.N; ++j) {
    // time derivative paired with the Crank-Nicolson test average
    for (int r = 0; r < m_rho.rows(); ++r)
      for (int kk = m_rho.row_ptr()[r]; kk < m_rho.row_ptr()[r + 1]; ++kk) {
        const double v = m_rho.values()[kk];
        const int c = m_rho.col_idx()[kk];
        for (int tn : {j, j - 1}) {
          const double tw = 0.5;
          blocks["time"].push_back({vdof(j, c), vdof(tn, r), tw * v});
          blocks["time"].push_back({vdof(j - 1, c), vdof(tn, r), -tw * v});
        }
      }
  }
  for (int j = 0; j <= config_.N; ++j) {
    const double cw = c_w(j);
    for (int r = 0; r < af.rows(); ++r)
      for (int kk = af.row_ptr()[r]; kk < af.row_ptr()[r + 1]; ++kk)
        blocks["a_f"].push_back({vdof(j, af.col_idx()[kk]), vdof(j, r), cw * af.values()[kk]});
    for (int r = 0; r < bmat.rows(); ++r)
      for (int kk = bmat.row_ptr()[r]; kk < bmat.row_ptr()[r + 1]; ++kk) {
        const double v = bmat.values()[kk];
        blocks["pressure"].push_back({pdof(j, r), vdof(j, bmat.col_idx()[kk]), -cw * v});
        blocks["pressure"].push_back({vdof(j, bmat.col_idx()[kk]), pdof(j, r), -cw * v});
      }
    for (int i = 0; i <= config_.N; ++i) {
      const double wi = w_in(j, i);
      if (wi == 0.0) continue;
      for (int r = 0; r < as.rows(); ++r)
        for (int kk = as.row_ptr()[r]; kk < as.row_ptr()[r + 1]; ++kk)
          blocks["a_s_integral"].push_back(
              {vdof(i, as.col_idx()[kk]), vdof(j, r), cw * wi * as.values()[kk]});
    }
  }
  for (int r = 0; r < m_rho.rows(); ++r)
    for (int kk = m_rho.row_ptr()[r]; kk < m_rho.row_ptr()[r + 1]; ++kk)
      blocks["initial"].push_back({vdof(0, m_rho.col_idx()[kk]), vdof(0, r), m_rho.values()[kk]});

  // permutation: node j -> N - j
  std::vector<int> perm(total);
  for (int j = 0; j < n_nodes; ++j)
    for (int i = 0; i < block; ++i) perm[j * block + i] = (config_.N - j) * block + i;

  StructureReport report;
  std::vector<Triplet> all;
  for (auto& [name, t] : blocks) {
    // defect of this block alone: ||B^T - P^T B P||_F / ||B||_F
    CsrMatrix b = CsrMatrix::from_triplets(total, total, t);
    std::vector<Triplet> pt;
    pt.reserve(t.size());
    for (const auto& tr : t) pt.push_back({perm[tr.col], perm[tr.row], tr.val});
    const CsrMatrix diff_lhs = b.transposed();
    const CsrMatrix diff_rhs = CsrMatrix::from_triplets(total, total, std::move(pt));
    std::vector<Triplet> d;
    for (int r = 0; r < total; ++r) {
      for (int kk = diff_lhs.row_ptr()[r]; kk < diff_lhs.row_ptr()[r + 1]; ++kk)
        d.push_back({r, diff_lhs.col_idx()[kk], diff_lhs.values()[kk]});
      for (int kk = diff_rhs.row_ptr()[r]; kk < diff_rhs.row_ptr()[r + 1]; ++kk)
        d.push_back({r, diff_rhs.col_idx()[kk], -diff_rhs.values()[kk]});
    }
    const double bnorm = b.frobenius_norm();
    report.block_defects[name] =
        bnorm > 0.0 ? CsrMatrix::from_triplets(total, total, std::move(d)).frobenius_norm() / bnorm
                    : 0.0;
    all.insert(all.end(), t.begin(), t.end());
  }

  const CsrMatrix a = CsrMatrix::from_triplets(total, total, all);
  const double anorm = a.frobenius_norm();
  {
    std::vector<Triplet> pt;
    pt.reserve(all.size());
    for (const auto& tr : all) pt.push_back({perm[tr.col], perm[tr.row], tr.val});
    const CsrMatrix at = a.transposed();
    const CsrMatrix pap = CsrMatrix::from_triplets(total, total, std::move(pt));
    std::vector<Triplet> d;
    for (int r = 0; r < total; ++r) {
      for (int kk = at.row_ptr()[r]; kk < at.row_ptr()[r + 1]; ++kk)
        d.push_back({r, at.col_idx()[kk], at.values()[kk]});
      for (int kk = pap.row_ptr()[r]; kk < pap.row_ptr()[r + 1]; ++kk)
        d.push_back({r, pap.col_idx()[kk], -pap.values()[kk]});
    }
    report.rel_frobenius_defect =
        CsrMatrix::from_triplets(total, total, std::move(d)).frobenius_norm() / anorm;
  }

  // 20 random probe pairs: eta^T A^T psi = (P psi)^T A (P eta)
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int probe = 0; probe < 20; ++probe) {
    std::vector<double> eta(total), psi(total), peta(total), ppsi(total);
    for (int i = 0; i < total; ++i) {
      eta[i] = dist(rng);
      psi[i] = dist(rng);
    }
    for (int i = 0; i < total; ++i) {
      peta[perm[i]] = eta[i];
      ppsi[perm[i]] = psi[i];
    }
    const auto a_eta = a.multiply(eta);
    const auto a_peta = a.multiply(peta);
    double lhs = 0.0, rhs = 0.0, en = 0.0, pn = 0.0;
    for (int i = 0; i < total; ++i) {
      lhs += psi[i] * a_eta[i];   // psi^T A eta = eta^T A^T psi
      rhs += ppsi[i] * a_peta[i];
      en += eta[i] * eta[i];
      pn += psi[i] * psi[i];
    }
    report.max_probe_defect = std::max(
        report.max_probe_defect, std::abs(lhs - rhs) / (anorm * std::sqrt(en * pn) + 1e-300));
  }

  report.passed = report.rel_frobenius_defect <= tolerance;
  return report;
}

}  // namespace fsikit
