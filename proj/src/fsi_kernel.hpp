#pragma once

// Element integrands of the transformed monolithic FSI system on the shape
// reference domain. A single templated implementation serves the plain
// residual (S = double), the Newton Jacobian (S seeded on the current state),
// the reverse-time coupling (S seeded on the previous state) and the shape
// partials (S seeded on the transformation dofs).

#include "fsikit/dual.hpp"
#include "fsikit/la.hpp"

namespace fsikit::kernel {

// local dof layout per cell: v (P2 vector), p (P1), w (P2 vector),
// z (P2 vector)
constexpr int kLocV = 0;    // 12
constexpr int kLocP = 12;   // 3
constexpr int kLocW = 15;   // 12
constexpr int kLocZ = 27;   // 12
constexpr int kLocal = 39;

struct QuadCtx {
  double w = 0.0;  // quadrature weight x |jacobian|
  double phi2[6];
  Vec2<double> grad2[6];
  double phi1[3];
  Vec2<double> grad1[3];
  double iota = 1.0;        // interface cutoff value
  Vec2<double> grad_iota{0, 0};
  Vec2<double> f_cur{0, 0};   // body force at the current time level
  Vec2<double> f_prev{0, 0};  // and at the previous one
  bool fluid = true;
};

struct Terms {
  double rho_f, mu_f, rho_s, lambda_s, mu_s;
  double alpha_p, alpha_w, alpha_z;
  double k = 1.0, theta = 1.0;
  // group weights: residual = wT A_T^{j,k} + wE A_E(y) + wP A_P + wI A_I
  //                + wE_prev A_E(y_prev)
  double wT = 1.0, wE = 1.0, wP = 1.0, wI = 1.0, wE_prev = 0.0;
  bool convection = true;
};

template <class S>
struct Fields {
  Vec2<S> v, w, z;
  Mat2<S> Dv, Dw, Dz;
  S p;
};

template <class S>
inline Fields<S> extract_fields(const QuadCtx& q, const S* y) {
  Fields<S> f;
  f.p = S(0.0);
  for (int n = 0; n < 3; ++n) f.p += y[kLocP + n] * q.phi1[n];
  for (int n = 0; n < 6; ++n) {
    for (int a = 0; a < 2; ++a) {
      f.v[a] += y[kLocV + 2 * n + a] * q.phi2[n];
      f.w[a] += y[kLocW + 2 * n + a] * q.phi2[n];
      f.z[a] += y[kLocZ + 2 * n + a] * q.phi2[n];
      for (int b = 0; b < 2; ++b) {
        f.Dv(a, b) += y[kLocV + 2 * n + a] * q.grad2[n][b];
        f.Dw(a, b) += y[kLocW + 2 * n + a] * q.grad2[n][b];
        f.Dz(a, b) += y[kLocZ + 2 * n + a] * q.grad2[n][b];
      }
    }
  }
  return f;
}

template <class S>
struct Geometry {
  Mat2<S> g, ginv, gig;  // g = I + Du_tau, gig = g^{-1} g^{-T}
  S detg;
};

template <class S>
inline Geometry<S> extract_geometry(const QuadCtx& q, const S* u_tau) {
  Geometry<S> geo;
  geo.g = Mat2<S>::identity();
  for (int n = 0; n < 3; ++n)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) geo.g(a, b) += u_tau[2 * n + a] * q.grad1[n][b];
  geo.detg = det(geo.g);
  geo.ginv = inverse(geo.g);
  geo.gig = geo.ginv * transpose(geo.ginv);
  return geo;
}

/// deformation gradient of the ALE map through the reference transformation:
/// F = I + Dw G^{-1}
template <class S>
inline Mat2<S> ale_gradient(const Mat2<S>& dw, const Geometry<S>& geo) {
  return Mat2<S>::identity() + dw * geo.ginv;
}

// scatter helpers: r[test dof] += coefficient * basis
template <class S>
inline void add_v_tests(const QuadCtx& q, const Vec2<S>& vec, S* r) {
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a) r[kLocV + 2 * n + a] += vec[a] * q.phi2[n];
}
template <class S>
inline void add_v_grad_tests(const QuadCtx& q, const Mat2<S>& m, S* r) {
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a)
      r[kLocV + 2 * n + a] += m(a, 0) * q.grad2[n][0] + m(a, 1) * q.grad2[n][1];
}
template <class S>
inline void add_w_tests(const QuadCtx& q, const Vec2<S>& vec, S* r) {
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a) r[kLocW + 2 * n + a] += vec[a] * q.phi2[n];
}
template <class S>
inline void add_z_tests(const QuadCtx& q, const Vec2<S>& vec, S* r) {
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a) r[kLocZ + 2 * n + a] += vec[a] * q.phi2[n];
}
template <class S>
inline void add_p_tests(const QuadCtx& q, const S& val, S* r) {
  for (int n = 0; n < 3; ++n) r[kLocP + n] += val * q.phi1[n];
}
/// (m, D(iota psi)) pairing for a vector test function psi
template <class S, int Off>
inline void add_cutoff_grad_tests(const QuadCtx& q, const Mat2<S>& m, S* r) {
  const Vec2<S> m_giota{m(0, 0) * q.grad_iota[0] + m(0, 1) * q.grad_iota[1],
                        m(1, 0) * q.grad_iota[0] + m(1, 1) * q.grad_iota[1]};
  for (int n = 0; n < 6; ++n)
    for (int a = 0; a < 2; ++a)
      r[Off + 2 * n + a] += q.iota * (m(a, 0) * q.grad2[n][0] + m(a, 1) * q.grad2[n][1]) +
                            q.phi2[n] * m_giota[a];
}

/// A_E group at one quadrature point for one state (used with the current
/// state at weight theta and the previous state at weight 1 - theta).
template <class S>
inline void accumulate_explicit(const QuadCtx& q, const Terms& tm, const Geometry<S>& geo,
                                const Fields<S>& f, const Vec2<double>& force, double weight,
                                S* r) {
  const double wq = q.w * weight;
  if (q.fluid) {
    const Mat2<S> fgrad = ale_gradient(f.Dw, geo);
    const S jj = det(fgrad);
    const Mat2<S> finv = inverse(fgrad);
    if (tm.convection) {
      const Vec2<S> dir = geo.ginv * (finv * f.v);
      add_v_tests(q, (wq * tm.rho_f) * (geo.detg * jj) * (f.Dv * dir), r);
    }
    // viscous part of the transformed fluid stress
    const Mat2<S> dv_gf = f.Dv * geo.ginv * finv;
    const Mat2<S> sigma_v = tm.mu_f * (dv_gf + transpose(dv_gf));
    add_v_grad_tests(q, (wq) * (geo.detg * jj) * (sigma_v * transpose(finv) * transpose(geo.ginv)),
                     r);
    // extension coupling of the auxiliary variable into the w equation
    add_cutoff_grad_tests<S, kLocW>(q, (wq * tm.alpha_w) * geo.detg * (f.Dz * geo.gig), r);
    add_v_tests(q, (-wq * tm.rho_f) * (geo.detg * jj) * Vec2<S>{S(force.x), S(force.y)}, r);
  } else {
    const Mat2<S> fgrad = ale_gradient(f.Dw, geo);
    const S jj = det(fgrad);
    // Saint Venant-Kirchhoff: J sigma_s F^{-T} = F (lambda tr(E) I + 2 mu E)
    const Mat2<S> e = 0.5 * (transpose(fgrad) * fgrad - Mat2<S>::identity());
    Mat2<S> sigma = (2.0 * tm.mu_s) * e;
    const S ltr = tm.lambda_s * trace(e);
    sigma(0, 0) += ltr;
    sigma(1, 1) += ltr;
    add_v_grad_tests(q, (wq)*geo.detg * (fgrad * sigma * transpose(geo.ginv)), r);
    add_w_tests(q, (-wq * tm.rho_s) * geo.detg * f.v, r);
    add_v_tests(q, (-wq * tm.rho_s) * (geo.detg * jj) * Vec2<S>{S(force.x), S(force.y)}, r);
  }
}

/// Full one-step residual: wT A_T^{j,k} + wE A_E(y) + wP A_P(y) + wI A_I(y)
/// + wE_prev A_E(y_prev), accumulated into the 39 local test slots.
template <class S>
inline void step_residual(const QuadCtx& q, const Terms& tm, const S* y, const S* y_prev,
                          const S* u_tau, S* r) {
  const Geometry<S> geo = extract_geometry(q, u_tau);
  const Fields<S> f = extract_fields(q, y);
  const Mat2<S> fgrad = ale_gradient(f.Dw, geo);
  const S jj = det(fgrad);
  const Mat2<S> finv = inverse(fgrad);

  Fields<S> fp;
  if (tm.wT != 0.0 || tm.wE_prev != 0.0) fp = extract_fields(q, y_prev);

  if (tm.wT != 0.0) {
    const double c = q.w * tm.wT / tm.k;
    if (q.fluid) {
      const S jp = det(ale_gradient(fp.Dw, geo));
      const S jtheta = tm.theta * jj + (1.0 - tm.theta) * jp;
      const Vec2<S> dw_dt = f.w - fp.w;
      const Vec2<S> dir = geo.ginv * (finv * dw_dt);
      add_v_tests(q, (c * tm.rho_f) * (geo.detg * jtheta) * (f.v - fp.v - f.Dv * dir), r);
    } else {
      add_v_tests(q, (c * tm.rho_s) * geo.detg * (f.v - fp.v), r);
      add_w_tests(q, (c * tm.rho_s) * geo.detg * (f.w - fp.w), r);
    }
  }

  if (tm.wE != 0.0) accumulate_explicit(q, tm, geo, f, q.f_cur, tm.wE, r);
  if (tm.wE_prev != 0.0) accumulate_explicit(q, tm, geo, fp, q.f_prev, tm.wE_prev, r);

  if (tm.wP != 0.0 && q.fluid) {
    // pressure block of the transformed fluid stress
    const Mat2<S> k2 = transpose(finv) * transpose(geo.ginv);
    add_v_grad_tests(q, (-q.w * tm.wP) * (geo.detg * jj * f.p) * k2, r);
  }

  if (tm.wI != 0.0) {
    if (q.fluid) {
      // incompressibility: det(G) tr(D(J F^{-1} v) G^{-1}) reduces pointwise
      // to det(G) J tr(Dv G^{-1} F^{-1}) by the Piola identity on each cell
      add_p_tests(q, (q.w * tm.wI) * (geo.detg * jj) * trace(f.Dv * geo.ginv * finv), r);
      add_z_tests(q, (-q.w * tm.wI) * geo.detg * f.z, r);
      const Mat2<S> mw = (q.w * tm.wI) * (geo.detg * (f.Dw * geo.gig));
      for (int n = 0; n < 6; ++n)
        for (int a = 0; a < 2; ++a)
          r[kLocZ + 2 * n + a] += mw(a, 0) * q.grad2[n][0] + mw(a, 1) * q.grad2[n][1];
    } else {
      add_p_tests(q, (q.w * tm.wI * tm.alpha_p) * geo.detg * f.p, r);
      add_cutoff_grad_tests<S, kLocZ>(q, (q.w * tm.wI * tm.alpha_z) * geo.detg * (f.Dz * geo.gig),
                                      r);
    }
  }
}

/// Transformed volume-form drag integrand at one quadrature point (fluid
/// cells only); psi/grad_psi are the values of the fixed drag test field.
template <class S>
inline S drag_integrand(const QuadCtx& q, const Terms& tm, const S* y, const S* y_prev,
                        const S* u_tau, const Vec2<double>& psi, const Mat2<double>& dpsi) {
  const Geometry<S> geo = extract_geometry(q, u_tau);
  const Fields<S> f = extract_fields(q, y);
  const Fields<S> fp = extract_fields(q, y_prev);
  const Mat2<S> fgrad = ale_gradient(f.Dw, geo);
  const S jj = det(fgrad);
  const Mat2<S> finv = inverse(fgrad);
  const S jd = geo.detg * jj;

  Mat2<S> dpsi_s;
  Vec2<S> psi_s{S(psi.x), S(psi.y)};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) dpsi_s(a, b) = S(dpsi(a, b));

  // material acceleration with the backward difference quotient
  Vec2<S> accel = (1.0 / tm.k) * (f.v - fp.v);
  if (tm.convection) {
    const Vec2<S> rel = f.v - (1.0 / tm.k) * (f.w - fp.w);
    accel += f.Dv * (geo.ginv * (finv * rel));
  }
  S value = tm.rho_f * jd * dot(accel, psi_s);

  // pressure term: -J det(G) p tr(DPsi G^{-1} F^{-1})
  value -= jd * f.p * trace(dpsi_s * geo.ginv * finv);

  // viscous term: 2 mu_f J det(G) eps(v) : eps(Psi)
  const Mat2<S> gf = geo.ginv * finv;
  const Mat2<S> eps_v = 0.5 * (f.Dv * gf + transpose(f.Dv * gf));
  const Mat2<S> eps_psi = 0.5 * (dpsi_s * gf + transpose(dpsi_s * gf));
  value += 2.0 * tm.mu_f * jd * ddot(eps_v, eps_psi);

  return q.w * value;
}

}  // namespace fsikit::kernel
