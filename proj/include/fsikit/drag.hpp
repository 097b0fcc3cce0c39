#pragma once

#include <span>
#include <vector>

#include "fsikit/fsi.hpp"
#include "fsikit/shape_control.hpp"

namespace fsikit {

struct ObjectiveValue {
  double total = 0.0;           // raw_drag + penalty + regularization
  double raw_drag = 0.0;        // mean-drag functional alone
  double penalty = 0.0;         // determinant penalty
  double regularization = 0.0;  // alpha/2 d^T S d
};

/// Transformed volume-form mean-drag functional and its partial derivatives.
/// The time derivative uses backward difference quotients; the time integral
/// uses the trapezoidal rule over the nodes t_1..t_N.
class DragObjective {
 public:
  explicit DragObjective(const FsiSystem& sys) : sys_(&sys) {}

  /// F_D integrand at t_j from the states at t_j and t_{j-1}.
  double instant(const MonolithicState& y, const MonolithicState& y_prev,
                 const Transformation& tau, double k) const;
  /// scale * d instant / d(y, y_prev), accumulated into full-size vectors.
  void instant_dstate(const MonolithicState& y, const MonolithicState& y_prev,
                      const Transformation& tau, double k, double scale,
                      std::span<double> out_cur, std::span<double> out_prev) const;
  /// scale * d instant / d u_tau, accumulated over the P1 displacement dofs.
  void instant_dtau(const MonolithicState& y, const MonolithicState& y_prev,
                    const Transformation& tau, double k, double scale,
                    std::span<double> out) const;

  /// -(1/T) x trapezoid over t_1..t_N (half weights at t_1 and t_N).
  double mean_drag(const StateTrajectory& traj, const Transformation& tau) const;
  /// Trapezoid weight of node j in the mean-drag sum (without the -1/T).
  static double trapezoid_weight(int j, int n_steps, double k);

 private:
  const FsiSystem* sys_;
};

}  // namespace fsikit
