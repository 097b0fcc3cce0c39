#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fsikit/drag.hpp"
#include "fsikit/fsi.hpp"
#include "fsikit/shape_control.hpp"

namespace fsikit {

struct GradientReport {
  std::vector<double> grad_d;
  ObjectiveValue objective;
  bool penalty_infeasible = false;
  int checkpoint_interval = 1;
  int peak_states_held = 0;  // instrumentation for the checkpointing bound
  double seconds_forward = 0.0;
  double seconds_adjoint = 0.0;
};

/// Reduced shape optimization problem: d -> tau = id + B(d) -> theta-scheme
/// trajectory -> mean drag + penalty + regularization, with the exact
/// discrete gradient computed by a reverse-in-time adjoint sweep over
/// checkpointed forward states.
class ReducedFsiProblem {
 public:
  ReducedFsiProblem(const Mesh& mesh, PhysicalParams phys, CouplingParams coupling,
                    ShapeControlParams shape, TimeGrid grid);

  const ShapeController& control() const { return *ctrl_; }
  FsiSystem& system() { return *sys_; }
  const FsiSystem& system() const { return *sys_; }
  const TimeGrid& grid() const { return grid_; }
  int n_controls() const { return ctrl_->n_controls(); }

  double drag_weight = 1.0;  // 0 reduces the objective to the regularization

  ObjectiveValue objective(std::span<const double> d) const;
  /// Exact discrete gradient; interval 0 selects ceil(sqrt(N)).
  GradientReport gradient(std::span<const double> d, int checkpoint_interval = 0) const;

  std::vector<double> constraints(std::span<const double> d) const;
  std::vector<std::vector<double>> constraint_jacobian(std::span<const double> d) const;

  static int default_checkpoint_interval(int n_steps);

 private:
  const Mesh* mesh_;
  std::unique_ptr<FsiSystem> sys_;
  std::unique_ptr<ShapeController> ctrl_;
  std::unique_ptr<DragObjective> drag_;
  TimeGrid grid_;
};

struct TaylorResult {
  std::vector<double> h;
  std::vector<double> remainders;
  std::vector<double> rates;  // log2 of successive remainder ratios
  double mean_rate = 0.0;
};

/// First-order Taylor remainder |f(d + h delta) - f(d) - h grad . delta| over
/// a sequence of step sizes; the observed decay rate verifies the gradient.
TaylorResult taylor_test(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> d, std::span<const double> grad,
                         std::span<const double> delta, std::span<const double> h_values);

}  // namespace fsikit
