#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fsikit/drag.hpp"

namespace fsikit {

struct OptConfig {
  int max_outer = 30;
  int max_inner = 40;
  int max_total_iterations = 200;
  double nlp_tolerance = 1e-3;  // overall scaled stationarity + feasibility
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double constraint_shrink = 0.25;  // required per-outer feasibility progress
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double min_step = 1e-12;
  int lbfgs_memory = 10;
};

struct OptRecord {
  int iteration = 0;
  double objective = 0.0;
  double objective_wo_reg_pen = 0.0;
  double dual_infeasibility = 0.0;
  int linesearch_steps = 0;
  double constraint_violation = 0.0;
};

/// Problem callbacks in the transformed (breve) coordinates.
struct OptCallbacks {
  int n_controls = 0;
  int n_constraints = 0;
  std::function<double(std::span<const double>, ObjectiveValue*)> objective;
  std::function<std::vector<double>(std::span<const double>)> gradient;
  std::function<std::vector<double>(std::span<const double>)> constraints;
  std::function<std::vector<std::vector<double>>(std::span<const double>)> constraint_jacobian;
};

struct OptResult {
  std::vector<double> d_breve;
  std::vector<OptRecord> records;
  bool converged = false;
  std::string stop_reason;
};

/// Equality-constrained minimization by an augmented-Lagrangian outer loop
/// with an L-BFGS inner solver and Armijo backtracking. Infeasible objective
/// evaluations (the determinant-penalty sentinel) are line-search rejections.
OptResult solve_augmented_lagrangian(const OptCallbacks& cb, const OptConfig& config,
                                     std::vector<double> d0_breve);

/// Iteration table in the benchmark reporting style (fixed scientific
/// formats); the constraint-violation column is an addition.
std::string format_records_csv(std::span<const OptRecord> records);
std::string format_records_table(std::span<const OptRecord> records);

}  // namespace fsikit
