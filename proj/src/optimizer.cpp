#include "fsikit/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>

namespace fsikit {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double norm_inf(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

struct LbfgsMemory {
  std::deque<std::vector<double>> s, y;
  std::deque<double> rho;
  int capacity;

  explicit LbfgsMemory(int m) : capacity(m) {}

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }

  void push(std::vector<double> si, std::vector<double> yi) {
    double sy = 0.0, yy = 0.0, ss = 0.0;
    for (size_t i = 0; i < si.size(); ++i) {
      sy += si[i] * yi[i];
      yy += yi[i] * yi[i];
      ss += si[i] * si[i];
    }
    if (sy <= 1e-12 * std::sqrt(ss * yy)) return;  // curvature guard
    s.push_back(std::move(si));
    y.push_back(std::move(yi));
    rho.push_back(1.0 / sy);
    if (static_cast<int>(s.size()) > capacity) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }

  // two-loop recursion
  std::vector<double> direction(std::span<const double> grad) const {
    std::vector<double> q(grad.begin(), grad.end());
    const int m = static_cast<int>(s.size());
    std::vector<double> alpha(m, 0.0);
    for (int i = m - 1; i >= 0; --i) {
      double sq = 0.0;
      for (size_t j = 0; j < q.size(); ++j) sq += s[i][j] * q[j];
      alpha[i] = rho[i] * sq;
      for (size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * y[i][j];
    }
    if (m > 0) {
      double sy = 0.0, yy = 0.0;
      for (size_t j = 0; j < q.size(); ++j) {
        sy += s[m - 1][j] * y[m - 1][j];
        yy += y[m - 1][j] * y[m - 1][j];
      }
      const double gamma = sy / yy;
      for (auto& v : q) v *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      double yq = 0.0;
      for (size_t j = 0; j < q.size(); ++j) yq += y[i][j] * q[j];
      const double beta = rho[i] * yq;
      for (size_t j = 0; j < q.size(); ++j) q[j] += (alpha[i] - beta) * s[i][j];
    }
    for (auto& v : q) v = -v;
    return q;
  }
};

}  // namespace

OptResult solve_augmented_lagrangian(const OptCallbacks& cb, const OptConfig& config,
                                     std::vector<double> d0_breve) {
  OptResult result;
  std::vector<double> d = std::move(d0_breve);
  std::vector<double> multipliers(cb.n_constraints, 0.0);
  double mu = config.initial_penalty;

  auto eval_g = [&](std::span<const double> x) {
    return cb.n_constraints > 0 ? cb.constraints(x) : std::vector<double>{};
  };
  // augmented Lagrangian merit and its gradient
  auto merit = [&](std::span<const double> x, ObjectiveValue* parts, double* fval) {
    ObjectiveValue local;
    const double f = cb.objective(x, &local);
    if (parts) *parts = local;
    if (fval) *fval = f;
    if (f >= kInfeasiblePenalty) return kInfeasiblePenalty;
    double value = f;
    const auto g = eval_g(x);
    for (int i = 0; i < cb.n_constraints; ++i)
      value += multipliers[i] * g[i] + 0.5 * mu * g[i] * g[i];
    return value;
  };
  auto merit_gradient = [&](std::span<const double> x) {
    auto grad = cb.gradient(x);
    if (cb.n_constraints > 0) {
      const auto g = eval_g(x);
      const auto jac = cb.constraint_jacobian(x);
      for (int i = 0; i < cb.n_constraints; ++i) {
        const double w = multipliers[i] + mu * g[i];
        for (int j = 0; j < cb.n_controls; ++j) grad[j] += w * jac[i][j];
      }
    }
    return grad;
  };

  ObjectiveValue parts;
  double fval = 0.0;
  double lvalue = merit(d, &parts, &fval);
  auto lgrad = merit_gradient(d);
  auto g = eval_g(d);
  int iteration = 0;
  result.records.push_back({iteration, parts.total, parts.raw_drag, norm2(lgrad), 0,
                            norm_inf(g)});

  LbfgsMemory memory(config.lbfgs_memory);
  double prev_violation = norm_inf(g);

  for (int outer = 0; outer < config.max_outer; ++outer) {
    // inner tolerance tightens with the outer loop
    const double omega =
        std::max(0.5 * config.nlp_tolerance, norm2(lgrad) * std::pow(0.2, outer + 1));
    memory.clear();

    for (int inner = 0; inner < config.max_inner; ++inner) {
      if (iteration >= config.max_total_iterations) {
        result.stop_reason = "iteration cap reached";
        result.d_breve = d;
        return result;
      }
      if (norm2(lgrad) <= omega) break;

      auto dir = memory.direction(lgrad);
      double slope = 0.0;
      for (int i = 0; i < cb.n_controls; ++i) slope += dir[i] * lgrad[i];
      if (slope >= 0.0) {  // fall back to steepest descent
        for (int i = 0; i < cb.n_controls; ++i) dir[i] = -lgrad[i];
        slope = -norm2(lgrad) * norm2(lgrad);
      }

      double step = 1.0;
      int ls_steps = 0;
      std::vector<double> x_try(cb.n_controls);
      double l_try = 0.0;
      ObjectiveValue parts_try;
      double f_try = 0.0;
      bool accepted = false;
      while (step >= config.min_step) {
        ++ls_steps;
        for (int i = 0; i < cb.n_controls; ++i) x_try[i] = d[i] + step * dir[i];
        l_try = merit(x_try, &parts_try, &f_try);
        if (l_try < kInfeasiblePenalty && l_try <= lvalue + config.armijo_c * step * slope) {
          accepted = true;
          break;
        }
        step *= config.backtrack;
      }
      if (!accepted) {
        result.stop_reason = "line search failed (step below minimum)";
        result.d_breve = d;
        return result;
      }

      auto lgrad_try = merit_gradient(x_try);
      std::vector<double> si(cb.n_controls), yi(cb.n_controls);
      for (int i = 0; i < cb.n_controls; ++i) {
        si[i] = x_try[i] - d[i];
        yi[i] = lgrad_try[i] - lgrad[i];
      }
      memory.push(std::move(si), std::move(yi));

      d = std::move(x_try);
      lvalue = l_try;
      lgrad = std::move(lgrad_try);
      parts = parts_try;
      g = eval_g(d);
      ++iteration;
      result.records.push_back({iteration, parts.total, parts.raw_drag, norm2(lgrad), ls_steps,
                                norm_inf(g)});
    }

    // stationarity of the Lagrangian with the current multipliers
    auto stat = cb.gradient(d);
    if (cb.n_constraints > 0) {
      const auto jac = cb.constraint_jacobian(d);
      for (int i = 0; i < cb.n_constraints; ++i)
        for (int j = 0; j < cb.n_controls; ++j) stat[j] += multipliers[i] * jac[i][j];
    }
    const double violation = norm_inf(g);
    if (std::max(norm2(stat), violation) <= config.nlp_tolerance) {
      result.converged = true;
      result.stop_reason = "converged";
      result.d_breve = d;
      return result;
    }

    if (cb.n_constraints > 0) {
      if (violation <= config.constraint_shrink * prev_violation ||
          violation <= config.nlp_tolerance) {
        for (int i = 0; i < cb.n_constraints; ++i) multipliers[i] += mu * g[i];
      } else {
        mu *= config.penalty_growth;
      }
      prev_violation = violation;
      // merit changed: refresh its value and gradient
      lvalue = merit(d, &parts, &fval);
      lgrad = merit_gradient(d);
    } else if (norm2(lgrad) <= config.nlp_tolerance) {
      result.converged = true;
      result.stop_reason = "converged";
      result.d_breve = d;
      return result;
    }
  }
  result.stop_reason = "outer iteration cap reached";
  result.d_breve = d;
  return result;
}

namespace {

std::string format_record_fields(const OptRecord& r, const char* sep) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d%s%.4e%s%.4e%s%.2e%s%d%s%.2e", r.iteration, sep,
                r.objective, sep, r.objective_wo_reg_pen, sep, r.dual_infeasibility, sep,
                r.linesearch_steps, sep, r.constraint_violation);
  return buf;
}

}  // namespace

std::string format_records_csv(std::span<const OptRecord> records) {
  std::ostringstream out;
  out << "iteration,objective,objective_wo_reg_pen,dual_infeasibility,linesearch_steps,"
         "constraint_violation\n";
  for (const auto& r : records) out << format_record_fields(r, ",") << "\n";
  return out.str();
}

std::string format_records_table(std::span<const OptRecord> records) {
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-9s %-12s %-18s %-14s %-12s %-12s\n", "iteration",
                "objective", "obj w/o reg&pen", "dual infeas", "linesearch", "constraint");
  out << buf;
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%-9d %-12.4e %-18.4e %-14.2e %-12d %-12.2e\n", r.iteration,
                  r.objective, r.objective_wo_reg_pen, r.dual_infeasibility, r.linesearch_steps,
                  r.constraint_violation);
    out << buf;
  }
  return out.str();
}

}  // namespace fsikit
