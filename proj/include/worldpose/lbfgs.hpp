#pragma once

#include "worldpose/common.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace worldpose {

/// Returns f(x) and writes the gradient into *grad when grad is non-null.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct SolverConfig {
  int history = 10;
  int max_iterations = 100;
  double step_scale = 1.0;
  double grad_tol = 1e-10;   // stop when max |g| falls below
  double rel_tol = 0.0;      // stop when relative loss decrease falls below
  int max_line_search_evals = 20;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;

  void validate() const {
    if (history < 1 || max_iterations < 0 || max_line_search_evals < 1) throw ValidationError("bad solver budgets");
    if (!(step_scale > 0.0) || !(grad_tol >= 0.0) || !(rel_tol >= 0.0)) throw ValidationError("bad solver tolerances");
  }
};

enum class SolveStatus { converged, max_iterations, line_search_failed, stopped };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::line_search_failed: return "line_search_failed";
    case SolveStatus::stopped: return "stopped";
  }
  return "?";
}

struct SolveResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  SolveStatus status = SolveStatus::converged;
};

/// Called after every accepted step with (iteration, previous loss, new loss);
/// returning true stops the solve.
using IterationCallback = std::function<bool(int, double, double)>;

/// Limited-memory BFGS with Armijo backtracking. The first step is scaled to
/// min(1, 1/|g|_1) since no curvature is known yet.
inline SolveResult minimize(const Objective& f, const Eigen::VectorXd& x0, const SolverConfig& cfg,
                            const IterationCallback& on_iter = {}) {
  cfg.validate();
  SolveResult r;
  r.x = x0;
  Eigen::VectorXd g(x0.size());
  r.f = f(r.x, &g);
  r.evaluations = 1;
  if (!std::isfinite(r.f) || !g.allFinite()) throw NumericalError("objective is not finite at the starting point");
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;
  Eigen::VectorXd x_new(x0.size()), g_new(x0.size());
  for (;;) {
    if (x0.size() == 0 || g.cwiseAbs().maxCoeff() <= cfg.grad_tol) {
      r.status = SolveStatus::converged;
      return r;
    }
    if (r.iterations >= cfg.max_iterations) {
      r.status = SolveStatus::max_iterations;
      return r;
    }
    // Two-loop recursion.
    Eigen::VectorXd d = -g;
    std::vector<double> a(S.size());
    for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
      a[i] = rho[i] * S[i].dot(d);
      d -= a[i] * Y[i];
    }
    if (!S.empty()) d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double b = rho[i] * Y[i].dot(d);
      d += (a[i] - b) * S[i];
    }
    double gd = g.dot(d);
    if (!(gd < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -g;
      gd = g.dot(d);
    }
    double step = cfg.step_scale;
    if (S.empty()) step *= std::min(1.0, 1.0 / g.lpNorm<1>());
    bool accepted = false;
    double f_new = 0.0;
    for (int e = 0; e < cfg.max_line_search_evals; ++e) {
      x_new = r.x + step * d;
      f_new = f(x_new, &g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= r.f + cfg.armijo_c1 * step * gd) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack;
    }
    if (!accepted) {
      r.status = SolveStatus::line_search_failed;
      return r;
    }
    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (static_cast<int>(S.size()) == cfg.history) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
    }
    const double f_old = r.f;
    r.x = x_new;
    g = g_new;
    r.f = f_new;
    ++r.iterations;
    if (on_iter && on_iter(r.iterations, f_old, r.f)) {
      r.status = SolveStatus::stopped;
      return r;
    }
    if (cfg.rel_tol > 0.0 && f_old - r.f <= cfg.rel_tol * std::max(1.0, std::abs(f_old))) {
      r.status = SolveStatus::converged;
      return r;
    }
  }
}

/// Largest per-coordinate relative error between the supplied gradient and a
/// fourth-order central difference, over coords (all when empty).
/// Coordinates whose numeric derivative is tiny compared with the largest one
/// are compared against a floor of floor_ratio times that largest magnitude.
inline double check_gradient(const Objective& f, const Eigen::VectorXd& x, double eps = 1e-4,
                             double floor_ratio = 1e-3, std::vector<Eigen::Index> coords = {}) {
  if (coords.empty()) {
    coords.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) coords[i] = i;
  }
  Eigen::VectorXd g(x.size());
  f(x, &g);
  std::vector<double> num(coords.size());
  Eigen::VectorXd xp = x;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const Eigen::Index i = coords[k];
    const double h = eps * std::max(1.0, std::abs(x[i]));
    auto at = [&](double m) {
      xp[i] = x[i] + m * h;
      return f(xp, nullptr);
    };
    num[k] = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h);
    xp[i] = x[i];
  }
  double scale = std::numeric_limits<double>::min();
  for (double v : num) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const double denom = std::max(std::abs(num[k]), floor_ratio * scale);
    worst = std::max(worst, std::abs(g[coords[k]] - num[k]) / denom);
  }
  return worst;
}

}  // namespace worldpose
