#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

namespace metacal::opt {

struct SolverOptions {
  std::size_t max_iters = 20000;
  double grad_tol = 1e-6;        // projected-gradient infinity norm
  double stall_tol = 1e-10;      // relative objective decrease ...
  std::size_t stall_window = 25; // ... over this many iterations
  std::size_t multistart_k = 1;  // consumed by the calibration driver
  std::uint64_t seed = 0;
  std::size_t memory = 10;       // L-BFGS history pairs
  double armijo_c = 1e-4;
  std::size_t max_backtracks = 60;
};

struct SolverResult {
  std::vector<double> x;
  double objective = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
  std::string stop_reason;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

struct LbfgsPair {
  std::vector<double> s;
  std::vector<double> y;
  double inv_sy = 0.0;
};

/// Two-loop recursion; returns the quasi-Newton descent direction -H g.
inline std::vector<double> lbfgs_direction(const std::vector<double>& g,
                                           const std::deque<LbfgsPair>& history) {
  std::vector<double> q = g;
  std::vector<double> alpha(history.size(), 0.0);
  for (std::size_t k = history.size(); k-- > 0;) {
    const auto& p = history[k];
    alpha[k] = p.inv_sy * dot(p.s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * p.y[i];
  }
  if (!history.empty()) {
    const auto& last = history.back();
    const double yy = dot(last.y, last.y);
    if (yy > 0.0) {
      const double gamma = dot(last.s, last.y) / yy;
      for (double& qi : q) qi *= gamma;
    }
  }
  for (std::size_t k = 0; k < history.size(); ++k) {
    const auto& p = history[k];
    const double beta = p.inv_sy * dot(p.y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += p.s[i] * (alpha[k] - beta);
  }
  for (double& qi : q) qi = -qi;
  return q;
}

}  // namespace detail

/// Projected limited-memory quasi-Newton minimization over a box.
///
/// The objective callback is invoked as `f(x, grad, want_gradient)` and must
/// return the value; when want_gradient is true it must also fill `grad`.
/// Steps follow the L-BFGS direction clipped to the box, accepted under an
/// Armijo condition along the projected path, with steepest descent as the
/// fallback direction. Non-finite trial values are treated as rejections.
template <class F>
SolverResult minimize_box(F&& objective, std::vector<double> x,
                          const std::vector<double>& lower,
                          const std::vector<double>& upper,
                          const SolverOptions& options) {
  const std::size_t n = x.size();
  auto clip = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::clamp(v[i], lower[i], upper[i]);
  };
  clip(x);

  SolverResult result;
  std::vector<double> g(n, 0.0);
  double f = objective(x, g, true);
  if (!std::isfinite(f)) {
    result.x = std::move(x);
    result.objective = f;
    result.stop_reason = "initial point not finite";
    return result;
  }

  std::deque<detail::LbfgsPair> history;
  std::deque<double> recent{f};
  std::vector<double> g_trial(n, 0.0);

  std::size_t iter = 0;
  for (; iter < options.max_iters; ++iter) {
    // Projected-gradient stationarity measure.
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double moved = std::clamp(x[i] - g[i], lower[i], upper[i]);
      pg_norm = std::max(pg_norm, std::abs(x[i] - moved));
    }
    if (pg_norm <= options.grad_tol) {
      result.converged = true;
      result.stop_reason = "projected gradient below tolerance";
      break;
    }

    bool accepted = false;
    std::vector<double> x_new, step_delta;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      std::vector<double> direction = (attempt == 0 && !history.empty())
                                          ? detail::lbfgs_direction(g, history)
                                          : [&] {
                                              std::vector<double> d(n);
                                              for (std::size_t i = 0; i < n; ++i)
                                                d[i] = -g[i];
                                              return d;
                                            }();
      const double descent = detail::dot(direction, g);
      if (attempt == 0 && !(descent < 0.0)) continue;

      double step = 1.0;
      for (std::size_t bt = 0; bt <= options.max_backtracks; ++bt) {
        std::vector<double> trial(n);
        for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + step * direction[i];
        clip(trial);
        double delta_norm = 0.0;
        std::vector<double> delta(n);
        for (std::size_t i = 0; i < n; ++i) {
          delta[i] = trial[i] - x[i];
          delta_norm = std::max(delta_norm, std::abs(delta[i]));
        }
        if (delta_norm == 0.0) break;  // direction fully blocked by the box
        const double f_trial = objective(trial, g_trial, false);
        const double directional = detail::dot(g, delta);
        if (std::isfinite(f_trial) && f_trial <= f + options.armijo_c * directional) {
          x_new = std::move(trial);
          step_delta = std::move(delta);
          f_new = f_trial;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
    }

    if (!accepted) {
      result.stop_reason = "line search could not decrease the objective";
      break;
    }

    const double f_check = objective(x_new, g_trial, true);
    (void)f_check;  // same point, same deterministic path as the accepted trial

    detail::LbfgsPair pair;
    pair.s = step_delta;
    pair.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) pair.y[i] = g_trial[i] - g[i];
    const double sy = detail::dot(pair.s, pair.y);
    if (sy > 1e-10 * detail::norm2(pair.s) * detail::norm2(pair.y)) {
      pair.inv_sy = 1.0 / sy;
      history.push_back(std::move(pair));
      if (history.size() > options.memory) history.pop_front();
    }

    x = std::move(x_new);
    f = f_new;
    g = g_trial;

    recent.push_back(f);
    if (recent.size() > options.stall_window + 1) recent.pop_front();
    if (recent.size() == options.stall_window + 1) {
      const double before = recent.front();
      const double rel_drop = (before - f) / std::max(std::abs(before), 1e-300);
      if (rel_drop < options.stall_tol) {
        ++iter;
        result.converged = true;
        result.stop_reason = "objective stalled";
        break;
      }
    }
  }

  if (result.stop_reason.empty()) result.stop_reason = "iteration cap reached";
  result.x = std::move(x);
  result.objective = f;
  result.iterations = iter;
  return result;
}

}  // namespace metacal::opt
