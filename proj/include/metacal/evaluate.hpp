#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "metacal/core.hpp"
#include "metacal/errors.hpp"

namespace metacal::eval {

/// Per-variable absolute guards: cells whose truth magnitude falls below the
/// guard are skipped instead of dividing by a near-zero value.
struct MapeGuards {
  double rho = 0.5;  // veh/km
  double q = 10.0;   // veh/h
  double v = 1.0;    // km/h
};

/// Rectangular evaluation window over the (T, N) grid, [t_begin, t_end) x
/// [x_begin, x_end). Zero-initialized end means "through the last index".
struct EvalWindow {
  std::size_t t_begin = 0;
  std::size_t t_end = 0;
  std::size_t x_begin = 0;
  std::size_t x_end = 0;

  [[nodiscard]] EvalWindow resolved(std::size_t t_steps, std::size_t n_segments) const {
    EvalWindow w = *this;
    if (w.t_end == 0) w.t_end = t_steps;
    if (w.x_end == 0) w.x_end = n_segments;
    return w;
  }
};

struct EvaluationReport {
  double mape_rho = 0.0;
  double mape_q = 0.0;
  double mape_v = 0.0;
  double mape_mean = 0.0;
  std::size_t cells_evaluated = 0;  // (cell, variable) pairs that entered the means
  std::size_t cells_skipped = 0;    // missing or below-guard pairs
};

/// Mean absolute percentage error per variable between simulated and observed
/// grids. Cells marked missing in the truth are skipped, as are cells whose
/// truth magnitude is below the per-variable guard.
inline EvaluationReport mape(const StateGrid& sim, const StateGrid& truth,
                             EvalWindow window = {}, MapeGuards guards = {}) {
  if (sim.t_steps() != truth.t_steps() || sim.n_segments() != truth.n_segments())
    throw ShapeMismatchError("sim and truth grids differ in shape");
  const auto w = window.resolved(truth.t_steps(), truth.n_segments());

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  Acc acc_rho, acc_q, acc_v;
  std::size_t skipped = 0;

  auto add = [&skipped](Acc& acc, double sim_value, double truth_value, double guard) {
    if (std::abs(truth_value) < guard) {
      ++skipped;
      return;
    }
    acc.sum += std::abs(sim_value - truth_value) / std::abs(truth_value);
    ++acc.n;
  };

  for (std::size_t t = w.t_begin; t < w.t_end; ++t) {
    for (std::size_t x = w.x_begin; x < w.x_end; ++x) {
      if (truth.is_missing(t, x)) {
        skipped += 3;
        continue;
      }
      add(acc_rho, sim.rho(t, x), truth.rho(t, x), guards.rho);
      add(acc_q, sim.q(t, x), truth.q(t, x), guards.q);
      add(acc_v, sim.v(t, x), truth.v(t, x), guards.v);
    }
  }

  if (acc_rho.n == 0 || acc_q.n == 0 || acc_v.n == 0)
    throw AllCellsSkippedError("a variable has no evaluable cells");

  EvaluationReport report;
  report.mape_rho = 100.0 * acc_rho.sum / static_cast<double>(acc_rho.n);
  report.mape_q = 100.0 * acc_q.sum / static_cast<double>(acc_q.n);
  report.mape_v = 100.0 * acc_v.sum / static_cast<double>(acc_v.n);
  report.mape_mean = (report.mape_rho + report.mape_q + report.mape_v) / 3.0;
  report.cells_evaluated = acc_rho.n + acc_q.n + acc_v.n;
  report.cells_skipped = skipped;
  return report;
}

// ---------------------------------------------------------------------------
// Fundamental-diagram scatter
// ---------------------------------------------------------------------------

struct FdPoint {
  double density_perlane = 0.0;  // veh/km/lane
  double flow_perlane = 0.0;     // veh/h/lane
};

/// One (rho/lanes, q/lanes) point per space-time cell, row-major order.
inline std::vector<FdPoint> fd_scatter(const StateGrid& grid,
                                       const NetworkGeometry& geom) {
  std::vector<FdPoint> points;
  points.reserve(grid.t_steps() * grid.n_segments());
  for (std::size_t t = 0; t < grid.t_steps(); ++t)
    for (std::size_t x = 0; x < grid.n_segments(); ++x)
      points.push_back({grid.rho(t, x) / geom.lanes[x], grid.q(t, x) / geom.lanes[x]});
  return points;
}

// ---------------------------------------------------------------------------
// Parameter recovery
// ---------------------------------------------------------------------------

struct ParameterRecovery {
  // 100 * (estimated - truth) / truth, one entry per segment per parameter.
  std::vector<std::string> names{"tau", "eta", "kappa", "v_star", "rho_star", "alpha"};
  std::vector<std::vector<double>> percent_error;  // [parameter][segment]
};

inline ParameterRecovery parameter_recovery_report(const ParameterSet& estimated,
                                                   const ParameterSet& truth) {
  if (estimated.n_segments() != truth.n_segments())
    throw ShapeMismatchError("estimated and truth parameter sets differ in size");
  ParameterRecovery rec;
  auto row = [](const std::vector<double>& est, const std::vector<double>& tru) {
    std::vector<double> out(est.size());
    for (std::size_t x = 0; x < est.size(); ++x)
      out[x] = 100.0 * (est[x] - tru[x]) / tru[x];
    return out;
  };
  rec.percent_error.push_back(row(estimated.tau, truth.tau));
  rec.percent_error.push_back(row(estimated.eta, truth.eta));
  rec.percent_error.push_back(row(estimated.kappa, truth.kappa));
  rec.percent_error.push_back(row(estimated.v_star, truth.v_star));
  rec.percent_error.push_back(row(estimated.rho_star, truth.rho_star));
  rec.percent_error.push_back(row(estimated.alpha, truth.alpha));
  return rec;
}

}  // namespace metacal::eval
