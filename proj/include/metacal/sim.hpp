#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "metacal/core.hpp"
#include "metacal/errors.hpp"

namespace metacal::sim {

/// Equilibrium speed of the exponential fundamental diagram,
/// v* exp(-(1/a) (rho / (rho* lanes))^a), evaluated on total density.
inline double equilibrium_speed(double rho_total, double lanes, double v_star,
                                double rho_star, double alpha) {
  const double z = rho_total / (rho_star * lanes);
  return v_star * std::exp(-std::pow(z, alpha) / alpha);
}

struct DensityStep {
  double rho = 0.0;
  bool clamped = false;  // negative pre-clamp value was raised to 0
};

/// Conservation update: rho + (delta/L)(q_up - q_self/(1-beta) + r).
/// Negative results are clamped to zero and flagged.
inline DensityStep density_step(double rho, double q_up, double q_self, double beta,
                                double r, double segment_length_km, double delta_hours,
                                std::size_t t = 0, std::size_t x = 0) {
  const double one_minus_beta = 1.0 - beta;
  if (one_minus_beta < kBetaUnityGuard) throw BetaAtUnityError(t, x, beta);
  const double next =
      rho + delta_hours / segment_length_km * (q_up - q_self / one_minus_beta + r);
  if (next < 0.0) return {0.0, true};
  return {next, false};
}

struct SegmentParams {
  double tau = 0.0;
  double eta = 0.0;
  double kappa = 0.0;
  double v_star = 0.0;
  double rho_star = 0.0;
  double alpha = 0.0;
};

inline SegmentParams params_at(const ParameterSet& p, std::size_t x) {
  return {p.tau[x], p.eta[x], p.kappa[x], p.v_star[x], p.rho_star[x], p.alpha[x]};
}

struct SpeedStep {
  double v = 0.0;
  bool floored = false;  // raised to the configured speed floor
};

/// Speed update: relaxation toward the fundamental diagram, convection from
/// the upstream segment, anticipation of the downstream density gradient.
/// The floor applies after the full sum.
inline SpeedStep speed_step(double v, double v_up, double rho_perlane,
                            double rho_down_perlane, const SegmentParams& p,
                            double rho_total, double lanes, double segment_length_km,
                            double delta_hours, double v_min) {
  const double v_eq = equilibrium_speed(rho_total, lanes, p.v_star, p.rho_star, p.alpha);
  const double relaxation = delta_hours / p.tau * (v_eq - v);
  const double convection = delta_hours * v / segment_length_km * (v_up - v);
  const double anticipation = p.eta * delta_hours / (p.tau * segment_length_km) *
                              (rho_down_perlane - rho_perlane) /
                              (rho_perlane + p.kappa);
  const double next = v + relaxation + convection - anticipation;
  if (next < v_min) return {v_min, true};
  return {next, false};
}

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

struct ClampEvent {
  enum class Kind { DensityClamp, SpeedFloor };
  std::size_t t = 0;
  std::size_t x = 0;
  Kind kind = Kind::DensityClamp;
};

struct RolloutDiagnostics {
  std::size_t density_clamps = 0;
  std::size_t speed_floors = 0;
  bool cfl_warning = false;
  std::vector<ClampEvent> events;  // capped at kMaxStoredEvents

  static constexpr std::size_t kMaxStoredEvents = 1000;

  [[nodiscard]] bool clean() const { return density_clamps == 0 && speed_floors == 0; }
};

struct SimulationResult {
  StateGrid states;
  RolloutDiagnostics diagnostics;
};

/// SimulationResult plus the per-cell clamp flags the adjoint sweep needs.
/// Flag row t+1 marks a clamp applied while producing that row.
struct RolloutRecord {
  DGrid rho;
  DGrid q;
  DGrid v;
  MaskGrid rho_clamped;
  MaskGrid v_floored;
  RolloutDiagnostics diagnostics;
};

/// Deterministic forward rollout. Row 0 of the result equals the provided
/// initial condition; each later row is produced fully explicitly from the
/// previous one: first all flows, then all densities, then all speeds.
inline RolloutRecord rollout_record(const NetworkGeometry& geom,
                                    const ParameterSet& params,
                                    const RampSchedule& ramps,
                                    const BoundarySeries& boundaries,
                                    const std::vector<double>& initial_rho,
                                    const std::vector<double>& initial_v,
                                    const SimulationConfig& config) {
  const std::size_t n = geom.n_segments;
  const std::size_t t_steps = config.t_steps;
  if (initial_rho.size() != n || initial_v.size() != n)
    throw ShapeMismatchError("initial row must provide " + std::to_string(n) +
                             " densities and speeds");
  if (params.n_segments() != n || !params.shapes_consistent())
    throw ShapeMismatchError("parameter arrays must have one entry per segment");
  if (ramps.n_segments() != n || ramps.t_steps() < t_steps)
    throw ShapeMismatchError("ramp schedule must cover (t_steps, n_segments)");
  if (!boundaries.shapes_consistent() || boundaries.t_steps() < t_steps)
    throw ShapeMismatchError("boundary series must cover t_steps entries");
  if (!config.valid()) throw Error("simulation config requires delta > 0 and t_steps > 0");

  const double length = geom.segment_length_km;
  const double delta = config.delta_hours;
  const double lanes_down = boundaries.resolve_downstream_lanes(geom);

  RolloutRecord rec;
  rec.rho = DGrid(t_steps, n);
  rec.q = DGrid(t_steps, n);
  rec.v = DGrid(t_steps, n);
  rec.rho_clamped = MaskGrid(t_steps, n, 0);
  rec.v_floored = MaskGrid(t_steps, n, 0);

  double v_star_max = 0.0;
  for (double vs : params.v_star) v_star_max = std::max(v_star_max, vs);
  rec.diagnostics.cfl_warning = config.cfl_exceeded(v_star_max, length);

  for (std::size_t x = 0; x < n; ++x) {
    rec.rho(0, x) = initial_rho[x];
    rec.v(0, x) = initial_v[x];
  }

  auto note = [&rec](std::size_t t, std::size_t x, ClampEvent::Kind kind) {
    if (kind == ClampEvent::Kind::DensityClamp)
      ++rec.diagnostics.density_clamps;
    else
      ++rec.diagnostics.speed_floors;
    if (rec.diagnostics.events.size() < RolloutDiagnostics::kMaxStoredEvents)
      rec.diagnostics.events.push_back({t, x, kind});
  };

  for (std::size_t t = 0; t + 1 < t_steps; ++t) {
    for (std::size_t x = 0; x < n; ++x) rec.q(t, x) = rec.rho(t, x) * rec.v(t, x);

    for (std::size_t x = 0; x < n; ++x) {
      const double q_up = (x == 0) ? boundaries.upstream_flow[t] : rec.q(t, x - 1);
      const auto step = density_step(rec.rho(t, x), q_up, rec.q(t, x),
                                     ramps.beta()(t, x), ramps.r()(t, x), length, delta,
                                     t, x);
      rec.rho(t + 1, x) = step.rho;
      if (step.clamped) {
        rec.rho_clamped(t + 1, x) = 1;
        note(t + 1, x, ClampEvent::Kind::DensityClamp);
      }
    }

    for (std::size_t x = 0; x < n; ++x) {
      const double v_up = (x == 0) ? boundaries.upstream_speed[t] : rec.v(t, x - 1);
      const double rho_perlane = rec.rho(t, x) / geom.lanes[x];
      const double rho_down_perlane =
          (x + 1 < n) ? rec.rho(t, x + 1) / geom.lanes[x + 1]
                      : boundaries.downstream_density[t] / lanes_down;
      const auto step =
          speed_step(rec.v(t, x), v_up, rho_perlane, rho_down_perlane,
                     params_at(params, x), rec.rho(t, x), geom.lanes[x], length, delta,
                     config.v_min);
      rec.v(t + 1, x) = step.v;
      if (step.floored) {
        rec.v_floored(t + 1, x) = 1;
        note(t + 1, x, ClampEvent::Kind::SpeedFloor);
      }
    }
  }

  const std::size_t last = t_steps - 1;
  for (std::size_t x = 0; x < n; ++x) rec.q(last, x) = rec.rho(last, x) * rec.v(last, x);
  return rec;
}

inline SimulationResult rollout(const NetworkGeometry& geom, const ParameterSet& params,
                                const RampSchedule& ramps,
                                const BoundarySeries& boundaries,
                                const std::vector<double>& initial_rho,
                                const std::vector<double>& initial_v,
                                const SimulationConfig& config) {
  RolloutRecord rec = rollout_record(geom, params, ramps, boundaries, initial_rho,
                                     initial_v, config);
  return {StateGrid(std::move(rec.rho), std::move(rec.q), std::move(rec.v)),
          std::move(rec.diagnostics)};
}

/// Free-flow density (per lane) whose equilibrium flow matches the target
/// per-lane flow; bisection on the increasing branch of the fundamental
/// diagram. The target is capped just below capacity.
inline double freeflow_density_perlane(double q_target_perlane, double v_star,
                                       double rho_star, double alpha) {
  auto flow = [&](double rho_pl) {
    return rho_pl * equilibrium_speed(rho_pl, 1.0, v_star, rho_star, alpha);
  };
  const double q_cap = flow(rho_star);
  const double target = std::min(q_target_perlane, 0.999 * q_cap);
  double lo = 0.0, hi = rho_star;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (flow(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace metacal::sim
