#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metacal/core.hpp"
#include "metacal/errors.hpp"
#include "metacal/sim.hpp"

namespace metacal::scenario {

/// Piecewise-linear corridor inflow: baseline, ramp up to a plateau, ramp
/// back down. Times in minutes from the start of the run.
struct DemandProfile {
  double baseline_veh_h = 4000.0;
  double peak_veh_h = 7000.0;
  double rise_start_min = 8.0;
  double rise_end_min = 10.0;
  double fall_start_min = 30.0;
  double fall_end_min = 32.0;

  [[nodiscard]] double at(double time_h) const {
    const double m = time_h * 60.0;
    if (m <= rise_start_min || m >= fall_end_min) return baseline_veh_h;
    if (m < rise_end_min)
      return baseline_veh_h + (peak_veh_h - baseline_veh_h) * (m - rise_start_min) /
                                  (rise_end_min - rise_start_min);
    if (m <= fall_start_min) return peak_veh_h;
    return peak_veh_h + (baseline_veh_h - peak_veh_h) * (m - fall_start_min) /
                            (fall_end_min - fall_start_min);
  }
};

enum class RampShape { Constant, Triangular, Step };

/// On-ramp inflow recipe. peak_veh_h is the level for Constant/Step and the
/// apex for Triangular. The window defaults to the whole run.
struct OnRampSpec {
  std::size_t segment = 0;
  RampShape shape = RampShape::Constant;
  double peak_veh_h = 0.0;
  double start_min = 0.0;
  double end_min = 1e9;
  double apex_min = -1.0;  // Triangular only; default midpoint of the window
};

struct OffRampSpec {
  std::size_t segment = 0;
  RampShape shape = RampShape::Constant;
  double beta = 0.0;
  double start_min = 0.0;
  double end_min = 1e9;
  double apex_min = -1.0;
};

namespace detail {

inline double shape_value(RampShape shape, double level, double m, double start_min,
                          double end_min, double apex_min) {
  switch (shape) {
    case RampShape::Constant:
    case RampShape::Step:
      return (m >= start_min && m < end_min) ? level : 0.0;
    case RampShape::Triangular: {
      if (m <= start_min || m >= end_min) return 0.0;
      const double apex = apex_min >= 0.0 ? apex_min : 0.5 * (start_min + end_min);
      if (m <= apex) return level * (m - start_min) / (apex - start_min);
      return level * (end_min - m) / (end_min - apex);
    }
  }
  return 0.0;
}

}  // namespace detail

struct ScenarioSpec {
  std::size_t n_segments = 20;
  double segment_length_km = 0.4;
  std::vector<double> lanes;  // empty: 4 lanes for the first half, 2 after the drop
  std::optional<ParameterSet> params;  // default: the built-in ground truth below
  DemandProfile demand;
  std::vector<OnRampSpec> onramps;
  std::vector<OffRampSpec> offramps;
  std::vector<std::uint8_t> onramp_mask;   // optional; must agree with recipes
  std::vector<std::uint8_t> offramp_mask;
  std::vector<double> downstream_density;  // optional explicit profile, veh/km
  double delta_hours = 10.0 / 3600.0;
  std::size_t t_steps = 360;
  double v_min = 1.0;
  std::uint64_t seed = 0;
};

/// Uniform ground-truth parameters of the built-in bottleneck scenario.
inline ParameterSet default_truth_params(std::size_t n_segments) {
  return ParameterSet::uniform(n_segments, 18.0 / 3600.0, 30.0, 40.0, 120.0, 37.45, 1.4,
                               ParamSharing::SegmentInvariant);
}

struct ScenarioBundle {
  ScenarioSpec spec;  // fully resolved copy
  NetworkGeometry geometry;
  ParameterSet truth_params;
  RampSchedule truth_ramps;
  BoundarySeries boundaries;
  std::vector<double> initial_rho;
  std::vector<double> initial_v;
  StateGrid truth;
  sim::RolloutDiagnostics diagnostics;
};

namespace detail {

// Four lanes on the first ten segments, two lanes past the drop.
inline std::vector<double> default_lane_profile(std::size_t n) {
  std::vector<double> lanes(n, 2.0);
  for (std::size_t x = 0; x < std::min<std::size_t>(n, 10); ++x) lanes[x] = 4.0;
  return lanes;
}

inline RampSchedule build_ramp_schedule(const ScenarioSpec& spec,
                                        const NetworkGeometry& geom) {
  RampSchedule ramps(spec.t_steps, geom, RampSharing::TimeVarying);
  for (std::size_t t = 0; t < spec.t_steps; ++t) {
    const double m = static_cast<double>(t) * spec.delta_hours * 60.0;
    for (const auto& on : spec.onramps)
      ramps.set_r(t, on.segment,
                  shape_value(on.shape, on.peak_veh_h, m, on.start_min, on.end_min,
                              on.apex_min));
    for (const auto& off : spec.offramps)
      ramps.set_beta(t, off.segment,
                     shape_value(off.shape, off.beta, m, off.start_min, off.end_min,
                                 off.apex_min));
  }
  return ramps;
}

/// Steady-state mainline flow entering the virtual downstream segment when
/// the inflow is `demand` and ramp row `t` holds: q_x = (1-beta_x)(q_{x-1} + r_x).
inline double chained_outflow(double demand, const RampSchedule& ramps, std::size_t t,
                              std::size_t n) {
  double q = demand;
  for (std::size_t x = 0; x < n; ++x) q = (1.0 - ramps.beta()(t, x)) * (q + ramps.r()(t, x));
  return q;
}

}  // namespace detail

/// Builds the lane-drop corridor, rolls out the ground-truth parameters under
/// the demand profile, and returns everything a calibration problem needs.
/// The downstream density boundary, unless given explicitly, is aligned with
/// the simulated outflow by two fixed-point passes so the bottleneck stays
/// internal to the corridor.
inline ScenarioBundle generate_bottleneck(ScenarioSpec spec) {
  const std::size_t n = spec.n_segments;
  if (spec.lanes.empty()) spec.lanes = detail::default_lane_profile(n);
  if (!spec.params) spec.params = default_truth_params(n);
  if (spec.params->n_segments() != n)
    throw ShapeMismatchError("scenario params must cover n_segments");

  NetworkGeometry geom = make_geometry(n, spec.segment_length_km, spec.lanes);
  for (const auto& on : spec.onramps) {
    if (on.segment >= n) throw RampOnMaskedSegmentError("on-ramp segment out of range");
    geom.onramp_mask[on.segment] = 1;
  }
  for (const auto& off : spec.offramps) {
    if (off.segment >= n)
      throw RampOnMaskedSegmentError("off-ramp segment out of range");
    geom.offramp_mask[off.segment] = 1;
  }
  if (!spec.onramp_mask.empty() && spec.onramp_mask != geom.onramp_mask)
    throw RampOnMaskedSegmentError("explicit onramp_mask disagrees with ramp recipes");
  if (!spec.offramp_mask.empty() && spec.offramp_mask != geom.offramp_mask)
    throw RampOnMaskedSegmentError("explicit offramp_mask disagrees with ramp recipes");
  spec.onramp_mask = geom.onramp_mask;
  spec.offramp_mask = geom.offramp_mask;

  const auto validation = validate_geometry(geom);
  if (!validation.ok()) throw Error("scenario geometry: " + validation.issues[0].message);

  const ParameterSet& params = *spec.params;
  // Loose physical cap on the demand profile: flow at critical density with
  // free-flow speed on the first segment's lanes.
  const double demand_cap = geom.lanes[0] * params.v_star[0] * params.rho_star[0];
  for (std::size_t t = 0; t < spec.t_steps; ++t) {
    const double d = spec.demand.at(static_cast<double>(t) * spec.delta_hours);
    if (d < 0.0 || d > demand_cap)
      throw Error("demand profile leaves [0, " + std::to_string(demand_cap) + "]");
  }

  RampSchedule ramps = detail::build_ramp_schedule(spec, geom);

  SimulationConfig config;
  config.delta_hours = spec.delta_hours;
  config.t_steps = spec.t_steps;
  config.v_min = spec.v_min;

  // Initial state: free-flow equilibrium of the chained baseline flows.
  std::vector<double> initial_rho(n), initial_v(n);
  {
    double q = spec.demand.at(0.0);
    for (std::size_t x = 0; x < n; ++x) {
      q = (1.0 - ramps.beta()(0, x)) * (q + ramps.r()(0, x));
      const double rho_pl = sim::freeflow_density_perlane(
          q / geom.lanes[x], params.v_star[x], params.rho_star[x], params.alpha[x]);
      initial_rho[x] = rho_pl * geom.lanes[x];
      initial_v[x] = sim::equilibrium_speed(initial_rho[x], geom.lanes[x],
                                            params.v_star[x], params.rho_star[x],
                                            params.alpha[x]);
    }
  }

  BoundarySeries boundaries;
  boundaries.upstream_flow.resize(spec.t_steps);
  boundaries.upstream_speed.resize(spec.t_steps);
  boundaries.downstream_density.resize(spec.t_steps);
  boundaries.downstream_lanes = geom.lanes.back();
  const double lanes_last = geom.lanes.back();
  const std::size_t last = n - 1;
  for (std::size_t t = 0; t < spec.t_steps; ++t) {
    const double demand = spec.demand.at(static_cast<double>(t) * spec.delta_hours);
    boundaries.upstream_flow[t] = demand;
    const double rho_in_pl = sim::freeflow_density_perlane(
        demand / geom.lanes[0], params.v_star[0], params.rho_star[0], params.alpha[0]);
    boundaries.upstream_speed[t] =
        sim::equilibrium_speed(rho_in_pl, 1.0, params.v_star[0], params.rho_star[0],
                               params.alpha[0]);
    const double out = detail::chained_outflow(demand, ramps, t, n);
    boundaries.downstream_density[t] =
        lanes_last * sim::freeflow_density_perlane(out / lanes_last, params.v_star[last],
                                                   params.rho_star[last],
                                                   params.alpha[last]);
  }

  sim::RolloutRecord rec;
  if (!spec.downstream_density.empty()) {
    if (spec.downstream_density.size() != spec.t_steps)
      throw ShapeMismatchError("downstream_density profile must have t_steps entries");
    boundaries.downstream_density = spec.downstream_density;
    rec = sim::rollout_record(geom, params, ramps, boundaries, initial_rho, initial_v,
                              config);
  } else {
    for (int pass = 0; pass < 3; ++pass) {
      rec = sim::rollout_record(geom, params, ramps, boundaries, initial_rho, initial_v,
                                config);
      if (pass == 2) break;
      for (std::size_t t = 0; t < spec.t_steps; ++t)
        boundaries.downstream_density[t] =
            lanes_last * sim::freeflow_density_perlane(rec.q(t, last) / lanes_last,
                                                       params.v_star[last],
                                                       params.rho_star[last],
                                                       params.alpha[last]);
    }
    spec.downstream_density = boundaries.downstream_density;
  }

  ScenarioBundle bundle;
  bundle.spec = spec;
  bundle.geometry = std::move(geom);
  bundle.truth_params = params;
  bundle.truth_ramps = std::move(ramps);
  bundle.boundaries = std::move(boundaries);
  bundle.initial_rho = std::move(initial_rho);
  bundle.initial_v = std::move(initial_v);
  bundle.diagnostics = rec.diagnostics;
  bundle.truth = StateGrid(std::move(rec.rho), std::move(rec.q), std::move(rec.v));
  return bundle;
}

/// Same pipeline with a nonzero ramp schedule; the schedule doubles as the
/// recovery ground truth for joint-estimation experiments.
inline ScenarioBundle generate_ramped(const ScenarioSpec& spec) {
  if (spec.onramps.empty() && spec.offramps.empty())
    throw RampOnMaskedSegmentError(
        "ramped scenario needs at least one on- or off-ramp recipe");
  return generate_bottleneck(spec);
}

// ---------------------------------------------------------------------------
// Spec JSON
// ---------------------------------------------------------------------------

inline RampShape shape_from_string(const std::string& s) {
  if (s == "constant") return RampShape::Constant;
  if (s == "triangular") return RampShape::Triangular;
  if (s == "step") return RampShape::Step;
  throw ParseError("unknown ramp shape '" + s + "'");
}

inline std::string shape_to_string(RampShape s) {
  switch (s) {
    case RampShape::Constant: return "constant";
    case RampShape::Triangular: return "triangular";
    case RampShape::Step: return "step";
  }
  return "constant";
}

inline nlohmann::json spec_to_json(const ScenarioSpec& spec);
inline ScenarioSpec spec_from_json(const nlohmann::json& j);

inline nlohmann::json spec_to_json(const ScenarioSpec& spec) {
  nlohmann::json j;
  j["n_segments"] = spec.n_segments;
  j["segment_length_km"] = spec.segment_length_km;
  if (!spec.lanes.empty()) j["lanes"] = spec.lanes;
  if (spec.params) {
    nlohmann::json p;
    const auto& ps = *spec.params;
    auto field = [&](const std::vector<double>& v) -> nlohmann::json {
      if (ps.sharing == ParamSharing::SegmentInvariant) return v.front();
      return v;
    };
    p["tau"] = field(ps.tau);
    p["eta"] = field(ps.eta);
    p["kappa"] = field(ps.kappa);
    p["v_star"] = field(ps.v_star);
    p["rho_star"] = field(ps.rho_star);
    p["alpha"] = field(ps.alpha);
    j["params"] = p;
  }
  j["demand"] = {{"baseline_veh_h", spec.demand.baseline_veh_h},
                 {"peak_veh_h", spec.demand.peak_veh_h},
                 {"rise_start_min", spec.demand.rise_start_min},
                 {"rise_end_min", spec.demand.rise_end_min},
                 {"fall_start_min", spec.demand.fall_start_min},
                 {"fall_end_min", spec.demand.fall_end_min}};
  auto onramps = nlohmann::json::array();
  for (const auto& on : spec.onramps)
    onramps.push_back({{"segment", on.segment},
                       {"shape", shape_to_string(on.shape)},
                       {"peak_veh_h", on.peak_veh_h},
                       {"start_min", on.start_min},
                       {"end_min", on.end_min},
                       {"apex_min", on.apex_min}});
  if (!onramps.empty()) j["onramps"] = onramps;
  auto offramps = nlohmann::json::array();
  for (const auto& off : spec.offramps)
    offramps.push_back({{"segment", off.segment},
                        {"shape", shape_to_string(off.shape)},
                        {"beta", off.beta},
                        {"start_min", off.start_min},
                        {"end_min", off.end_min},
                        {"apex_min", off.apex_min}});
  if (!offramps.empty()) j["offramps"] = offramps;
  if (!spec.downstream_density.empty()) j["downstream_density"] = spec.downstream_density;
  j["delta_hours"] = spec.delta_hours;
  j["t_steps"] = spec.t_steps;
  j["v_min"] = spec.v_min;
  j["seed"] = spec.seed;
  return j;
}

inline ScenarioSpec spec_from_json(const nlohmann::json& j) {
  ScenarioSpec spec;
  try {
    if (j.contains("n_segments")) spec.n_segments = j["n_segments"].get<std::size_t>();
    if (j.contains("segment_length_km"))
      spec.segment_length_km = j["segment_length_km"].get<double>();
    if (j.contains("lanes")) spec.lanes = j["lanes"].get<std::vector<double>>();
    if (j.contains("params")) {
      const auto& p = j["params"];
      ParameterSet ps;
      bool any_array = false;
      auto field = [&](const char* name) {
        const auto& v = p.at(name);
        if (v.is_array()) {
          any_array = true;
          return v.get<std::vector<double>>();
        }
        return std::vector<double>(spec.n_segments, v.get<double>());
      };
      ps.tau = field("tau");
      ps.eta = field("eta");
      ps.kappa = field("kappa");
      ps.v_star = field("v_star");
      ps.rho_star = field("rho_star");
      ps.alpha = field("alpha");
      ps.sharing =
          any_array ? ParamSharing::SegmentVarying : ParamSharing::SegmentInvariant;
      spec.params = std::move(ps);
    }
    if (j.contains("demand")) {
      const auto& d = j["demand"];
      if (d.contains("baseline_veh_h"))
        spec.demand.baseline_veh_h = d["baseline_veh_h"].get<double>();
      if (d.contains("peak_veh_h")) spec.demand.peak_veh_h = d["peak_veh_h"].get<double>();
      if (d.contains("rise_start_min"))
        spec.demand.rise_start_min = d["rise_start_min"].get<double>();
      if (d.contains("rise_end_min"))
        spec.demand.rise_end_min = d["rise_end_min"].get<double>();
      if (d.contains("fall_start_min"))
        spec.demand.fall_start_min = d["fall_start_min"].get<double>();
      if (d.contains("fall_end_min"))
        spec.demand.fall_end_min = d["fall_end_min"].get<double>();
    }
    for (const auto& o : j.value("onramps", nlohmann::json::array())) {
      OnRampSpec on;
      on.segment = o.at("segment").get<std::size_t>();
      on.shape = shape_from_string(o.value("shape", "constant"));
      on.peak_veh_h = o.at("peak_veh_h").get<double>();
      on.start_min = o.value("start_min", 0.0);
      on.end_min = o.value("end_min", 1e9);
      on.apex_min = o.value("apex_min", -1.0);
      spec.onramps.push_back(on);
    }
    for (const auto& o : j.value("offramps", nlohmann::json::array())) {
      OffRampSpec off;
      off.segment = o.at("segment").get<std::size_t>();
      off.shape = shape_from_string(o.value("shape", "constant"));
      off.beta = o.at("beta").get<double>();
      off.start_min = o.value("start_min", 0.0);
      off.end_min = o.value("end_min", 1e9);
      off.apex_min = o.value("apex_min", -1.0);
      spec.offramps.push_back(off);
    }
    if (j.contains("onramp_mask"))
      for (int m : j["onramp_mask"].get<std::vector<int>>())
        spec.onramp_mask.push_back(m ? 1 : 0);
    if (j.contains("offramp_mask"))
      for (int m : j["offramp_mask"].get<std::vector<int>>())
        spec.offramp_mask.push_back(m ? 1 : 0);
    if (j.contains("downstream_density"))
      spec.downstream_density = j["downstream_density"].get<std::vector<double>>();
    if (j.contains("delta_hours")) spec.delta_hours = j["delta_hours"].get<double>();
    if (j.contains("t_steps")) spec.t_steps = j["t_steps"].get<std::size_t>();
    if (j.contains("v_min")) spec.v_min = j["v_min"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario spec json: ") + e.what());
  }
  return spec;
}

}  // namespace metacal::scenario
