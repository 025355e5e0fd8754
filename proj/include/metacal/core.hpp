#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metacal/errors.hpp"

namespace metacal {

/// Dense row-major (rows, cols) grid. Traffic state grids use rows = timesteps,
/// cols = segments.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  T& operator()(std::size_t row, std::size_t col) { return data_[row * cols_ + col]; }
  const T& operator()(std::size_t row, std::size_t col) const { return data_[row * cols_ + col]; }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  [[nodiscard]] bool same_shape(const Grid& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DGrid = Grid<double>;
using MaskGrid = Grid<std::uint8_t>;

// ---------------------------------------------------------------------------
// Network geometry
// ---------------------------------------------------------------------------

/// A single mainline corridor of equal-length segments. Lane counts are real
/// valued; a lane drop inside a segment shows up as a fractional count.
struct NetworkGeometry {
  std::size_t n_segments = 0;
  double segment_length_km = 0.0;
  std::vector<double> lanes;
  std::vector<std::uint8_t> onramp_mask;
  std::vector<std::uint8_t> offramp_mask;

  [[nodiscard]] double corridor_length_km() const {
    return static_cast<double>(n_segments) * segment_length_km;
  }

  [[nodiscard]] std::vector<std::size_t> onramp_segments() const {
    std::vector<std::size_t> out;
    for (std::size_t x = 0; x < onramp_mask.size(); ++x)
      if (onramp_mask[x]) out.push_back(x);
    return out;
  }

  [[nodiscard]] std::vector<std::size_t> offramp_segments() const {
    std::vector<std::size_t> out;
    for (std::size_t x = 0; x < offramp_mask.size(); ++x)
      if (offramp_mask[x]) out.push_back(x);
    return out;
  }

  [[nodiscard]] bool has_ramps() const {
    return !onramp_segments().empty() || !offramp_segments().empty();
  }
};

enum class GeometryIssueCode {
  TooFewSegments,
  NonPositiveLength,
  NonPositiveLanes,
  MaskLengthMismatch,
};

struct GeometryIssue {
  GeometryIssueCode code;
  std::size_t segment = 0;  // meaningful for NonPositiveLanes
  std::string message;
};

struct GeometryValidation {
  std::vector<GeometryIssue> issues;
  [[nodiscard]] bool ok() const { return issues.empty(); }
};

/// Checks every geometry invariant and reports the complete list of
/// violations rather than stopping at the first.
inline GeometryValidation validate_geometry(const NetworkGeometry& geom) {
  GeometryValidation result;
  if (geom.n_segments < 2) {
    result.issues.push_back({GeometryIssueCode::TooFewSegments, 0,
                             "n_segments must be at least 2, got " +
                                 std::to_string(geom.n_segments)});
  }
  if (!(geom.segment_length_km > 0.0)) {
    result.issues.push_back({GeometryIssueCode::NonPositiveLength, 0,
                             "segment_length_km must be positive"});
  }
  if (geom.lanes.size() != geom.n_segments) {
    result.issues.push_back({GeometryIssueCode::MaskLengthMismatch, 0,
                             "lanes has length " + std::to_string(geom.lanes.size()) +
                                 ", expected " + std::to_string(geom.n_segments)});
  } else {
    for (std::size_t x = 0; x < geom.lanes.size(); ++x) {
      if (!(geom.lanes[x] > 0.0)) {
        result.issues.push_back({GeometryIssueCode::NonPositiveLanes, x,
                                 "lanes[" + std::to_string(x) + "] must be positive"});
      }
    }
  }
  if (geom.onramp_mask.size() != geom.n_segments) {
    result.issues.push_back({GeometryIssueCode::MaskLengthMismatch, 0,
                             "onramp_mask has length " +
                                 std::to_string(geom.onramp_mask.size()) + ", expected " +
                                 std::to_string(geom.n_segments)});
  }
  if (geom.offramp_mask.size() != geom.n_segments) {
    result.issues.push_back({GeometryIssueCode::MaskLengthMismatch, 0,
                             "offramp_mask has length " +
                                 std::to_string(geom.offramp_mask.size()) + ", expected " +
                                 std::to_string(geom.n_segments)});
  }
  return result;
}

/// Builds a geometry with all-zero ramp masks.
inline NetworkGeometry make_geometry(std::size_t n_segments, double segment_length_km,
                                     std::vector<double> lanes) {
  NetworkGeometry geom;
  geom.n_segments = n_segments;
  geom.segment_length_km = segment_length_km;
  geom.lanes = std::move(lanes);
  geom.onramp_mask.assign(n_segments, 0);
  geom.offramp_mask.assign(n_segments, 0);
  return geom;
}

/// Length-weighted lane count of a segment tiled by (length_km, lane_count)
/// pieces. A 0.4 km segment with 0.3 km of 4 lanes and 0.1 km of 5 lanes
/// averages to 4.25 lanes.
inline double lane_profile_from_breakpoints(
    double segment_length_km, const std::vector<std::pair<double, double>>& pieces) {
  double total_length = 0.0;
  double weighted = 0.0;
  for (const auto& [length_km, lane_count] : pieces) {
    total_length += length_km;
    weighted += length_km * lane_count;
  }
  if (std::abs(total_length - segment_length_km) >
      1e-9 * std::max(1.0, segment_length_km)) {
    throw LengthMismatchError("lane pieces sum to " + std::to_string(total_length) +
                              " km, segment is " + std::to_string(segment_length_km) +
                              " km");
  }
  return weighted / segment_length_km;
}

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

enum class ParamSharing { SegmentVarying, SegmentInvariant };

/// Per-segment model parameters. Under SegmentInvariant sharing every segment
/// carries the same value; the arrays are kept expanded so evaluation code is
/// identical in both modes.
struct ParameterSet {
  std::vector<double> tau;       // relaxation time, hours
  std::vector<double> eta;       // anticipation coefficient
  std::vector<double> kappa;     // anticipation smoothing, veh/km/lane
  std::vector<double> v_star;    // free-flow speed, km/h
  std::vector<double> rho_star;  // critical density, veh/km/lane
  std::vector<double> alpha;     // fundamental diagram exponent
  ParamSharing sharing = ParamSharing::SegmentVarying;

  [[nodiscard]] std::size_t n_segments() const { return tau.size(); }

  static ParameterSet uniform(std::size_t n, double tau, double eta, double kappa,
                              double v_star, double rho_star, double alpha,
                              ParamSharing sharing = ParamSharing::SegmentInvariant) {
    ParameterSet p;
    p.tau.assign(n, tau);
    p.eta.assign(n, eta);
    p.kappa.assign(n, kappa);
    p.v_star.assign(n, v_star);
    p.rho_star.assign(n, rho_star);
    p.alpha.assign(n, alpha);
    p.sharing = sharing;
    return p;
  }

  [[nodiscard]] bool shapes_consistent() const {
    const std::size_t n = tau.size();
    return eta.size() == n && kappa.size() == n && v_star.size() == n &&
           rho_star.size() == n && alpha.size() == n;
  }

  [[nodiscard]] bool all_positive() const {
    auto pos = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
    };
    return pos(tau) && pos(eta) && pos(kappa) && pos(v_star) && pos(rho_star) &&
           pos(alpha);
  }

  /// Under SegmentInvariant sharing, every per-segment view must be constant.
  [[nodiscard]] bool sharing_consistent() const {
    if (sharing == ParamSharing::SegmentVarying) return true;
    auto constant = [](const std::vector<double>& v) {
      return v.empty() ||
             std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    return constant(tau) && constant(eta) && constant(kappa) && constant(v_star) &&
           constant(rho_star) && constant(alpha);
  }
};

// ---------------------------------------------------------------------------
// Ramp schedule
// ---------------------------------------------------------------------------

enum class RampSharing { TimeVarying, TimeInvariant };

// 1 - beta below this is treated as singular in the conservation update.
inline constexpr double kBetaUnityGuard = 1e-6;

/// Time x segment on-ramp inflows r (veh/h) and off-ramp split ratios beta.
/// Off-mask entries are structurally zero: the only mutation paths are the
/// mask-checked setters, so the sparsity invariant holds by construction.
class RampSchedule {
 public:
  RampSchedule() = default;

  RampSchedule(std::size_t t_steps, const NetworkGeometry& geom,
               RampSharing sharing = RampSharing::TimeVarying)
      : r_(t_steps, geom.n_segments, 0.0),
        beta_(t_steps, geom.n_segments, 0.0),
        onramp_mask_(geom.onramp_mask),
        offramp_mask_(geom.offramp_mask),
        sharing_(sharing) {}

  /// Validates mask sparsity and value ranges of externally supplied grids.
  static RampSchedule from_grids(DGrid r, DGrid beta, const NetworkGeometry& geom,
                                 RampSharing sharing = RampSharing::TimeVarying) {
    if (!r.same_shape(beta)) throw ShapeMismatchError("r and beta grids differ in shape");
    if (r.cols() != geom.n_segments)
      throw ShapeMismatchError("ramp grids have " + std::to_string(r.cols()) +
                               " segments, geometry has " +
                               std::to_string(geom.n_segments));
    for (std::size_t t = 0; t < r.rows(); ++t) {
      for (std::size_t x = 0; x < r.cols(); ++x) {
        if (!geom.onramp_mask[x] && r(t, x) != 0.0)
          throw MaskViolationError("nonzero on-ramp flow at unmasked segment " +
                                   std::to_string(x));
        if (!geom.offramp_mask[x] && beta(t, x) != 0.0)
          throw MaskViolationError("nonzero split ratio at unmasked segment " +
                                   std::to_string(x));
        if (r(t, x) < 0.0)
          throw MaskViolationError("negative on-ramp flow at segment " +
                                   std::to_string(x));
        if (beta(t, x) < 0.0 || beta(t, x) > 1.0 - kBetaUnityGuard)
          throw MaskViolationError("split ratio out of [0, 1) at segment " +
                                   std::to_string(x));
      }
    }
    RampSchedule s;
    s.r_ = std::move(r);
    s.beta_ = std::move(beta);
    s.onramp_mask_ = geom.onramp_mask;
    s.offramp_mask_ = geom.offramp_mask;
    s.sharing_ = sharing;
    return s;
  }

  void set_r(std::size_t t, std::size_t x, double value) {
    if (!onramp_mask_[x] && value != 0.0)
      throw MaskViolationError("segment " + std::to_string(x) + " has no on-ramp");
    if (value < 0.0)
      throw MaskViolationError("on-ramp flow must be nonnegative");
    r_(t, x) = value;
  }

  void set_beta(std::size_t t, std::size_t x, double value) {
    if (!offramp_mask_[x] && value != 0.0)
      throw MaskViolationError("segment " + std::to_string(x) + " has no off-ramp");
    if (value < 0.0 || value > 1.0 - kBetaUnityGuard)
      throw MaskViolationError("split ratio must lie in [0, 1 - 1e-6]");
    beta_(t, x) = value;
  }

  [[nodiscard]] const DGrid& r() const { return r_; }
  [[nodiscard]] const DGrid& beta() const { return beta_; }
  [[nodiscard]] RampSharing sharing() const { return sharing_; }
  void set_sharing(RampSharing s) { sharing_ = s; }

  [[nodiscard]] std::size_t t_steps() const { return r_.rows(); }
  [[nodiscard]] std::size_t n_segments() const { return r_.cols(); }

  /// Scan check of the sparsity invariant.
  [[nodiscard]] bool sparsity_ok() const {
    for (std::size_t t = 0; t < r_.rows(); ++t)
      for (std::size_t x = 0; x < r_.cols(); ++x) {
        if (!onramp_mask_[x] && r_(t, x) != 0.0) return false;
        if (!offramp_mask_[x] && beta_(t, x) != 0.0) return false;
      }
    return true;
  }

  /// Under TimeInvariant sharing, every ramp column must be constant in time.
  [[nodiscard]] bool time_invariance_ok() const {
    if (sharing_ == RampSharing::TimeVarying) return true;
    for (std::size_t x = 0; x < r_.cols(); ++x)
      for (std::size_t t = 1; t < r_.rows(); ++t)
        if (r_(t, x) != r_(0, x) || beta_(t, x) != beta_(0, x)) return false;
    return true;
  }

 private:
  DGrid r_;
  DGrid beta_;
  std::vector<std::uint8_t> onramp_mask_;
  std::vector<std::uint8_t> offramp_mask_;
  RampSharing sharing_ = RampSharing::TimeVarying;
};

// ---------------------------------------------------------------------------
// State grids
// ---------------------------------------------------------------------------

/// Time x segment traffic state: total density (veh/km across all lanes),
/// total flow (veh/h), mean speed (km/h). The constructor rejects mismatched
/// shapes and negative observed values.
struct StateGrid {
  DGrid rho;
  DGrid q;
  DGrid v;
  std::optional<MaskGrid> missing;  // 1 = no observation at that cell

  StateGrid() = default;

  StateGrid(DGrid rho_in, DGrid q_in, DGrid v_in,
            std::optional<MaskGrid> missing_in = std::nullopt)
      : rho(std::move(rho_in)),
        q(std::move(q_in)),
        v(std::move(v_in)),
        missing(std::move(missing_in)) {
    if (!rho.same_shape(q) || !rho.same_shape(v))
      throw ShapeMismatchError("rho, q, v grids must share one (T, N) shape");
    if (missing && (missing->rows() != rho.rows() || missing->cols() != rho.cols()))
      throw ShapeMismatchError("missing mask shape differs from state grids");
    for (std::size_t t = 0; t < rho.rows(); ++t)
      for (std::size_t x = 0; x < rho.cols(); ++x) {
        if (is_missing(t, x)) continue;
        if (rho(t, x) < 0.0 || q(t, x) < 0.0 || v(t, x) < 0.0)
          throw Error("negative observed state at t=" + std::to_string(t) +
                      ", x=" + std::to_string(x));
      }
  }

  [[nodiscard]] std::size_t t_steps() const { return rho.rows(); }
  [[nodiscard]] std::size_t n_segments() const { return rho.cols(); }

  [[nodiscard]] bool is_missing(std::size_t t, std::size_t x) const {
    return missing && (*missing)(t, x) != 0;
  }

  [[nodiscard]] std::size_t missing_count() const {
    if (!missing) return 0;
    std::size_t n = 0;
    for (auto m : missing->data()) n += (m != 0);
    return n;
  }
};

// ---------------------------------------------------------------------------
// Boundary conditions
// ---------------------------------------------------------------------------

/// Per-timestep corridor boundary data. upstream_flow feeds the first
/// segment's conservation; upstream_speed stands in for the (nonexistent)
/// segment -1 in the convection term; downstream_density closes the
/// anticipation term at the last segment.
struct BoundarySeries {
  std::vector<double> upstream_flow;       // veh/h
  std::vector<double> upstream_speed;      // km/h
  std::vector<double> downstream_density;  // veh/km (total over downstream_lanes)
  std::optional<double> downstream_lanes;  // defaults to lanes[N-1]

  [[nodiscard]] std::size_t t_steps() const { return upstream_flow.size(); }

  [[nodiscard]] bool shapes_consistent() const {
    return upstream_speed.size() == upstream_flow.size() &&
           downstream_density.size() == upstream_flow.size();
  }

  [[nodiscard]] double resolve_downstream_lanes(const NetworkGeometry& geom) const {
    return downstream_lanes.value_or(geom.lanes.back());
  }
};

/// Fallback when no separate boundary files exist: edge segments of the
/// observed grid play the boundary roles, and fitting is restricted to the
/// interior segments by the caller.
inline BoundarySeries extract_boundaries_from_grid(const StateGrid& truth,
                                                   const NetworkGeometry& geom) {
  const std::size_t t_steps = truth.t_steps();
  const std::size_t last = geom.n_segments - 1;
  BoundarySeries b;
  b.upstream_flow.resize(t_steps);
  b.upstream_speed.resize(t_steps);
  b.downstream_density.resize(t_steps);
  for (std::size_t t = 0; t < t_steps; ++t) {
    b.upstream_flow[t] = truth.q(t, 0);
    b.upstream_speed[t] = truth.v(t, 0);
    b.downstream_density[t] = truth.rho(t, last);
  }
  b.downstream_lanes = geom.lanes[last];
  return b;
}

// ---------------------------------------------------------------------------
// Simulation configuration
// ---------------------------------------------------------------------------

struct SimulationConfig {
  double delta_hours = 10.0 / 3600.0;
  std::size_t t_steps = 0;
  double v_min = 1.0;  // speed floor, km/h

  [[nodiscard]] bool valid() const { return delta_hours > 0.0 && t_steps > 0; }

  /// Advisory only: free-flow travel across a whole segment within one step
  /// means the explicit scheme is coarse for the chosen delta.
  [[nodiscard]] bool cfl_exceeded(double v_star_max, double segment_length_km) const {
    return v_star_max * delta_hours > segment_length_km;
  }
};

}  // namespace metacal
