#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metacal/core.hpp"
#include "metacal/errors.hpp"

namespace metacal::io {

using nlohmann::json;

/// 17 significant digits: enough to round-trip any IEEE double bit-exactly.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// FNV-1a 64-bit digest of a file's bytes, hex encoded. Used by run manifests
/// to make reproducibility checkable.
inline std::string file_digest(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& field, const std::string& file,
                           std::size_t line_no) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ParseError(file + ":" + std::to_string(line_no) + ": bad number '" + field +
                     "'");
  return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Grid CSV: header "seg_0,...,seg_{N-1}", one row per timestep, empty fields
// mark missing cells.
// ---------------------------------------------------------------------------

inline void save_grid_csv(const std::filesystem::path& path, const DGrid& grid,
                          const MaskGrid* missing = nullptr) {
  std::ostringstream out;
  for (std::size_t x = 0; x < grid.cols(); ++x) out << (x ? "," : "") << "seg_" << x;
  out << "\n";
  for (std::size_t t = 0; t < grid.rows(); ++t) {
    for (std::size_t x = 0; x < grid.cols(); ++x) {
      if (x) out << ",";
      if (missing && (*missing)(t, x)) continue;  // empty field
      out << fmt17(grid(t, x));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

struct LoadedGrid {
  DGrid values;                     // missing cells hold NaN
  std::optional<MaskGrid> missing;  // present iff any cell was empty
};

inline LoadedGrid load_grid_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty grid file");
  const auto header = detail::split_csv_line(lines[0]);
  const std::size_t n = header.size();
  for (std::size_t x = 0; x < n; ++x)
    if (header[x] != "seg_" + std::to_string(x))
      throw ParseError(path.string() + ":1: expected header seg_0,...,seg_" +
                       std::to_string(n - 1));
  const std::size_t t_steps = lines.size() - 1;
  DGrid grid(t_steps, n, std::numeric_limits<double>::quiet_NaN());
  MaskGrid mask(t_steps, n, 0);
  bool any_missing = false;
  for (std::size_t t = 0; t < t_steps; ++t) {
    const auto fields = detail::split_csv_line(lines[t + 1]);
    if (fields.size() != n)
      throw ParseError(path.string() + ":" + std::to_string(t + 2) + ": expected " +
                       std::to_string(n) + " fields, got " +
                       std::to_string(fields.size()));
    for (std::size_t x = 0; x < n; ++x) {
      if (fields[x].empty()) {
        mask(t, x) = 1;
        any_missing = true;
      } else {
        grid(t, x) = detail::parse_double(fields[x], path.string(), t + 2);
      }
    }
  }
  LoadedGrid out{std::move(grid), std::nullopt};
  if (any_missing) out.missing = std::move(mask);
  return out;
}

inline void save_mask_csv(const std::filesystem::path& path, const MaskGrid& mask) {
  std::ostringstream out;
  for (std::size_t x = 0; x < mask.cols(); ++x) out << (x ? "," : "") << "seg_" << x;
  out << "\n";
  for (std::size_t t = 0; t < mask.rows(); ++t) {
    for (std::size_t x = 0; x < mask.cols(); ++x)
      out << (x ? "," : "") << (mask(t, x) ? 1 : 0);
    out << "\n";
  }
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// State-grid bundle: a directory holding rho.csv, q.csv, v.csv and, when any
// cell is unobserved, missing.csv.
// ---------------------------------------------------------------------------

inline void save_state_grid(const std::filesystem::path& dir, const StateGrid& grid) {
  std::filesystem::create_directories(dir);
  const MaskGrid* mask = grid.missing ? &*grid.missing : nullptr;
  save_grid_csv(dir / "rho.csv", grid.rho, mask);
  save_grid_csv(dir / "q.csv", grid.q, mask);
  save_grid_csv(dir / "v.csv", grid.v, mask);
  if (mask) save_mask_csv(dir / "missing.csv", *mask);
}

inline StateGrid load_state_grid(const std::filesystem::path& dir) {
  auto rho = load_grid_csv(dir / "rho.csv");
  auto q = load_grid_csv(dir / "q.csv");
  auto v = load_grid_csv(dir / "v.csv");
  std::optional<MaskGrid> mask;
  for (const auto* part : {&rho, &q, &v}) {
    if (!part->missing) continue;
    if (!mask) mask = *part->missing;
    else
      for (std::size_t i = 0; i < mask->data().size(); ++i)
        mask->data()[i] = mask->data()[i] || part->missing->data()[i];
  }
  return StateGrid(std::move(rho.values), std::move(q.values), std::move(v.values),
                   std::move(mask));
}

// ---------------------------------------------------------------------------
// Network JSON
// ---------------------------------------------------------------------------

inline json network_to_json(const NetworkGeometry& geom) {
  json j;
  j["n_segments"] = geom.n_segments;
  j["segment_length_km"] = geom.segment_length_km;
  j["lanes"] = geom.lanes;
  j["onramp_mask"] = std::vector<int>(geom.onramp_mask.begin(), geom.onramp_mask.end());
  j["offramp_mask"] =
      std::vector<int>(geom.offramp_mask.begin(), geom.offramp_mask.end());
  return j;
}

inline NetworkGeometry network_from_json(const json& j) {
  NetworkGeometry geom;
  try {
    geom.n_segments = j.at("n_segments").get<std::size_t>();
    geom.segment_length_km = j.at("segment_length_km").get<double>();
    geom.lanes = j.at("lanes").get<std::vector<double>>();
    for (int m : j.at("onramp_mask").get<std::vector<int>>())
      geom.onramp_mask.push_back(m ? 1 : 0);
    for (int m : j.at("offramp_mask").get<std::vector<int>>())
      geom.offramp_mask.push_back(m ? 1 : 0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("network json: ") + e.what());
  }
  return geom;
}

inline void save_network(const std::filesystem::path& path, const NetworkGeometry& g) {
  write_text_file(path, network_to_json(g).dump(2) + "\n");
}

inline NetworkGeometry load_network(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return network_from_json(j);
}

// ---------------------------------------------------------------------------
// Parameter JSON: scalar values mean segment-invariant, arrays segment-varying.
// ---------------------------------------------------------------------------

inline json parameters_to_json(const ParameterSet& p) {
  auto field = [&](const std::vector<double>& values) -> json {
    if (p.sharing == ParamSharing::SegmentInvariant) return values.front();
    return values;
  };
  json j;
  j["tau"] = field(p.tau);
  j["eta"] = field(p.eta);
  j["kappa"] = field(p.kappa);
  j["v_star"] = field(p.v_star);
  j["rho_star"] = field(p.rho_star);
  j["alpha"] = field(p.alpha);
  return j;
}

/// n_segments is required to expand scalar (segment-invariant) entries.
inline ParameterSet parameters_from_json(const json& j, std::size_t n_segments) {
  ParameterSet p;
  bool any_array = false;
  auto field = [&](const char* name) -> std::vector<double> {
    const json& v = j.at(name);
    if (v.is_array()) {
      any_array = true;
      auto arr = v.get<std::vector<double>>();
      if (arr.size() != n_segments)
        throw ParseError(std::string("parameter ") + name + " has " +
                         std::to_string(arr.size()) + " entries, expected " +
                         std::to_string(n_segments));
      return arr;
    }
    return std::vector<double>(n_segments, v.get<double>());
  };
  try {
    p.tau = field("tau");
    p.eta = field("eta");
    p.kappa = field("kappa");
    p.v_star = field("v_star");
    p.rho_star = field("rho_star");
    p.alpha = field("alpha");
  } catch (const json::exception& e) {
    throw ParseError(std::string("parameter json: ") + e.what());
  }
  p.sharing = any_array ? ParamSharing::SegmentVarying : ParamSharing::SegmentInvariant;
  return p;
}

inline void save_parameters(const std::filesystem::path& path, const ParameterSet& p) {
  write_text_file(path, parameters_to_json(p).dump(2) + "\n");
}

inline ParameterSet load_parameters(const std::filesystem::path& path,
                                    std::size_t n_segments) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parameters_from_json(j, n_segments);
}

// ---------------------------------------------------------------------------
// Boundary CSV: time_index, upstream_flow, upstream_speed, downstream_density.
// ---------------------------------------------------------------------------

inline void save_boundaries(const std::filesystem::path& path, const BoundarySeries& b) {
  std::ostringstream out;
  out << "time_index,upstream_flow,upstream_speed,downstream_density\n";
  for (std::size_t t = 0; t < b.t_steps(); ++t)
    out << t << "," << fmt17(b.upstream_flow[t]) << "," << fmt17(b.upstream_speed[t])
        << "," << fmt17(b.downstream_density[t]) << "\n";
  write_text_file(path, out.str());
}

inline BoundarySeries load_boundaries(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty boundary file");
  BoundarySeries b;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv_line(lines[i]);
    if (fields.size() != 4)
      throw ParseError(path.string() + ":" + std::to_string(i + 1) +
                       ": expected 4 fields");
    b.upstream_flow.push_back(detail::parse_double(fields[1], path.string(), i + 1));
    b.upstream_speed.push_back(detail::parse_double(fields[2], path.string(), i + 1));
    b.downstream_density.push_back(
        detail::parse_double(fields[3], path.string(), i + 1));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Ramp schedule CSVs (grid format, one file per variable)
// ---------------------------------------------------------------------------

inline void save_ramps(const std::filesystem::path& dir, const RampSchedule& ramps) {
  std::filesystem::create_directories(dir);
  save_grid_csv(dir / "r.csv", ramps.r());
  save_grid_csv(dir / "beta.csv", ramps.beta());
}

inline RampSchedule load_ramps(const std::filesystem::path& r_path,
                               const std::filesystem::path& beta_path,
                               const NetworkGeometry& geom,
                               RampSharing sharing = RampSharing::TimeVarying) {
  auto r = load_grid_csv(r_path);
  auto beta = load_grid_csv(beta_path);
  if (r.missing || beta.missing)
    throw ParseError("ramp schedule grids cannot have missing cells");
  return RampSchedule::from_grids(std::move(r.values), std::move(beta.values), geom,
                                  sharing);
}

}  // namespace metacal::io
