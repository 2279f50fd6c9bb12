#include "snapper/scenario_io.hpp"

#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <stdexcept>

namespace snapper {
namespace {

using nlohmann::json;

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw std::invalid_argument("unknown key \"" + k + "\" in " + where);
  }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("missing or invalid \"" + key + "\" in " + where);
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

Geodetic parse_geodetic(const json& j, const std::string& where) {
  only_keys(j, {"lat", "lon", "height"}, where);
  Geodetic g{get<double>(j, "lat", where), get<double>(j, "lon", where), get_or<double>(j, "height", 0.0, where)};
  if (g.lat_deg < -90 || g.lat_deg > 90 || g.lon_deg < -180 || g.lon_deg > 180) {
    throw std::invalid_argument("latitude/longitude out of range in " + where);
  }
  return g;
}

GpsTime parse_time(const std::string& iso) { return GpsTime::from_unix_ms(parse_iso8601_ms(iso)); }

}  // namespace

DeploymentSpec parse_deployment_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
  }
  only_keys(j,
            {"start", "waypoints", "interval_s", "cn0_dbhz", "max_satellites", "nav_bit_transitions", "seed",
             "device_id", "battery_v", "a_priori", "errors", "constellation_seed"},
            "scenario");
  DeploymentSpec spec;
  std::optional<GpsTime> start;
  if (j.contains("start")) start = parse_time(get<std::string>(j, "start", "scenario"));
  if (!j.contains("waypoints") || !j["waypoints"].is_array() || j["waypoints"].empty()) {
    throw std::invalid_argument("scenario needs a non-empty \"waypoints\" array");
  }
  for (std::size_t i = 0; i < j["waypoints"].size(); ++i) {
    const json& w = j["waypoints"][i];
    const std::string where = "waypoints[" + std::to_string(i) + "]";
    only_keys(w, {"time", "t_s", "lat", "lon", "height", "temperature_c", "submerged"}, where);
    Waypoint wp;
    if (w.contains("time")) {
      wp.time = parse_time(get<std::string>(w, "time", where));
    } else if (w.contains("t_s") && start) {
      wp.time = *start + get<double>(w, "t_s", where);
    } else {
      throw std::invalid_argument(where + " needs \"time\", or \"t_s\" with a top-level \"start\"");
    }
    json pos = {{"lat", w.value("lat", json())}, {"lon", w.value("lon", json())}};
    if (w.contains("height")) pos["height"] = w["height"];
    wp.position = parse_geodetic(pos, where);
    wp.temperature_c = get_or<double>(w, "temperature_c", 20.0, where);
    wp.submerged = get_or<bool>(w, "submerged", false, where);
    spec.track.push_back(wp);
  }

  auto& o = spec.options;
  o.interval_s = get_or<double>(j, "interval_s", o.interval_s, "scenario");
  o.cn0_dbhz = get_or<double>(j, "cn0_dbhz", o.cn0_dbhz, "scenario");
  o.max_satellites = get_or<std::size_t>(j, "max_satellites", o.max_satellites, "scenario");
  o.nav_bit_transitions = get_or<bool>(j, "nav_bit_transitions", o.nav_bit_transitions, "scenario");
  o.seed = get_or<std::uint64_t>(j, "seed", o.seed, "scenario");
  if (j.contains("device_id")) o.device_id = parse_device_id(get<std::string>(j, "device_id", "scenario"));
  o.battery_v = get_or<double>(j, "battery_v", o.battery_v, "scenario");
  if (j.contains("a_priori")) o.a_priori = parse_geodetic(j["a_priori"], "a_priori");
  spec.constellation_seed = get_or<std::uint64_t>(j, "constellation_seed", spec.constellation_seed, "scenario");

  if (o.interval_s < 1.0) throw std::invalid_argument("interval_s must be at least 1");
  if (o.cn0_dbhz < Scenario::kMinCn0 || o.cn0_dbhz > Scenario::kMaxCn0) {
    throw std::invalid_argument("cn0_dbhz out of range");
  }

  if (j.contains("errors")) {
    const json& e = j["errors"];
    only_keys(e,
              {"clock_drift_ppm", "initial_clock_offset_s", "frequency_offset_hz", "frequency_slope_hz_per_c",
               "frequency_t0_c"},
              "errors");
    if (e.contains("clock_drift_ppm")) spec.errors.clock_drift = get<double>(e, "clock_drift_ppm", "errors") * 1e-6;
    spec.errors.initial_clock_offset_s = get_or<double>(e, "initial_clock_offset_s", 0.0, "errors");
    spec.errors.frequency.offset_at_ref_hz = get_or<double>(e, "frequency_offset_hz", 0.0, "errors");
    spec.errors.frequency.slope_hz_per_c = get_or<double>(e, "frequency_slope_hz_per_c", 0.0, "errors");
    spec.errors.frequency.t0_c = get_or<double>(e, "frequency_t0_c", 20.0, "errors");
  }
  return spec;
}

std::string deployment_spec_to_json(const DeploymentSpec& spec) {
  json j;
  j["waypoints"] = json::array();
  for (const auto& w : spec.track) {
    j["waypoints"].push_back({{"time", format_iso8601_ms(w.time.to_unix_ms())},
                              {"lat", w.position.lat_deg},
                              {"lon", w.position.lon_deg},
                              {"height", w.position.height_m},
                              {"temperature_c", w.temperature_c},
                              {"submerged", w.submerged}});
  }
  const auto& o = spec.options;
  j["interval_s"] = o.interval_s;
  j["cn0_dbhz"] = o.cn0_dbhz;
  j["max_satellites"] = o.max_satellites;
  j["nav_bit_transitions"] = o.nav_bit_transitions;
  j["seed"] = o.seed;
  j["device_id"] = format_device_id(o.device_id);
  j["battery_v"] = o.battery_v;
  if (o.a_priori) j["a_priori"] = {{"lat", o.a_priori->lat_deg}, {"lon", o.a_priori->lon_deg}, {"height", o.a_priori->height_m}};
  json e = {{"initial_clock_offset_s", spec.errors.initial_clock_offset_s},
            {"frequency_offset_hz", spec.errors.frequency.offset_at_ref_hz},
            {"frequency_slope_hz_per_c", spec.errors.frequency.slope_hz_per_c},
            {"frequency_t0_c", spec.errors.frequency.t0_c}};
  if (spec.errors.clock_drift) e["clock_drift_ppm"] = *spec.errors.clock_drift * 1e6;
  j["errors"] = e;
  j["constellation_seed"] = spec.constellation_seed;
  return j.dump(2) + "\n";
}

std::string deployment_truth_to_json(const Deployment& d) {
  json j;
  j["device_id"] = format_device_id(d.dataset.device_id);
  j["clock_drift"] = d.clock_drift;
  j["snapshots"] = json::array();
  for (std::size_t i = 0; i < d.truth.size(); ++i) {
    const auto& t = d.truth[i];
    const Geodetic g = ecef_to_geodetic(t.position);
    json sats = json::array();
    for (const auto& s : t.satellites) {
      sats.push_back({{"prn", s.prn},
                      {"code_phase", s.code_phase},
                      {"doppler_hz", s.doppler_hz},
                      {"pseudorange_m", s.pseudorange_m},
                      {"elevation_deg", s.elevation_deg},
                      {"cn0_dbhz", s.cn0_dbhz}});
    }
    j["snapshots"].push_back({{"index", i},
                              {"timestamp_ms", d.dataset.snapshots[i].timestamp_ms},
                              {"time", format_iso8601_ms(t.time.to_unix_ms())},
                              {"lat", g.lat_deg},
                              {"lon", g.lon_deg},
                              {"height", g.height_m},
                              {"clock_offset_s", t.clock_offset_s},
                              {"frontend_offset_hz", t.frontend_offset_hz},
                              {"submerged", t.submerged},
                              {"satellites", sats}});
  }
  return j.dump(2) + "\n";
}

}  // namespace snapper
