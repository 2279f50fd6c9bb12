#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snapper/signal_sim.hpp"

namespace snapper {

// A simulated deployment described in JSON:
//   {
//     "waypoints": [{"time": "2022-03-01T00:00:00Z", "lat": 52.2, "lon": 0.1,
//                    "height": 10, "temperature_c": 20, "submerged": false}, ...],
//     "interval_s": 3600, "cn0_dbhz": 45, "max_satellites": 10,
//     "nav_bit_transitions": true, "seed": 1, "device_id": "5A5A000000000001",
//     "battery_v": 3.9, "a_priori": {"lat": .., "lon": .., "height": ..},
//     "errors": {"clock_drift_ppm": 5, "initial_clock_offset_s": 0,
//                "frequency_offset_hz": 600, "frequency_slope_hz_per_c": 0,
//                "frequency_t0_c": 20},
//     "constellation_seed": 2022
//   }
// Waypoints may give "t_s" (seconds after a top-level "start") instead of
// "time". Only "waypoints" is required; unknown keys are rejected.
struct DeploymentSpec {
  std::vector<Waypoint> track;
  DeploymentOptions options;
  DeploymentErrors errors;
  std::uint64_t constellation_seed = 2022;
};

// Throws std::invalid_argument with the offending key on malformed input.
DeploymentSpec parse_deployment_spec(const std::string& json_text);
std::string deployment_spec_to_json(const DeploymentSpec& spec);

// Ground truth of a deployment (positions, times, clock and per-satellite
// signal parameters) as JSON.
std::string deployment_truth_to_json(const Deployment& deployment);

}  // namespace snapper
