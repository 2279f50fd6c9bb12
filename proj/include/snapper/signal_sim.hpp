#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "snapper/clock_models.hpp"
#include "snapper/constants.hpp"
#include "snapper/ephemeris.hpp"
#include "snapper/snapshot.hpp"

namespace snapper {

// Satellite whose ECEF state is held fixed over the snapshot; clock_bias_s
// plays the role of the broadcast clock correction.
struct FixedSatellite {
  EcefState state;
  double clock_bias_s = 0.0;
};

// Signal given directly in receiver terms: code delay in samples and the
// satellite Doppler in Hz (front-end offset and IF are added on top).
struct DirectSignal {
  double code_phase = 0.0;
  double doppler_hz = 0.0;
};

struct SatelliteSignal {
  int prn = 1;
  double cn0_dbhz = 45.0;
  bool nav_bit_transition = false;
  std::variant<GpsEphemeris, FixedSatellite, DirectSignal> source = DirectSignal{};
};

struct Scenario {
  Vec3 truth_position = Vec3::Zero();  // ECEF
  Vec3 truth_velocity = Vec3::Zero();
  GpsTime truth_time;                  // true GPS time of the first sample
  double clock_offset_s = 0.0;         // receiver clock minus true time
  double frontend_offset_hz = 0.0;
  double temperature_c = 20.0;
  double battery_v = 3.9;
  double elevation_mask_deg = 5.0;
  std::vector<SatelliteSignal> satellites;
  std::uint64_t noise_seed = 1;
  // Overrides the timestamp derived from truth_time + clock_offset_s.
  std::optional<std::uint64_t> timestamp_ms;

  static constexpr double kMinCn0 = 20.0;
  static constexpr double kMaxCn0 = 100.0;
  static constexpr double kMaxFrontendOffset = 10'000.0;
};

struct SatelliteTruth {
  int prn = 0;
  double code_phase = 0.0;          // code delay in samples, [0, 4092)
  double doppler_hz = 0.0;          // absolute residual frequency in the sampled stream
  double range_rate_doppler_hz = 0.0;
  double geometric_range_m = 0.0;   // at transmit time, Sagnac-rotated
  double pseudorange_m = 0.0;       // c * (travel time - satellite clock bias)
  double elevation_deg = 0.0;
  double cn0_dbhz = 0.0;
  std::optional<std::size_t> nav_bit_flip_sample;
};

struct GroundTruth {
  Vec3 position = Vec3::Zero();
  GpsTime time;
  double clock_offset_s = 0.0;
  double frontend_offset_hz = 0.0;
  bool submerged = false;
  std::vector<SatelliteTruth> satellites;
};

struct SimulatedSnapshot {
  Snapshot snapshot;
  GroundTruth truth;
};

// Renders the scenario into a 12 ms, 1-bit capture. Ephemeris satellites
// below the elevation mask are dropped. Deterministic in noise_seed.
// Throws std::invalid_argument when C/N0 or the front-end offset is out of range.
SimulatedSnapshot synthesize_snapshot(const Scenario& scenario, const SignalConstants& constants = {});

// Adds a signal for every satellite above the mask at the scenario's truth
// state, keeping the `max_satellites` highest (0 keeps all).
void add_visible_satellites(Scenario& scenario, const EphemerisStore& store, double cn0_dbhz,
                            std::size_t max_satellites = 0, bool nav_bit_transitions = false);

struct Waypoint {
  GpsTime time;
  Geodetic position;
  double temperature_c = 20.0;
  bool submerged = false;
};

struct DeploymentErrors {
  // RTC drift (s/s); drawn uniformly from +-rtc_tolerance when unset.
  std::optional<double> clock_drift;
  double initial_clock_offset_s = 0.0;
  FrequencyModel frequency;
};

struct DeploymentOptions {
  double interval_s = 3600.0;
  double cn0_dbhz = 45.0;
  bool nav_bit_transitions = true;
  std::size_t max_satellites = 10;
  std::uint64_t seed = 1;
  std::uint64_t device_id = 0x5A5A000000000001ull;
  double battery_v = 3.9;
  // Dataset a-priori position; defaults to the first waypoint.
  std::optional<Geodetic> a_priori;
  SignalConstants constants;
};

struct Deployment {
  Dataset dataset;
  std::vector<GroundTruth> truth;
  double clock_drift = 0.0;
};

// True positions along a piecewise-linear track. Snapshot i is taken when the
// receiver clock reads start + i * interval; truth time follows from the drift.
// Throws std::invalid_argument for an empty or non-monotone track, or interval < 1 s.
Deployment generate_deployment(std::span<const Waypoint> track, const EphemerisStore& ephemerides,
                               const DeploymentOptions& options, const DeploymentErrors& errors = {});

// State of the piecewise-linear track at time t (clamped to its ends). A
// segment's submerged flag is taken from its start point.
Waypoint interpolate_track(std::span<const Waypoint> track, GpsTime t);

}  // namespace snapper
