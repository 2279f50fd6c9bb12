#include "snapper/signal_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "snapper/ca_code.hpp"
#include "snapper/random.hpp"

namespace snapper {
namespace {

constexpr double kC = phys::kSpeedOfLight;
constexpr double kCodePeriodSamples = static_cast<double>(SignalConstants::kSamplesPerMs);

Vec3 rotate_z(const Vec3& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() + s * v.y(), -s * v.x() + c * v.y(), v.z()};
}

struct Geometry {
  Vec3 position;  // satellite at transmit time, in the ECEF frame of reception
  Vec3 velocity;
  double travel_time_s = 0.0;
  double clock_bias_s = 0.0;
  double range_m = 0.0;
  double range_rate = 0.0;
  double elevation_deg = 0.0;
};

// Two light-time passes after an instantaneous first guess.
template <typename StateAt>
Geometry light_time_geometry(const Vec3& rx, const Vec3& rx_vel, StateAt&& state_at) {
  EcefState s = state_at(0.0);
  double tau = (s.position - rx).norm() / kC;
  Vec3 pos;
  for (int pass = 0; pass < 2; ++pass) {
    s = state_at(tau);
    pos = rotate_z(s.position, phys::kEarthRotationRate * tau);
    tau = (pos - rx).norm() / kC;
  }
  Geometry g;
  g.position = rotate_z(s.position, phys::kEarthRotationRate * tau);
  g.velocity = rotate_z(s.velocity, phys::kEarthRotationRate * tau);
  g.travel_time_s = tau;
  g.range_m = (g.position - rx).norm();
  const Vec3 los = (g.position - rx) / g.range_m;
  g.range_rate = los.dot(g.velocity - rx_vel);
  g.elevation_deg = elevation(rx, g.position) * 180.0 / std::numbers::pi;
  return g;
}

Geometry ephemeris_geometry(const GpsEphemeris& eph, const Vec3& rx, const Vec3& rx_vel, GpsTime t) {
  Geometry g = light_time_geometry(rx, rx_vel, [&](double tau) {
    return sat_position(eph, t - tau, 1e9);
  });
  g.clock_bias_s = sat_clock_correction(eph, t - g.travel_time_s);
  return g;
}

Geometry fixed_geometry(const FixedSatellite& sat, const Vec3& rx, const Vec3& rx_vel) {
  Geometry g = light_time_geometry(rx, rx_vel, [&](double) { return sat.state; });
  g.clock_bias_s = sat.clock_bias_s;
  return g;
}

// Code delay in samples of a signal whose satellite clock read
// (t_rx - tau + dts) when it left the antenna, t_rx being sample 0.
double code_delay(GpsTime t_rx, double travel_time_s, double clock_bias_s) {
  const GpsTime sat_clock = t_rx - travel_time_s + clock_bias_s;
  const double within_ms = std::fmod(sat_clock.fraction(), 1e-3);
  double p = std::fmod(-within_ms * SignalConstants::kSampleRateHz, kCodePeriodSamples);
  if (p < 0.0) p += kCodePeriodSamples;
  if (p >= kCodePeriodSamples) p -= kCodePeriodSamples;
  return p;
}

struct Rendered {
  double amplitude;
  double delay;
  double frequency_hz;
  double carrier_phase;
  std::optional<std::size_t> flip_sample;
};

// Chip value averaged over the sample period [u, u + 1), u being the position
// in samples since the start of a code epoch.
double chip_value(const CaCode& code, double u) {
  constexpr double kSpc = static_cast<double>(SignalConstants::kSamplesPerChip);
  constexpr auto kLen = static_cast<std::int64_t>(SignalConstants::kCodeLength);
  const double hi = u + 1.0;
  const auto a = static_cast<std::int64_t>(std::floor(u / kSpc));
  const auto b = static_cast<std::int64_t>(std::floor(hi / kSpc));
  const auto chip = [&](std::int64_t i) {
    return static_cast<double>(code.chips[static_cast<std::size_t>(((i % kLen) + kLen) % kLen)]);
  };
  if (a == b) return chip(a);
  const double w = hi - static_cast<double>(b) * kSpc;
  return (1.0 - w) * chip(a) + w * chip(b);
}

void validate(const Scenario& s) {
  if (std::abs(s.frontend_offset_hz) > Scenario::kMaxFrontendOffset) {
    throw std::invalid_argument("front-end offset exceeds 10 kHz");
  }
  for (const auto& sat : s.satellites) {
    if (sat.prn < kMinPrn || sat.prn > kMaxPrn) throw std::invalid_argument("PRN out of range");
    if (!(sat.cn0_dbhz >= Scenario::kMinCn0 && sat.cn0_dbhz <= Scenario::kMaxCn0)) {
      throw std::invalid_argument("C/N0 outside supported range");
    }
  }
}

}  // namespace

SimulatedSnapshot synthesize_snapshot(const Scenario& scenario, const SignalConstants& constants) {
  validate(scenario);
  const double fs = SignalConstants::kSampleRateHz;
  constexpr std::size_t n = SignalConstants::kSamplesPerSnapshot;

  SimulatedSnapshot out;
  GroundTruth& truth = out.truth;
  truth.position = scenario.truth_position;
  truth.time = scenario.truth_time;
  truth.frontend_offset_hz = scenario.frontend_offset_hz;

  const std::uint64_t timestamp =
      scenario.timestamp_ms ? *scenario.timestamp_ms
                            : static_cast<std::uint64_t>((scenario.truth_time + scenario.clock_offset_s).to_unix_ms());
  truth.clock_offset_s = GpsTime::from_unix_ms(static_cast<std::int64_t>(timestamp)) - scenario.truth_time;

  Rng rng(scenario.noise_seed);
  std::vector<CaCode> codes;
  codes.reserve(scenario.satellites.size());
  std::vector<Rendered> rendered;

  for (const auto& sat : scenario.satellites) {
    SatelliteTruth st;
    st.prn = sat.prn;
    st.cn0_dbhz = sat.cn0_dbhz;
    if (const auto* direct = std::get_if<DirectSignal>(&sat.source)) {
      st.code_phase = std::fmod(direct->code_phase, kCodePeriodSamples);
      if (st.code_phase < 0.0) st.code_phase += kCodePeriodSamples;
      st.range_rate_doppler_hz = direct->doppler_hz;
    } else {
      Geometry g;
      if (const auto* eph = std::get_if<GpsEphemeris>(&sat.source)) {
        g = ephemeris_geometry(*eph, scenario.truth_position, scenario.truth_velocity, scenario.truth_time);
        if (g.elevation_deg < scenario.elevation_mask_deg) continue;
      } else {
        g = fixed_geometry(std::get<FixedSatellite>(sat.source), scenario.truth_position, scenario.truth_velocity);
      }
      st.code_phase = code_delay(scenario.truth_time, g.travel_time_s, g.clock_bias_s);
      st.range_rate_doppler_hz = -g.range_rate / kC * SignalConstants::kL1Hz;
      st.geometric_range_m = g.range_m;
      st.pseudorange_m = kC * (g.travel_time_s - g.clock_bias_s);
      st.elevation_deg = g.elevation_deg;
    }
    st.doppler_hz = constants.if_residual_nominal_hz + scenario.frontend_offset_hz + st.range_rate_doppler_hz;

    Rendered r;
    r.amplitude = std::sqrt(4.0 * std::pow(10.0, sat.cn0_dbhz / 10.0) / fs);
    r.delay = st.code_phase;
    r.frequency_hz = st.doppler_hz;
    r.carrier_phase = rng.uniform() * 2.0 * std::numbers::pi;
    if (sat.nav_bit_transition) {
      const double boundary = st.code_phase + kCodePeriodSamples * static_cast<double>(1 + rng.below(11));
      r.flip_sample = static_cast<std::size_t>(std::ceil(boundary));
      st.nav_bit_flip_sample = r.flip_sample;
    }
    codes.push_back(generate_ca_code(sat.prn));
    rendered.push_back(r);
    truth.satellites.push_back(st);
  }

  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Rendered& r = rendered[i];
    const CaCode& code = codes[i];
    const double w = 2.0 * std::numbers::pi * r.frequency_hz / fs;
    for (std::size_t k = 0; k < n; ++k) {
      double s = r.amplitude * chip_value(code, static_cast<double>(k) - r.delay) *
                 std::cos(w * static_cast<double>(k) + r.carrier_phase);
      if (r.flip_sample && k >= *r.flip_sample) s = -s;
      x[k] += s;
    }
  }

  std::vector<std::int8_t> bits(n);
  for (std::size_t k = 0; k < n; ++k) bits[k] = x[k] >= 0.0 ? 1 : -1;
  out.snapshot = Snapshot::from_samples(timestamp, scenario.temperature_c, scenario.battery_v, bits);
  return out;
}

void add_visible_satellites(Scenario& scenario, const EphemerisStore& store, double cn0_dbhz,
                            std::size_t max_satellites, bool nav_bit_transitions) {
  struct Candidate {
    double elevation;
    const GpsEphemeris* eph;
  };
  std::vector<Candidate> candidates;
  for (int prn : store.prns()) {
    const GpsEphemeris* eph = store.select(prn, scenario.truth_time);
    if (eph == nullptr) continue;
    const Geometry g = ephemeris_geometry(*eph, scenario.truth_position, scenario.truth_velocity, scenario.truth_time);
    if (g.elevation_deg >= scenario.elevation_mask_deg) candidates.push_back({g.elevation_deg, eph});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.elevation > b.elevation; });
  if (max_satellites != 0 && candidates.size() > max_satellites) candidates.resize(max_satellites);
  for (const auto& c : candidates) {
    SatelliteSignal s;
    s.prn = c.eph->prn;
    s.cn0_dbhz = cn0_dbhz;
    s.nav_bit_transition = nav_bit_transitions;
    s.source = *c.eph;
    scenario.satellites.push_back(s);
  }
}

Waypoint interpolate_track(std::span<const Waypoint> track, GpsTime t) {
  if (track.empty()) throw std::invalid_argument("empty track");
  if (t <= track.front().time) return {t, track.front().position, track.front().temperature_c, track.front().submerged};
  for (std::size_t i = 1; i < track.size(); ++i) {
    if (t < track[i].time) {
      const Waypoint& a = track[i - 1];
      const Waypoint& b = track[i];
      const double f = (t - a.time) / (b.time - a.time);
      Waypoint w;
      w.time = t;
      w.position.lat_deg = a.position.lat_deg + f * (b.position.lat_deg - a.position.lat_deg);
      w.position.lon_deg = a.position.lon_deg + f * (b.position.lon_deg - a.position.lon_deg);
      w.position.height_m = a.position.height_m + f * (b.position.height_m - a.position.height_m);
      w.temperature_c = a.temperature_c + f * (b.temperature_c - a.temperature_c);
      w.submerged = a.submerged;
      return w;
    }
  }
  const Waypoint& last = track.back();
  return {t, last.position, last.temperature_c, last.submerged};
}

Deployment generate_deployment(std::span<const Waypoint> track, const EphemerisStore& ephemerides,
                               const DeploymentOptions& options, const DeploymentErrors& errors) {
  if (track.empty()) throw std::invalid_argument("empty track");
  if (options.interval_s < 1.0) throw std::invalid_argument("interval must be at least 1 s");
  for (std::size_t i = 1; i < track.size(); ++i) {
    if (!(track[i - 1].time < track[i].time)) throw std::invalid_argument("track times must be increasing");
  }

  Deployment d;
  Rng rng(derive_seed(options.seed, 0xD21F7ull));
  const double tol = options.constants.rtc_tolerance_ppm * 1e-6;
  d.clock_drift = errors.clock_drift ? *errors.clock_drift : rng.uniform(-tol, tol);

  d.dataset.device_id = options.device_id;
  d.dataset.a_priori = options.a_priori ? *options.a_priori : track.front().position;

  const GpsTime t0 = track.front().time;
  const GpsTime tend = track.back().time;
  const std::int64_t start_ms = (t0 + errors.initial_clock_offset_s).to_unix_ms();
  const auto interval_ms = static_cast<std::int64_t>(std::llround(options.interval_s * 1000.0));

  for (std::int64_t i = 0;; ++i) {
    const std::int64_t reading_ms = start_ms + i * interval_ms;
    // Receiver clock R(t) = t + offset0 + drift (t - t0); invert for t.
    const double since_start = (GpsTime::from_unix_ms(reading_ms) - (t0 + errors.initial_clock_offset_s)) /
                               (1.0 + d.clock_drift);
    const GpsTime t = t0 + since_start;
    if (t > tend) break;

    const Waypoint w = interpolate_track(track, t);
    Scenario s;
    s.truth_position = geodetic_to_ecef(w.position);
    s.truth_time = t;
    s.timestamp_ms = static_cast<std::uint64_t>(reading_ms);
    s.temperature_c = w.temperature_c;
    s.battery_v = options.battery_v;
    s.frontend_offset_hz = predict_offset(errors.frequency, w.temperature_c);
    s.noise_seed = derive_seed(options.seed, static_cast<std::uint64_t>(i));
    if (!w.submerged) {
      add_visible_satellites(s, ephemerides, options.cn0_dbhz, options.max_satellites, options.nav_bit_transitions);
    }
    auto sim = synthesize_snapshot(s, options.constants);
    sim.truth.submerged = w.submerged;
    d.dataset.snapshots.push_back(std::move(sim.snapshot));
    d.truth.push_back(std::move(sim.truth));
  }
  return d;
}

}  // namespace snapper
