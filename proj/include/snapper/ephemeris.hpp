#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "snapper/error.hpp"
#include "snapper/geodesy.hpp"
#include "snapper/gps_time.hpp"

namespace snapper {

// Broadcast Keplerian orbit and clock model of one GPS satellite.
struct GpsEphemeris {
  int prn = 0;
  int week = 0;        // GPS week of toe (continuous, not mod 1024)
  double toe = 0.0;    // s of week
  double toc = 0.0;    // s of week
  double sqrt_a = 0.0; // m^1/2
  double e = 0.0;
  double i0 = 0.0;
  double omega0 = 0.0;
  double omega = 0.0;
  double m0 = 0.0;
  double delta_n = 0.0;
  double idot = 0.0;
  double omegadot = 0.0;
  double cuc = 0.0, cus = 0.0;
  double crc = 0.0, crs = 0.0;
  double cic = 0.0, cis = 0.0;
  double af0 = 0.0, af1 = 0.0, af2 = 0.0;
  double tgd = 0.0;
  int iode = 0;
  int health = 0;  // 0 = healthy

  GpsTime toe_time() const { return GpsTime::from_week_tow(week, toe); }
  GpsTime toc_time() const { return GpsTime::from_week_tow(week, toc); }
  // Range checks on eccentricity, semi-major axis and clock bias.
  bool plausible() const;

  friend bool operator==(const GpsEphemeris&, const GpsEphemeris&) = default;
};

struct EcefState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

// Thrown when a time lies outside the ephemeris validity window. Callers may
// treat it as a flag and fall back to another record.
class StaleEphemerisError : public Error {
 public:
  StaleEphemerisError(int prn, double age_s);
  double age() const { return age_; }

 private:
  double age_;
};

inline constexpr double kDefaultEphemerisValidity = 7200.0;

struct KeplerSolution {
  double eccentric_anomaly = 0.0;
  int iterations = 0;
};

// Newton iteration on M = E - e sin E to 1e-12 rad (at most 20 steps).
KeplerSolution solve_kepler(double mean_anomaly, double e);

// Position and analytic velocity (ECEF, at time t, no light-time effects).
EcefState sat_position(const GpsEphemeris& eph, GpsTime t, double validity_s = kDefaultEphemerisValidity);
// Same, with t given as seconds of the ephemeris week (crossovers handled).
EcefState sat_position(const GpsEphemeris& eph, double tow, double validity_s = kDefaultEphemerisValidity);

// Satellite clock bias (s) including the relativistic eccentricity term.
double sat_clock_correction(const GpsEphemeris& eph, GpsTime t);
double sat_clock_correction(const GpsEphemeris& eph, double tow);
// Time derivative of sat_clock_correction (s/s).
double sat_clock_drift(const GpsEphemeris& eph, GpsTime t);

// Ephemerides indexed by PRN; selection picks the record with the nearest toe.
class EphemerisStore {
 public:
  EphemerisStore() = default;
  explicit EphemerisStore(std::span<const GpsEphemeris> ephemerides, double validity_s = kDefaultEphemerisValidity);

  void add(const GpsEphemeris& eph);
  // Healthy record with |t - toe| < validity, or nullptr.
  const GpsEphemeris* select(int prn, GpsTime t) const;
  std::vector<int> prns() const;
  std::size_t size() const;
  bool empty() const { return by_prn_.empty(); }
  double validity() const { return validity_; }
  // True when at least `min_sats` satellites have a valid record at t.
  bool covers(GpsTime t, std::size_t min_sats = 1) const;

 private:
  std::map<int, std::vector<GpsEphemeris>> by_prn_;
  double validity_ = kDefaultEphemerisValidity;
};

}  // namespace snapper
