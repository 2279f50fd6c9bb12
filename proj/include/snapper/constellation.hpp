#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snapper/ephemeris.hpp"

namespace snapper {

// A synthetic 31-satellite GPS constellation (six planes, 55 deg inclination)
// that yields broadcast-style ephemerides for any epoch. Records for
// consecutive epochs describe the same orbits, and every value is
// representable in RINEX text, so a written-then-parsed file reproduces
// the in-memory records exactly.
class NominalConstellation {
 public:
  explicit NominalConstellation(std::uint64_t seed = 2022);

  const std::vector<int>& prns() const { return prns_; }

  // Ephemeris of one satellite with toe = toc = epoch.
  GpsEphemeris ephemeris(int prn, GpsTime epoch) const;
  std::vector<GpsEphemeris> ephemerides(GpsTime epoch) const;

  // Records every two hours (aligned to even GPS hours) covering [start, end].
  std::vector<GpsEphemeris> ephemerides_for_span(GpsTime start, GpsTime end) const;
  EphemerisStore store_for_span(GpsTime start, GpsTime end) const;
  // Records only for the 2-hour epochs nearest each of `times`.
  EphemerisStore store_for_times(std::span<const GpsTime> times) const;

  static GpsTime nearest_epoch(GpsTime t);

 private:
  struct Orbit {
    int prn;
    double sqrt_a, e, i0, raan_ref, omega, m_ref, delta_n, idot, omegadot;
    double cuc, cus, crc, crs, cic, cis;
    double af0_ref, af1;
  };

  std::vector<Orbit> orbits_;
  std::vector<int> prns_;
  GpsTime reference_;
};

}  // namespace snapper
