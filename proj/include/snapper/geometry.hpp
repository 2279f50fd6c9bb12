#pragma once

#include <vector>

#include "snapper/ephemeris.hpp"

namespace snapper {

// Satellite as seen from a receiver at reception time t: position at
// transmit time rotated into the ECEF frame of reception.
struct PredictedSatellite {
  int prn = 0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double range_m = 0.0;
  double range_rate_mps = 0.0;
  double clock_bias_s = 0.0;
  double elevation_deg = 0.0;
  // Carrier Doppler from satellite motion only, Hz.
  double doppler_hz = 0.0;
};

PredictedSatellite predict_satellite(const GpsEphemeris& eph, const Vec3& receiver, GpsTime t);

// Satellites with a valid ephemeris at t and elevation >= mask_deg, by PRN.
std::vector<PredictedSatellite> visible_satellites(const EphemerisStore& store, const Vec3& receiver, GpsTime t,
                                                   double mask_deg);

}  // namespace snapper
