#include "snapper/geometry.hpp"

#include <cmath>
#include <numbers>

#include "snapper/constants.hpp"

namespace snapper {

PredictedSatellite predict_satellite(const GpsEphemeris& eph, const Vec3& receiver, GpsTime t) {
  constexpr double c = phys::kSpeedOfLight;
  double tau = 0.075;
  EcefState s;
  Vec3 pos;
  for (int i = 0; i < 3; ++i) {
    s = sat_position(eph, t - tau, 1e9);
    const double theta = phys::kEarthRotationRate * tau;
    pos = {std::cos(theta) * s.position.x() + std::sin(theta) * s.position.y(),
           -std::sin(theta) * s.position.x() + std::cos(theta) * s.position.y(), s.position.z()};
    tau = (pos - receiver).norm() / c;
  }
  const double theta = phys::kEarthRotationRate * tau;
  PredictedSatellite p;
  p.prn = eph.prn;
  p.position = pos;
  p.velocity = {std::cos(theta) * s.velocity.x() + std::sin(theta) * s.velocity.y(),
                -std::sin(theta) * s.velocity.x() + std::cos(theta) * s.velocity.y(), s.velocity.z()};
  p.range_m = (pos - receiver).norm();
  p.range_rate_mps = (pos - receiver).dot(p.velocity) / p.range_m;
  p.clock_bias_s = sat_clock_correction(eph, t - tau);
  p.elevation_deg = elevation(receiver, pos) * 180.0 / std::numbers::pi;
  p.doppler_hz = -p.range_rate_mps / c * SignalConstants::kL1Hz;
  return p;
}

std::vector<PredictedSatellite> visible_satellites(const EphemerisStore& store, const Vec3& receiver, GpsTime t,
                                                   double mask_deg) {
  std::vector<PredictedSatellite> out;
  for (int prn : store.prns()) {
    const GpsEphemeris* eph = store.select(prn, t);
    if (eph == nullptr) continue;
    const auto p = predict_satellite(*eph, receiver, t);
    if (p.elevation_deg >= mask_deg) out.push_back(p);
  }
  return out;
}

}  // namespace snapper
