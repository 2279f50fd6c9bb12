#include "snapper/geodesy.hpp"

#include <cmath>
#include <numbers>

#include "snapper/constants.hpp"

namespace snapper {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kE2 = phys::kWgs84F * (2.0 - phys::kWgs84F);

}  // namespace

Vec3 geodetic_to_ecef(const Geodetic& g) {
  const double lat = g.lat_deg * kDeg;
  const double lon = g.lon_deg * kDeg;
  const double sl = std::sin(lat);
  const double n = phys::kWgs84A / std::sqrt(1.0 - kE2 * sl * sl);
  return {(n + g.height_m) * std::cos(lat) * std::cos(lon), (n + g.height_m) * std::cos(lat) * std::sin(lon),
          (n * (1.0 - kE2) + g.height_m) * sl};
}

Geodetic ecef_to_geodetic(const Vec3& r) {
  const double p = std::hypot(r.x(), r.y());
  const double lon = std::atan2(r.y(), r.x());
  double lat = std::atan2(r.z(), p * (1.0 - kE2));
  double h = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double sl = std::sin(lat);
    const double n = phys::kWgs84A / std::sqrt(1.0 - kE2 * sl * sl);
    h = p / std::cos(lat) - n;
    const double next = std::atan2(r.z(), p * (1.0 - kE2 * n / (n + h)));
    if (std::abs(next - lat) < 1e-14) {
      lat = next;
      break;
    }
    lat = next;
  }
  // Near the poles p/cos(lat) is ill-conditioned.
  if (std::abs(lat) > 1.5) {
    const double sl = std::sin(lat);
    const double n = phys::kWgs84A / std::sqrt(1.0 - kE2 * sl * sl);
    h = r.z() / sl - n * (1.0 - kE2);
  }
  return {lat / kDeg, lon / kDeg, h};
}

Vec3 ecef_delta_to_enu(const Geodetic& ref, const Vec3& d) {
  const double lat = ref.lat_deg * kDeg;
  const double lon = ref.lon_deg * kDeg;
  const double sl = std::sin(lat), cl = std::cos(lat), so = std::sin(lon), co = std::cos(lon);
  return {-so * d.x() + co * d.y(), -sl * co * d.x() - sl * so * d.y() + cl * d.z(),
          cl * co * d.x() + cl * so * d.y() + sl * d.z()};
}

double elevation(const Vec3& receiver, const Vec3& satellite) {
  const Vec3 enu = ecef_delta_to_enu(ecef_to_geodetic(receiver), satellite - receiver);
  return std::atan2(enu.z(), std::hypot(enu.x(), enu.y()));
}

double horizontal_distance(const Vec3& a, const Vec3& b) {
  const Vec3 enu = ecef_delta_to_enu(ecef_to_geodetic(b), a - b);
  return std::hypot(enu.x(), enu.y());
}

}  // namespace snapper
