#pragma once

#include <Eigen/Core>

namespace snapper {

using Vec3 = Eigen::Vector3d;

struct Geodetic {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double height_m = 0.0;

  friend bool operator==(const Geodetic&, const Geodetic&) = default;
};

Vec3 geodetic_to_ecef(const Geodetic& g);
Geodetic ecef_to_geodetic(const Vec3& ecef);

// East/north/up components of `delta` at the reference point.
Vec3 ecef_delta_to_enu(const Geodetic& ref, const Vec3& delta);

// Elevation of a satellite above the local horizon of `receiver`, radians.
double elevation(const Vec3& receiver, const Vec3& satellite);

// Horizontal (east/north) distance between two ECEF points.
double horizontal_distance(const Vec3& a, const Vec3& b);

}  // namespace snapper
