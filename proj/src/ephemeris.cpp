#include "snapper/ephemeris.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snapper/constants.hpp"

namespace snapper {
namespace {

constexpr double kHalfWeek = 302'400.0;

double wrap_week(double dt) {
  if (dt > kHalfWeek) return dt - 2.0 * kHalfWeek;
  if (dt < -kHalfWeek) return dt + 2.0 * kHalfWeek;
  return dt;
}

struct OrbitTerms {
  double tk;
  double ek;
  double ek_dot;
};

OrbitTerms orbit_terms(const GpsEphemeris& eph, double tk) {
  const double a = eph.sqrt_a * eph.sqrt_a;
  const double n = std::sqrt(phys::kGravitationalParameter / (a * a * a)) + eph.delta_n;
  const double mk = eph.m0 + n * tk;
  const double ek = solve_kepler(mk, eph.e).eccentric_anomaly;
  return {tk, ek, n / (1.0 - eph.e * std::cos(ek))};
}

EcefState propagate(const GpsEphemeris& eph, double tk) {
  const auto [t, ek, ek_dot] = orbit_terms(eph, tk);
  const double a = eph.sqrt_a * eph.sqrt_a;
  const double e = eph.e;
  const double sq = std::sqrt(1.0 - e * e);
  const double ce = std::cos(ek), se = std::sin(ek);

  const double nu = std::atan2(sq * se, ce - e);
  const double nu_dot = ek_dot * sq / (1.0 - e * ce);
  const double phi = nu + eph.omega;
  const double s2 = std::sin(2.0 * phi), c2 = std::cos(2.0 * phi);

  const double u = phi + eph.cus * s2 + eph.cuc * c2;
  const double r = a * (1.0 - e * ce) + eph.crs * s2 + eph.crc * c2;
  const double inc = eph.i0 + eph.cis * s2 + eph.cic * c2 + eph.idot * t;
  const double u_dot = nu_dot * (1.0 + 2.0 * (eph.cus * c2 - eph.cuc * s2));
  const double r_dot = a * e * se * ek_dot + 2.0 * nu_dot * (eph.crs * c2 - eph.crc * s2);
  const double inc_dot = eph.idot + 2.0 * nu_dot * (eph.cis * c2 - eph.cic * s2);

  const double xp = r * std::cos(u), yp = r * std::sin(u);
  const double xp_dot = r_dot * std::cos(u) - r * u_dot * std::sin(u);
  const double yp_dot = r_dot * std::sin(u) + r * u_dot * std::cos(u);

  const double omega_dot = eph.omegadot - phys::kEarthRotationRate;
  const double om = eph.omega0 + omega_dot * t - phys::kEarthRotationRate * eph.toe;
  const double co = std::cos(om), so = std::sin(om), ci = std::cos(inc), si = std::sin(inc);

  EcefState s;
  s.position = {xp * co - yp * ci * so, xp * so + yp * ci * co, yp * si};
  s.velocity = {xp_dot * co - yp_dot * ci * so + yp * si * so * inc_dot - s.position.y() * omega_dot,
                xp_dot * so + yp_dot * ci * co - yp * si * co * inc_dot + s.position.x() * omega_dot,
                yp_dot * si + yp * ci * inc_dot};
  return s;
}

double clock_from_tk(const GpsEphemeris& eph, double tk, double dt) {
  const double ek = orbit_terms(eph, tk).ek;
  return eph.af0 + eph.af1 * dt + eph.af2 * dt * dt + phys::kRelativisticF * eph.e * eph.sqrt_a * std::sin(ek);
}

}  // namespace

bool GpsEphemeris::plausible() const {
  return e >= 0.0 && e < 0.1 && sqrt_a >= 4000.0 && sqrt_a <= 6000.0 && std::abs(af0) < 1e-3;
}

StaleEphemerisError::StaleEphemerisError(int prn, double age_s)
    : Error("ephemeris for PRN " + std::to_string(prn) + " is stale (" + std::to_string(age_s) + " s from toe)"),
      age_(age_s) {}

KeplerSolution solve_kepler(double mean_anomaly, double e) {
  double ek = mean_anomaly;
  int it = 0;
  while (it < 20) {
    const double delta = (ek - e * std::sin(ek) - mean_anomaly) / (1.0 - e * std::cos(ek));
    ek -= delta;
    ++it;
    if (std::abs(delta) < 1e-12) break;
  }
  return {ek, it};
}

EcefState sat_position(const GpsEphemeris& eph, GpsTime t, double validity_s) {
  const double tk = t - eph.toe_time();
  if (std::abs(tk) >= validity_s) throw StaleEphemerisError(eph.prn, tk);
  return propagate(eph, tk);
}

EcefState sat_position(const GpsEphemeris& eph, double tow, double validity_s) {
  const double tk = wrap_week(tow - eph.toe);
  if (std::abs(tk) >= validity_s) throw StaleEphemerisError(eph.prn, tk);
  return propagate(eph, tk);
}

double sat_clock_correction(const GpsEphemeris& eph, GpsTime t) {
  return clock_from_tk(eph, t - eph.toe_time(), t - eph.toc_time());
}

double sat_clock_correction(const GpsEphemeris& eph, double tow) {
  return clock_from_tk(eph, wrap_week(tow - eph.toe), wrap_week(tow - eph.toc));
}

double sat_clock_drift(const GpsEphemeris& eph, GpsTime t) {
  const auto terms = orbit_terms(eph, t - eph.toe_time());
  const double dt = t - eph.toc_time();
  return eph.af1 + 2.0 * eph.af2 * dt +
         phys::kRelativisticF * eph.e * eph.sqrt_a * std::cos(terms.ek) * terms.ek_dot;
}

EphemerisStore::EphemerisStore(std::span<const GpsEphemeris> ephemerides, double validity_s) : validity_(validity_s) {
  for (const auto& e : ephemerides) add(e);
}

void EphemerisStore::add(const GpsEphemeris& eph) {
  auto& list = by_prn_[eph.prn];
  const auto pos = std::lower_bound(list.begin(), list.end(), eph, [](const GpsEphemeris& a, const GpsEphemeris& b) {
    return a.toe_time() < b.toe_time();
  });
  if (pos != list.end() && pos->toe_time() == eph.toe_time()) {
    *pos = eph;
  } else {
    list.insert(pos, eph);
  }
}

const GpsEphemeris* EphemerisStore::select(int prn, GpsTime t) const {
  const auto it = by_prn_.find(prn);
  if (it == by_prn_.end()) return nullptr;
  const GpsEphemeris* best = nullptr;
  double best_age = validity_;
  for (const auto& e : it->second) {
    const double age = std::abs(t - e.toe_time());
    if (e.health == 0 && age < best_age) {
      best = &e;
      best_age = age;
    }
  }
  return best;
}

std::vector<int> EphemerisStore::prns() const {
  std::vector<int> out;
  for (const auto& [prn, list] : by_prn_) out.push_back(prn);
  return out;
}

std::size_t EphemerisStore::size() const {
  std::size_t n = 0;
  for (const auto& [prn, list] : by_prn_) n += list.size();
  return n;
}

bool EphemerisStore::covers(GpsTime t, std::size_t min_sats) const {
  std::size_t n = 0;
  for (const auto& [prn, list] : by_prn_) n += select(prn, t) != nullptr;
  return n >= min_sats;
}

}  // namespace snapper
