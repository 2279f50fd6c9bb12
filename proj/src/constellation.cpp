#include "snapper/constellation.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "snapper/constants.hpp"
#include "snapper/random.hpp"

namespace snapper {
namespace {

constexpr double kEpochSpacing = 7200.0;

// Round-trips a value through RINEX's 12-digit mantissa.
double representable(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12E", v);
  return std::strtod(buf, nullptr);
}

double wrap_pi(double a) {
  a = std::fmod(a + phys::kPi, 2.0 * phys::kPi);
  if (a < 0.0) a += 2.0 * phys::kPi;
  return a - phys::kPi;
}

}  // namespace

NominalConstellation::NominalConstellation(std::uint64_t seed) : reference_(GpsTime::from_week_tow(2190, 0.0)) {
  Rng rng(seed);
  constexpr int kPlanes = 6;
  constexpr int kSatellites = 31;
  constexpr int kSkippedPrn = 28;
  int prn = 1;
  for (int k = 0; k < kSatellites; ++k, ++prn) {
    if (prn == kSkippedPrn) ++prn;
    const int plane = k % kPlanes;
    const int slot = k / kPlanes;
    Orbit o{};
    o.prn = prn;
    o.sqrt_a = 5153.6 + rng.uniform(-0.8, 0.8);
    o.e = rng.uniform(0.002, 0.014);
    o.i0 = (55.0 + rng.uniform(-1.5, 1.5)) * phys::kPi / 180.0;
    o.raan_ref = wrap_pi(plane * phys::kPi / 3.0 + rng.uniform(-0.02, 0.02));
    o.omega = wrap_pi(rng.uniform(-phys::kPi, phys::kPi));
    o.m_ref = wrap_pi(slot * 2.0 * phys::kPi / 6.0 + plane * 0.45 + rng.uniform(-0.1, 0.1) - o.omega);
    o.delta_n = rng.uniform(3.5e-9, 5.5e-9);
    o.idot = rng.uniform(-3e-10, 3e-10);
    o.omegadot = rng.uniform(-8.4e-9, -7.8e-9);
    o.cuc = rng.uniform(-5e-6, 5e-6);
    o.cus = rng.uniform(-5e-6, 5e-6);
    o.crc = rng.uniform(150.0, 350.0);
    o.crs = rng.uniform(-120.0, 120.0);
    o.cic = rng.uniform(-2e-7, 2e-7);
    o.cis = rng.uniform(-2e-7, 2e-7);
    o.af0_ref = rng.uniform(-4e-4, 4e-4);
    o.af1 = rng.uniform(-6e-12, 6e-12);
    orbits_.push_back(o);
    prns_.push_back(prn);
  }
}

GpsTime NominalConstellation::nearest_epoch(GpsTime t) {
  const double k = std::round(t.as_seconds() / kEpochSpacing);
  return GpsTime(static_cast<std::int64_t>(k * kEpochSpacing), 0.0);
}

GpsEphemeris NominalConstellation::ephemeris(int prn, GpsTime epoch) const {
  const Orbit* found = nullptr;
  for (const auto& o : orbits_) {
    if (o.prn == prn) found = &o;
  }
  if (found == nullptr) throw std::out_of_range("PRN not in nominal constellation");
  const Orbit& o = *found;
  const double dt = epoch - reference_;
  const double a = o.sqrt_a * o.sqrt_a;
  const double n = std::sqrt(phys::kGravitationalParameter / (a * a * a)) + o.delta_n;

  GpsEphemeris e;
  e.prn = prn;
  e.week = epoch.week();
  e.toe = std::round(epoch.tow());
  e.toc = e.toe;
  e.sqrt_a = representable(o.sqrt_a);
  e.e = representable(o.e);
  e.i0 = representable(o.i0 + o.idot * dt);
  e.omega0 = representable(
      wrap_pi(o.raan_ref + (o.omegadot - phys::kEarthRotationRate) * dt + phys::kEarthRotationRate * e.toe));
  e.omega = representable(o.omega);
  e.m0 = representable(wrap_pi(o.m_ref + std::fmod(n * dt, 2.0 * phys::kPi)));
  e.delta_n = representable(o.delta_n);
  e.idot = representable(o.idot);
  e.omegadot = representable(o.omegadot);
  e.cuc = representable(o.cuc);
  e.cus = representable(o.cus);
  e.crc = representable(o.crc);
  e.crs = representable(o.crs);
  e.cic = representable(o.cic);
  e.cis = representable(o.cis);
  e.af0 = representable(o.af0_ref + o.af1 * dt);
  e.af1 = representable(o.af1);
  e.af2 = 0.0;
  e.tgd = 0.0;
  e.iode = static_cast<int>(static_cast<std::int64_t>(std::llround(epoch.as_seconds() / kEpochSpacing)) % 256);
  e.health = 0;
  return e;
}

std::vector<GpsEphemeris> NominalConstellation::ephemerides(GpsTime epoch) const {
  std::vector<GpsEphemeris> out;
  out.reserve(prns_.size());
  for (int prn : prns_) out.push_back(ephemeris(prn, epoch));
  return out;
}

std::vector<GpsEphemeris> NominalConstellation::ephemerides_for_span(GpsTime start, GpsTime end) const {
  std::vector<GpsEphemeris> out;
  for (GpsTime t = nearest_epoch(start); t <= nearest_epoch(end); t += kEpochSpacing) {
    const auto batch = ephemerides(t);
    out.insert(out.end(), batch.begin(), batch.end());
  }
  return out;
}

EphemerisStore NominalConstellation::store_for_span(GpsTime start, GpsTime end) const {
  const auto all = ephemerides_for_span(start, end);
  return EphemerisStore(all);
}

EphemerisStore NominalConstellation::store_for_times(std::span<const GpsTime> times) const {
  std::set<std::int64_t> epochs;
  for (const auto& t : times) epochs.insert(nearest_epoch(t).seconds());
  EphemerisStore store;
  for (std::int64_t s : epochs) {
    for (const auto& e : ephemerides(GpsTime(s, 0.0))) store.add(e);
  }
  return store;
}

}  // namespace snapper
