#include "snapper/navigation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "snapper/constants.hpp"

namespace snapper {
namespace {

constexpr double kC = phys::kSpeedOfLight;
constexpr double kL = phys::kMillisecondRange;

struct SatelliteTerm {
  double modelled;  // range - c * dts, without bias
  Eigen::Matrix<double, 1, 4> gradient;  // d/dx, d/dy, d/dz, d/dt
};

// Light-time solution with exact derivatives. S(tau) = Rz(we tau) P(t - tau)
// and rho = |S(rho / c) - x| give, with w = dS/dtau and k = 1 - e.w / c,
// drho/dx = -e / k and drho/dt = e.(Rz V) / k.
SatelliteTerm satellite_term(const GpsEphemeris& eph, const Vec3& x, GpsTime t) {
  constexpr double we = phys::kEarthRotationRate;
  double tau = 0.075;
  EcefState p;
  Vec3 s;
  for (int i = 0; i < 10; ++i) {
    p = sat_position(eph, t - tau, 1e9);
    const double th = we * tau;
    s = {std::cos(th) * p.position.x() + std::sin(th) * p.position.y(),
         -std::sin(th) * p.position.x() + std::cos(th) * p.position.y(), p.position.z()};
    const double next = (s - x).norm() / kC;
    const bool done = std::abs(next - tau) < 1e-15;
    tau = next;
    if (done) break;
  }
  p = sat_position(eph, t - tau, 1e9);
  const double th = we * tau, c = std::cos(th), sn = std::sin(th);
  s = {c * p.position.x() + sn * p.position.y(), -sn * p.position.x() + c * p.position.y(), p.position.z()};
  const Vec3 rv{c * p.velocity.x() + sn * p.velocity.y(), -sn * p.velocity.x() + c * p.velocity.y(),
                p.velocity.z()};
  const Vec3 drot{-sn * p.position.x() + c * p.position.y(), -c * p.position.x() - sn * p.position.y(), 0.0};
  const Vec3 w = we * drot - rv;

  const double rho = (s - x).norm();
  const Vec3 e = (s - x) / rho;
  const double k = 1.0 - e.dot(w) / kC;
  const Vec3 drho_dx = -e / k;
  const double drho_dt = e.dot(rv) / k;

  const GpsTime tx = t - tau;
  const double dts = sat_clock_correction(eph, tx);
  const double dts_dot = sat_clock_drift(eph, tx);

  SatelliteTerm term;
  term.modelled = rho - kC * dts;
  // d(c dts(t - tau)) = c dts' (dt - drho / c)
  const Vec3 g = drho_dx + dts_dot * drho_dx;
  term.gradient << g.x(), g.y(), g.z(), drho_dt - kC * dts_dot * (1.0 - drho_dt / kC);
  return term;
}

}  // namespace

const char* to_string(Confidence c) {
  switch (c) {
    case Confidence::High:
      return "high";
    case Confidence::Low:
      return "low";
    case Confidence::Rejected:
      return "rejected";
  }
  return "rejected";
}

Confidence classify(std::size_t n_sats, double residual_rms_m, const FilterSettings& settings) {
  if (n_sats < settings.min_sats || !(residual_rms_m <= settings.max_rms_m)) return Confidence::Rejected;
  if (residual_rms_m > settings.low_confidence_rms_m) return Confidence::Low;
  return Confidence::High;
}

PseudorangeSet reconstruct_pseudoranges(std::span<const AcquisitionResult> acquisitions, const Vec3& a_priori_position,
                                        GpsTime a_priori_time, const EphemerisStore& ephemerides,
                                        bool weight_by_metric) {
  PseudorangeSet set;
  for (const auto& a : acquisitions) {
    if (!a.detected) continue;
    const GpsEphemeris* eph = ephemerides.select(a.prn, a_priori_time);
    if (eph == nullptr) continue;
    PseudorangeMeasurement m;
    m.prn = a.prn;
    m.sub_ms_m = a.code_phase / SignalConstants::kSampleRateHz * kC;
    m.peak_metric = a.peak_metric;
    m.weight = weight_by_metric ? a.peak_metric : 1.0;
    m.ephemeris = *eph;
    m.predicted = predict_satellite(*eph, a_priori_position, a_priori_time);
    set.measurements.push_back(m);
  }
  if (set.measurements.empty()) throw NavigationError(NavigationError::Kind::NoSatellites, "no satellites");

  const auto ref = std::max_element(set.measurements.begin(), set.measurements.end(),
                                    [](const auto& a, const auto& b) { return a.peak_metric < b.peak_metric; });
  set.reference_prn = ref->prn;
  const auto predicted_pr = [](const PseudorangeMeasurement& m) {
    return m.predicted.range_m - kC * m.predicted.clock_bias_s;
  };
  const double ref_pred = predicted_pr(*ref);
  const double n_ref = std::round((ref_pred - ref->sub_ms_m) / kL);
  const double ref_pr = n_ref * kL + ref->sub_ms_m;
  for (auto& m : set.measurements) {
    // The reference fixes the common offset, so only differences between
    // predicted ranges matter.
    const double n = std::round((predicted_pr(m) + (ref_pr - ref_pred) - m.sub_ms_m) / kL);
    m.pseudorange_m = n * kL + m.sub_ms_m;
  }
  return set;
}

ModelEvaluation evaluate_model(const PseudorangeSet& set, GpsTime a_priori_time, const CoarseTimeState& state) {
  const auto n = static_cast<Eigen::Index>(set.measurements.size());
  ModelEvaluation ev;
  ev.predicted.resize(n);
  ev.jacobian.resize(n, 5);
  const GpsTime t = a_priori_time + state.time_offset_s;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto term = satellite_term(set.measurements[static_cast<std::size_t>(i)].ephemeris, state.position, t);
    ev.predicted(i) = term.modelled + state.bias_m;
    ev.jacobian.block<1, 4>(i, 0) = term.gradient;
    ev.jacobian(i, 4) = 1.0;
  }
  return ev;
}

Fix solve_coarse_time(const PseudorangeSet& set, const Vec3& a_priori_position, GpsTime a_priori_time,
                      const SolverSettings& settings) {
  const std::size_t n = set.measurements.size();
  if (n < 5) throw NavigationError(NavigationError::Kind::InsufficientSatellites, "insufficient satellites");

  Eigen::VectorXd pr(static_cast<Eigen::Index>(n)), w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    pr(static_cast<Eigen::Index>(i)) = set.measurements[i].pseudorange_m;
    w(static_cast<Eigen::Index>(i)) = std::sqrt(set.measurements[i].weight);
  }

  CoarseTimeState state;
  state.position = a_priori_position;
  {
    const auto ev = evaluate_model(set, a_priori_time, state);
    state.bias_m = (pr - ev.predicted).mean();
  }

  int iterations = 0;
  for (; iterations < settings.max_iterations;) {
    const auto ev = evaluate_model(set, a_priori_time, state);
    const Eigen::VectorXd r = (pr - ev.predicted).cwiseProduct(w);
    const Eigen::MatrixXd h = w.asDiagonal() * ev.jacobian;
    const Eigen::VectorXd dx = h.colPivHouseholderQr().solve(r);
    ++iterations;
    const double step = dx.head<3>().norm();
    if (!dx.allFinite() || step > settings.divergence_m || std::abs(dx(3)) > 1e4) {
      throw NavigationError(NavigationError::Kind::Diverged, "diverged");
    }
    state.position += dx.head<3>();
    state.time_offset_s += dx(3);
    state.bias_m += dx(4);
    if (step < settings.convergence_m) break;
  }

  const auto ev = evaluate_model(set, a_priori_time, state);
  const Eigen::VectorXd res = pr - ev.predicted;
  Fix fix;
  fix.ecef = state.position;
  fix.position = ecef_to_geodetic(state.position);
  fix.coarse_time_correction_s = state.time_offset_s;
  fix.common_bias_m = state.bias_m;
  fix.residual_rms_m = std::sqrt(res.squaredNorm() / static_cast<double>(n));
  fix.n_sats = n;
  fix.solved_time = a_priori_time + state.time_offset_s;
  fix.iterations = iterations;
  fix.confidence = classify(n, fix.residual_rms_m, settings.filter);
  return fix;
}

std::vector<Fix> filter_track(std::vector<Fix> fixes, const FilterSettings& settings) {
  for (auto& f : fixes) f.confidence = classify(f.n_sats, f.residual_rms_m, settings);
  return fixes;
}

}  // namespace snapper
