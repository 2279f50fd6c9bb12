#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>

#include "snapper/constellation.hpp"
#include "snapper/geometry.hpp"
#include "snapper/navigation.hpp"
#include "snapper/random.hpp"

using namespace snapper;

namespace {

constexpr double kC = 299'792'458.0;
const GpsTime kTruthTime = GpsTime::from_week_tow(2199, 181234.5678);

struct Range {
  double rho;
  double dts;
};

// Light-time range with Sagnac rotation, written independently of the solver.
Range oracle_range(const GpsEphemeris& eph, const Vec3& x, GpsTime t) {
  double tau = 0.07;
  Vec3 s;
  for (int i = 0; i < 12; ++i) {
    const Vec3 p = sat_position(eph, t - tau, 1e9).position;
    s = Eigen::AngleAxisd(-7.2921151467e-5 * tau, Vec3::UnitZ()) * p;
    tau = (s - x).norm() / kC;
  }
  return {(s - x).norm(), sat_clock_correction(eph, t - tau)};
}

struct Scene {
  NominalConstellation constellation;
  EphemerisStore store = constellation.store_for_span(kTruthTime - 7200, kTruthTime + 7200);
  Geodetic truth_geo{-33.92, 18.42, 35.0};
  Vec3 truth = geodetic_to_ecef(truth_geo);
  double bias = 12'345.6;  // receiver clock bias in metres

  std::vector<PredictedSatellite> visible(std::size_t max_n = 32) const {
    auto v = visible_satellites(store, truth, kTruthTime, 10.0);
    std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.elevation_deg > b.elevation_deg; });
    if (v.size() > max_n) v.resize(max_n);
    return v;
  }

  double pseudorange(const GpsEphemeris& eph) const {
    const auto r = oracle_range(eph, truth, kTruthTime);
    return r.rho + bias - kC * r.dts;
  }

  PseudorangeSet exact_set(std::size_t n) const {
    PseudorangeSet set;
    for (const auto& p : visible(n)) {
      PseudorangeMeasurement m;
      m.prn = p.prn;
      m.ephemeris = *store.select(p.prn, kTruthTime);
      m.pseudorange_m = pseudorange(m.ephemeris);
      set.measurements.push_back(m);
    }
    return set;
  }

  std::vector<AcquisitionResult> acquisitions(std::size_t n) const {
    std::vector<AcquisitionResult> out;
    double metric = 20.0;
    for (const auto& p : visible(n)) {
      AcquisitionResult a;
      a.prn = p.prn;
      const double pr = pseudorange(*store.select(p.prn, kTruthTime));
      a.code_phase = std::fmod(pr / kC, 1e-3) * 4.092e6;
      a.detected = true;
      a.peak_metric = metric;
      metric -= 1.0;
      out.push_back(a);
    }
    return out;
  }
};

Vec3 offset_east(const Geodetic& g, double metres) {
  Geodetic o = g;
  o.lon_deg += metres / (111'320.0 * std::cos(g.lat_deg * M_PI / 180.0));
  return geodetic_to_ecef(o);
}

}  // namespace

TEST(Reconstruct, MillisecondIntegersFromDistantAPriori) {
  Scene s;
  const auto acq = s.acquisitions(9);
  const auto set = reconstruct_pseudoranges(acq, offset_east(s.truth_geo, 50'000.0), kTruthTime + 20.0, s.store);
  ASSERT_EQ(set.measurements.size(), acq.size());
  EXPECT_EQ(set.reference_prn, acq.front().prn);
  const double common = set.measurements[0].pseudorange_m - s.pseudorange(set.measurements[0].ephemeris);
  EXPECT_NEAR(std::remainder(common, phys::kMillisecondRange), 0.0, 1e-3);
  for (const auto& m : set.measurements) {
    const double d = m.pseudorange_m - s.pseudorange(m.ephemeris);
    EXPECT_NEAR(d, common, 1e-3) << "prn " << m.prn;
    EXPECT_GT(m.pseudorange_m, 1.8e7 - 1.0e6);
  }
}

TEST(Reconstruct, AtTruthGivesTruePseudorangesModuloCommonMillisecond) {
  Scene s;
  s.bias = 0.0;
  const auto set = reconstruct_pseudoranges(s.acquisitions(8), s.truth, kTruthTime, s.store);
  for (const auto& m : set.measurements) {
    EXPECT_NEAR(m.pseudorange_m, s.pseudorange(m.ephemeris), 1e-3);
    EXPECT_GT(m.pseudorange_m, 1.8e7);
    EXPECT_LT(m.pseudorange_m, 2.8e7);
  }
}

TEST(Reconstruct, InvariantToCommonShiftOfPredictions) {
  Scene s;
  const auto acq = s.acquisitions(8);
  const auto a = reconstruct_pseudoranges(acq, s.truth, kTruthTime, s.store);
  const auto b = reconstruct_pseudoranges(acq, s.truth, kTruthTime + 0.0004, s.store);
  const double shift = b.measurements[0].pseudorange_m - a.measurements[0].pseudorange_m;
  EXPECT_NEAR(std::remainder(shift, phys::kMillisecondRange), 0.0, 1e-6);
  for (std::size_t i = 0; i < a.measurements.size(); ++i) {
    EXPECT_NEAR(b.measurements[i].pseudorange_m - a.measurements[i].pseudorange_m, shift, 1e-6);
  }
}

TEST(Reconstruct, EdgeCases) {
  Scene s;
  EXPECT_THROW(reconstruct_pseudoranges({}, s.truth, kTruthTime, s.store), NavigationError);
  auto acq = s.acquisitions(8);
  for (auto& a : acq) a.detected = false;
  EXPECT_THROW(reconstruct_pseudoranges(acq, s.truth, kTruthTime, s.store), NavigationError);
  const auto one = s.acquisitions(1);
  const auto set = reconstruct_pseudoranges(one, s.truth, kTruthTime, s.store);
  EXPECT_EQ(set.measurements.size(), 1u);
  EXPECT_THROW(solve_coarse_time(set, s.truth, kTruthTime), NavigationError);
}

TEST(Solve, ExactPseudorangesThirtyKmTwentyFiveSeconds) {
  Scene s;
  const auto set = s.exact_set(8);
  ASSERT_GE(set.measurements.size(), 7u);
  const auto fix = solve_coarse_time(set, offset_east(s.truth_geo, 30'000.0), kTruthTime + 25.0);
  EXPECT_LT((fix.ecef - s.truth).norm(), 1.0);
  EXPECT_NEAR(fix.coarse_time_correction_s, -25.0, 0.01);
  EXPECT_NEAR(fix.common_bias_m, s.bias, 1.0);
  EXPECT_LT(fix.residual_rms_m, 1e-3);
  EXPECT_EQ(fix.n_sats, set.measurements.size());
  EXPECT_EQ(fix.confidence, Confidence::High);
  EXPECT_LT(std::abs(fix.solved_time - kTruthTime), 0.01);
}

TEST(Solve, FortySecondsMatchesTwentyFive) {
  Scene s;
  const auto acq = s.acquisitions(8);
  const Vec3 ap = offset_east(s.truth_geo, 30'000.0);
  const auto set25 = reconstruct_pseudoranges(acq, ap, kTruthTime + 25.0, s.store);
  const auto set40 = reconstruct_pseudoranges(acq, ap, kTruthTime + 40.0, s.store);
  const auto f25 = solve_coarse_time(set25, ap, kTruthTime + 25.0);
  const auto f40 = solve_coarse_time(set40, ap, kTruthTime + 40.0);
  EXPECT_LT((f25.ecef - s.truth).norm(), 1.0);
  EXPECT_LT((f40.ecef - f25.ecef).norm(), 1e-2);
  EXPECT_NEAR(f40.solved_time - f25.solved_time, 0.0, 1e-6);
  EXPECT_NEAR(f40.coarse_time_correction_s, -40.0, 0.01);
}

TEST(Solve, InsufficientSatellites) {
  Scene s;
  const auto set = s.exact_set(4);
  try {
    solve_coarse_time(set, s.truth, kTruthTime);
    FAIL();
  } catch (const NavigationError& e) {
    EXPECT_EQ(e.kind(), NavigationError::Kind::InsufficientSatellites);
    EXPECT_STREQ(e.what(), "insufficient satellites");
  }
}

TEST(Solve, DivergenceReported) {
  Scene s;
  auto set = s.exact_set(6);
  Rng rng(5);
  for (auto& m : set.measurements) m.pseudorange_m = rng.uniform(0.0, 1.0e9);
  EXPECT_THROW(solve_coarse_time(set, s.truth, kTruthTime), NavigationError);
}

TEST(Solve, TranslationInvariance) {
  Scene s;
  const auto set = s.exact_set(9);
  const Vec3 ap = offset_east(s.truth_geo, 5'000.0);
  const auto base = solve_coarse_time(set, ap, kTruthTime + 3.0);
  for (double db : {-50'000.0, 777.0, 2.0e5}) {
    auto shifted = set;
    for (auto& m : shifted.measurements) m.pseudorange_m += db;
    const auto f = solve_coarse_time(shifted, ap, kTruthTime + 3.0);
    EXPECT_LT((f.ecef - base.ecef).norm(), 1e-3);
    EXPECT_NEAR(f.coarse_time_correction_s, base.coarse_time_correction_s, 1e-6);
    EXPECT_NEAR(f.common_bias_m - base.common_bias_m, db, 1e-3);
  }
}

TEST(Solve, WeightsDoNotBiasExactSolution) {
  Scene s;
  auto set = s.exact_set(8);
  Rng rng(12);
  for (auto& m : set.measurements) m.weight = rng.uniform(1.0, 30.0);
  const auto fix = solve_coarse_time(set, offset_east(s.truth_geo, 10'000.0), kTruthTime - 12.0);
  EXPECT_LT((fix.ecef - s.truth).norm(), 1.0);
}

TEST(Model, JacobianMatchesCentralDifferences) {
  Scene s;
  const auto set = s.exact_set(8);
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    CoarseTimeState st;
    st.position = s.truth + Vec3(rng.uniform(-3e4, 3e4), rng.uniform(-3e4, 3e4), rng.uniform(-3e3, 3e3));
    st.time_offset_s = rng.uniform(-60.0, 60.0);
    st.bias_m = rng.uniform(-1e5, 1e5);
    const auto ev = evaluate_model(set, kTruthTime, st);
    const double steps[5] = {1.0, 1.0, 1.0, 1e-3, 1.0};
    for (int j = 0; j < 5; ++j) {
      CoarseTimeState plus = st, minus = st;
      if (j < 3) {
        plus.position(j) += steps[j];
        minus.position(j) -= steps[j];
      } else if (j == 3) {
        plus.time_offset_s += steps[j];
        minus.time_offset_s -= steps[j];
      } else {
        plus.bias_m += steps[j];
        minus.bias_m -= steps[j];
      }
      const Eigen::VectorXd fd =
          (evaluate_model(set, kTruthTime, plus).predicted - evaluate_model(set, kTruthTime, minus).predicted) /
          (2.0 * steps[j]);
      for (Eigen::Index i = 0; i < fd.size(); ++i) {
        const double analytic = ev.jacobian(i, j);
        const double scale = std::max(1.0, std::abs(analytic));
        ASSERT_LE(std::abs(analytic - fd(i)) / scale, 1e-6) << "row " << i << " col " << j;
      }
    }
  }
}

TEST(Model, PredictedMatchesOracleRange) {
  Scene s;
  const auto set = s.exact_set(8);
  CoarseTimeState st;
  st.position = s.truth;
  st.bias_m = s.bias;
  const auto ev = evaluate_model(set, kTruthTime, st);
  for (std::size_t i = 0; i < set.measurements.size(); ++i) {
    EXPECT_NEAR(ev.predicted(static_cast<Eigen::Index>(i)), set.measurements[i].pseudorange_m, 1e-4);
  }
}

// Three unknowns (lat, lon, bias) at known time and height: grid search
// with successive refinement against the independent range oracle.
TEST(Solve, BruteForceOracleEquivalence) {
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    Scene s;
    s.truth_geo = {rng.uniform(-60.0, 60.0), rng.uniform(-180.0, 180.0), rng.uniform(0.0, 500.0)};
    s.truth = geodetic_to_ecef(s.truth_geo);
    s.bias = rng.uniform(-1e4, 1e4);
    const auto set = s.exact_set(7);
    if (set.measurements.size() < 5) continue;
    const Geodetic ap_geo{s.truth_geo.lat_deg + 0.05, s.truth_geo.lon_deg - 0.05, s.truth_geo.height_m};
    const auto fix = solve_coarse_time(set, geodetic_to_ecef(ap_geo), kTruthTime);

    std::vector<std::pair<GpsEphemeris, double>> obs;
    for (const auto& m : set.measurements) obs.emplace_back(m.ephemeris, m.pseudorange_m);
    auto cost = [&](double lat, double lon) {
      const Vec3 x = geodetic_to_ecef({lat, lon, s.truth_geo.height_m});
      std::vector<double> r;
      for (const auto& [eph, pr] : obs) {
        const auto rr = oracle_range(eph, x, kTruthTime);
        r.push_back(pr - (rr.rho - kC * rr.dts));
      }
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= static_cast<double>(r.size());
      double ss = 0.0;
      for (double v : r) ss += (v - mean) * (v - mean);
      return ss;
    };
    double best_lat = ap_geo.lat_deg, best_lon = ap_geo.lon_deg, span = 0.2;
    for (int level = 0; level < 9; ++level) {
      double best = std::numeric_limits<double>::infinity();
      double bl = best_lat, bo = best_lon;
      for (int i = -10; i <= 10; ++i) {
        for (int j = -10; j <= 10; ++j) {
          const double lat = best_lat + span * i / 10.0, lon = best_lon + span * j / 10.0;
          const double c = cost(lat, lon);
          if (c < best) {
            best = c;
            bl = lat;
            bo = lon;
          }
        }
      }
      best_lat = bl;
      best_lon = bo;
      span /= 5.0;
    }
    const Vec3 brute = geodetic_to_ecef({best_lat, best_lon, s.truth_geo.height_m});
    EXPECT_LT(horizontal_distance(fix.ecef, brute), 1.0) << "trial " << trial;
  }
}

TEST(Filter, Classification) {
  EXPECT_EQ(classify(8, 10.0), Confidence::High);
  EXPECT_EQ(classify(8, 30.0), Confidence::High);
  EXPECT_EQ(classify(8, 30.5), Confidence::Low);
  EXPECT_EQ(classify(8, 100.0), Confidence::Low);
  EXPECT_EQ(classify(8, 500.0), Confidence::Rejected);
  EXPECT_EQ(classify(4, 1.0), Confidence::Rejected);
  FilterSettings strict;
  strict.max_rms_m = 20.0;
  EXPECT_EQ(classify(8, 25.0, strict), Confidence::Rejected);
  EXPECT_STREQ(to_string(Confidence::Low), "low");
}

TEST(Filter, TrackConfidences) {
  std::vector<Fix> fixes(3);
  fixes[0].n_sats = 8;
  fixes[0].residual_rms_m = 10.0;
  fixes[1].n_sats = 8;
  fixes[1].residual_rms_m = 500.0;
  fixes[2].n_sats = 6;
  fixes[2].residual_rms_m = 50.0;
  const auto out = filter_track(fixes);
  EXPECT_EQ(out[0].confidence, Confidence::High);
  EXPECT_EQ(out[1].confidence, Confidence::Rejected);
  EXPECT_EQ(out[2].confidence, Confidence::Low);
}
