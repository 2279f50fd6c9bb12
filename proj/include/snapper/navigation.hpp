#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snapper/acquisition.hpp"
#include "snapper/ephemeris.hpp"
#include "snapper/geometry.hpp"

namespace snapper {

class NavigationError : public Error {
 public:
  enum class Kind { NoSatellites, InsufficientSatellites, Diverged };
  NavigationError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct PseudorangeMeasurement {
  int prn = 0;
  double pseudorange_m = 0.0;  // full, millisecond integer resolved
  double sub_ms_m = 0.0;       // code phase / fs * c
  double weight = 1.0;
  double peak_metric = 1.0;
  GpsEphemeris ephemeris;
  PredictedSatellite predicted;  // at the a-priori state
};

struct PseudorangeSet {
  std::vector<PseudorangeMeasurement> measurements;
  int reference_prn = 0;
};

// Resolves millisecond integers of detected satellites against ranges
// predicted at the a-priori state, relative to the strongest satellite.
// Detected PRNs without a valid ephemeris are dropped. Throws
// NavigationError(NoSatellites) when nothing usable remains.
PseudorangeSet reconstruct_pseudoranges(std::span<const AcquisitionResult> acquisitions, const Vec3& a_priori_position,
                                        GpsTime a_priori_time, const EphemerisStore& ephemerides,
                                        bool weight_by_metric = false);

enum class Confidence { High, Low, Rejected };
const char* to_string(Confidence c);

struct FilterSettings {
  std::size_t min_sats = 5;
  double low_confidence_rms_m = 30.0;
  double max_rms_m = 100.0;
};

Confidence classify(std::size_t n_sats, double residual_rms_m, const FilterSettings& settings = {});

struct Fix {
  Geodetic position;
  Vec3 ecef = Vec3::Zero();
  double coarse_time_correction_s = 0.0;  // true time minus a-priori time
  double common_bias_m = 0.0;
  double residual_rms_m = 0.0;
  std::size_t n_sats = 0;
  Confidence confidence = Confidence::Rejected;
  GpsTime solved_time;
  int iterations = 0;
  // Snapshot metadata carried into exports.
  std::uint64_t timestamp_ms = 0;
  double temperature_c = 0.0;
  double battery_v = 0.0;
};

struct SolverSettings {
  int max_iterations = 10;
  double convergence_m = 1e-4;
  double divergence_m = 1e7;
  FilterSettings filter;
};

// State of the coarse-time model: receiver position, time offset from the
// a-priori time and common bias.
struct CoarseTimeState {
  Vec3 position = Vec3::Zero();
  double time_offset_s = 0.0;
  double bias_m = 0.0;
};

struct ModelEvaluation {
  Eigen::VectorXd predicted;  // modelled pseudoranges
  Eigen::MatrixXd jacobian;   // n x 5: d/dx, d/dy, d/dz, d/dt, d/db
};

ModelEvaluation evaluate_model(const PseudorangeSet& set, GpsTime a_priori_time, const CoarseTimeState& state);

// Gauss-Newton over [x, y, z, b, dt]. Throws NavigationError on fewer than
// five satellites or divergence.
Fix solve_coarse_time(const PseudorangeSet& set, const Vec3& a_priori_position, GpsTime a_priori_time,
                      const SolverSettings& settings = {});

// Sets the confidence of every fix from its satellite count and residuals.
std::vector<Fix> filter_track(std::vector<Fix> fixes, const FilterSettings& settings = {});

}  // namespace snapper
