#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "snapper/acquisition.hpp"
#include "snapper/clock_models.hpp"
#include "snapper/ephemeris.hpp"
#include "snapper/snapshot.hpp"

namespace snapper {

struct OffsetEstimationSettings {
  std::size_t max_snapshots = 5;
  double search_half_width_hz = 8000.0;
  double grid_step_hz = 10.0;
  // Width of the agreement kernel around each satellite's implied offset.
  double kernel_sigma_hz = 150.0;
  double threshold = kDefaultDetectionThreshold;
  SignalConstants constants;
};

struct OffsetEstimate {
  double offset_hz = 0.0;
  std::vector<double> per_snapshot_hz;  // snapshots with at least one detection
};

// Front-end frequency offset from the first snapshots of a dataset. Each
// visible satellite is searched over +-search_half_width around its predicted
// Doppler; the offset maximising the metric-weighted agreement of all
// detections is refined parabolically, and snapshots are combined by median.
// `coarse_time_error_s` is subtracted from timestamps to obtain GPS time.
// Throws Error("offset estimation failed") when nothing is detected.
OffsetEstimate estimate_frontend_offset(std::span<const Snapshot> snapshots, const EphemerisStore& ephemerides,
                                        const Geodetic& coarse_position, double coarse_time_error_s = 0.0,
                                        const OffsetEstimationSettings& settings = {},
                                        ReplicaCache* cache = nullptr);

struct FrequencyObservation {
  double temperature_c = 0.0;
  double offset_hz = 0.0;
};

// Least-squares line through (temperature, offset) pairs about t0_c. With a
// single distinct temperature the slope is zero. Throws std::invalid_argument
// when empty.
FrequencyModel fit_frequency_model(std::span<const FrequencyObservation> observations, double t0_c = 20.0);

struct ClockChainSettings {
  std::size_t window = 20;
  bool robust = false;  // median of pairwise slopes instead of least squares
  double max_uncertainty_s = 60.0;
  double rtc_tolerance_ppm = 10.0;
};

// Chain of solved receiver time errors (timestamp minus true time). Each
// prediction starts from the last anchor and extrapolates with the drift
// fitted over the most recent anchors.
class ClockChain {
 public:
  explicit ClockChain(ClockChainSettings settings = {}, double origin_s = 0.0, double initial_error_s = 0.0);

  double predict(double receiver_time_s) const;
  void anchor(double receiver_time_s, double time_error_s);
  double drift() const { return drift_; }
  // Worst-case error growth since the last anchor at the RTC tolerance.
  double uncertainty(double receiver_time_s) const;
  bool recoverable(double receiver_time_s) const { return uncertainty(receiver_time_s) <= settings_.max_uncertainty_s; }
  std::size_t anchors() const { return anchors_.size(); }

 private:
  struct Anchor {
    double t;
    double error;
  };
  void refit();

  ClockChainSettings settings_;
  double origin_s_;
  double initial_error_s_;
  std::deque<Anchor> anchors_;
  double drift_ = 0.0;
};

}  // namespace snapper
