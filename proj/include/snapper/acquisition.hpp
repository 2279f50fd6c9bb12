#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "snapper/constants.hpp"
#include "snapper/snapshot.hpp"

namespace snapper {

struct AcquisitionResult {
  int prn = 0;
  double code_phase = 0.0;  // code delay in samples, [0, 4092)
  double doppler_hz = 0.0;  // absolute frequency in the sampled stream
  double peak_metric = 1.0; // peak / mean of the detection surface
  bool detected = false;
};

// Peak metric threshold for a per-PRN false-alarm rate below 1e-3 on pure
// noise with the default 25-bin search. Produced by tools/calibrate_threshold
// (12 000 trials, 99.9% quantile 1.955 plus margin); see config/acquisition.json.
inline constexpr double kDefaultDetectionThreshold = 2.05;

struct AcquisitionSettings {
  // Search centre; defaults to the nominal residual IF.
  std::optional<double> doppler_center_hz;
  // Per-PRN centres (e.g. predicted Doppler); override doppler_center_hz.
  std::map<int, double> prn_doppler_centers_hz;
  double doppler_span_hz = 6000.0;  // searched on both sides of the centre
  double doppler_step_hz = 500.0;
  std::size_t noncoherent_blocks = 12;
  double threshold = kDefaultDetectionThreshold;
  SignalConstants constants;

  // Throws std::invalid_argument for a step above 1 kHz, a negative span or
  // a block count outside 1..12.
  void validate() const;
  std::vector<double> doppler_bins(int prn) const;
};

// Conjugated spectra of 1 ms code replicas, keyed by PRN. Building is
// guarded by a mutex; entries never change once inserted.
class ReplicaCache {
 public:
  using Spectrum = std::vector<std::complex<float>>;

  void precompute(std::span<const int> prns);
  const Spectrum& get(int prn);
  std::size_t size() const;
  bool contains(int prn) const;

 private:
  mutable std::mutex mutex_;
  std::map<int, Spectrum> spectra_;
};

// FFT parallel code-phase search with noncoherent integration over 1 ms
// blocks. PRNs outside 1..32 throw std::out_of_range. A null cache uses a
// private one for this call.
std::vector<AcquisitionResult> acquire(std::span<const std::int8_t> samples, std::span<const int> prns,
                                       const AcquisitionSettings& settings = {}, ReplicaCache* cache = nullptr);
std::vector<AcquisitionResult> acquire(const Snapshot& snapshot, std::span<const int> prns,
                                       const AcquisitionSettings& settings = {}, ReplicaCache* cache = nullptr);

// 3-point parabolic vertex offset in [-0.5, 0.5] for samples at -1, 0, +1.
double parabolic_offset(double y_minus, double y0, double y_plus);

}  // namespace snapper
