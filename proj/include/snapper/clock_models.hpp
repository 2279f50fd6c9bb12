#pragma once

#include <stdexcept>

namespace snapper {

// Linear relation between board temperature and front-end frequency offset.
struct FrequencyModel {
  double offset_at_ref_hz = 0.0;
  double slope_hz_per_c = 0.0;
  double t0_c = 20.0;

  friend bool operator==(const FrequencyModel&, const FrequencyModel&) = default;
};

inline double predict_offset(const FrequencyModel& model, double temperature_c) {
  return model.offset_at_ref_hz + model.slope_hz_per_c * (temperature_c - model.t0_c);
}

// A-priori receiver time error for the next snapshot, given the previous
// solved error and the estimated RTC drift.
inline double propagate_time_error(double previous_error_s, double elapsed_s, double drift_rate) {
  if (elapsed_s < 0.0) throw std::invalid_argument("elapsed time must be non-negative");
  return previous_error_s + drift_rate * elapsed_s;
}

}  // namespace snapper
