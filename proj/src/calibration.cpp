#include "snapper/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "snapper/geometry.hpp"

namespace snapper {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Vote {
  double offset_hz;
  double weight;
};

double consensus_offset(const std::vector<Vote>& votes, const OffsetEstimationSettings& s) {
  const auto steps = static_cast<int>(std::round(s.search_half_width_hz / s.grid_step_hz));
  const double inv = 1.0 / (2.0 * s.kernel_sigma_hz * s.kernel_sigma_hz);
  std::vector<double> score(static_cast<std::size_t>(2 * steps + 1), 0.0);
  for (int i = -steps; i <= steps; ++i) {
    const double c = i * s.grid_step_hz;
    double total = 0.0;
    for (const auto& v : votes) total += v.weight * std::exp(-(c - v.offset_hz) * (c - v.offset_hz) * inv);
    score[static_cast<std::size_t>(i + steps)] = total;
  }
  const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
  double refined = static_cast<double>(best);
  if (best > 0 && best + 1 < score.size()) refined += parabolic_offset(score[best - 1], score[best], score[best + 1]);
  return (refined - steps) * s.grid_step_hz;
}

}  // namespace

OffsetEstimate estimate_frontend_offset(std::span<const Snapshot> snapshots, const EphemerisStore& ephemerides,
                                        const Geodetic& coarse_position, double coarse_time_error_s,
                                        const OffsetEstimationSettings& settings, ReplicaCache* cache) {
  const Vec3 rx = geodetic_to_ecef(coarse_position);
  const double if_hz = settings.constants.if_residual_nominal_hz;
  OffsetEstimate est;
  const std::size_t k = std::min(settings.max_snapshots, snapshots.size());
  for (std::size_t i = 0; i < k; ++i) {
    const Snapshot& snap = snapshots[i];
    const GpsTime t = GpsTime::from_unix_ms(static_cast<std::int64_t>(snap.timestamp_ms)) - coarse_time_error_s;
    const auto visible = visible_satellites(ephemerides, rx, t, 0.0);
    if (visible.empty()) continue;

    AcquisitionSettings acq;
    acq.constants = settings.constants;
    acq.threshold = settings.threshold;
    acq.doppler_span_hz = settings.search_half_width_hz;
    std::vector<int> prns;
    for (const auto& v : visible) {
      prns.push_back(v.prn);
      acq.prn_doppler_centers_hz[v.prn] = if_hz + v.doppler_hz;
    }
    const auto results = acquire(snap, prns, acq, cache);

    std::vector<Vote> votes;
    for (std::size_t j = 0; j < results.size(); ++j) {
      if (!results[j].detected) continue;
      votes.push_back({results[j].doppler_hz - if_hz - visible[j].doppler_hz, results[j].peak_metric});
    }
    if (!votes.empty()) est.per_snapshot_hz.push_back(consensus_offset(votes, settings));
  }
  if (est.per_snapshot_hz.empty()) throw Error("offset estimation failed: no satellite detected");
  est.offset_hz = median(est.per_snapshot_hz);
  return est;
}

FrequencyModel fit_frequency_model(std::span<const FrequencyObservation> observations, double t0_c) {
  if (observations.empty()) throw std::invalid_argument("no frequency observations");
  const double n = static_cast<double>(observations.size());
  double mx = 0.0, my = 0.0;
  for (const auto& o : observations) {
    mx += o.temperature_c - t0_c;
    my += o.offset_hz;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& o : observations) {
    const double dx = o.temperature_c - t0_c - mx;
    sxx += dx * dx;
    sxy += dx * (o.offset_hz - my);
  }
  FrequencyModel m;
  m.t0_c = t0_c;
  m.slope_hz_per_c = sxx > 1e-12 ? sxy / sxx : 0.0;
  m.offset_at_ref_hz = my - m.slope_hz_per_c * mx;
  return m;
}

ClockChain::ClockChain(ClockChainSettings settings, double origin_s, double initial_error_s)
    : settings_(settings), origin_s_(origin_s), initial_error_s_(initial_error_s) {
  if (settings_.window < 2) throw std::invalid_argument("drift window must hold at least two anchors");
}

double ClockChain::predict(double receiver_time_s) const {
  if (anchors_.empty()) return initial_error_s_;
  const Anchor& last = anchors_.back();
  return propagate_time_error(last.error, std::max(0.0, receiver_time_s - last.t), drift_);
}

double ClockChain::uncertainty(double receiver_time_s) const {
  const double since = anchors_.empty() ? receiver_time_s - origin_s_ : receiver_time_s - anchors_.back().t;
  return std::abs(since) * settings_.rtc_tolerance_ppm * 1e-6;
}

void ClockChain::anchor(double receiver_time_s, double time_error_s) {
  if (!anchors_.empty() && receiver_time_s <= anchors_.back().t) {
    throw std::invalid_argument("clock anchors must be added in time order");
  }
  anchors_.push_back({receiver_time_s, time_error_s});
  while (anchors_.size() > settings_.window) anchors_.pop_front();
  refit();
}

void ClockChain::refit() {
  const std::size_t n = anchors_.size();
  if (n < 2) {
    drift_ = 0.0;
    return;
  }
  if (settings_.robust) {
    std::vector<double> slopes;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        slopes.push_back((anchors_[j].error - anchors_[i].error) / (anchors_[j].t - anchors_[i].t));
      }
    }
    drift_ = median(std::move(slopes));
    return;
  }
  const double t_ref = anchors_.front().t;
  double mt = 0.0, me = 0.0;
  for (const auto& a : anchors_) {
    mt += a.t - t_ref;
    me += a.error;
  }
  mt /= static_cast<double>(n);
  me /= static_cast<double>(n);
  double stt = 0.0, ste = 0.0;
  for (const auto& a : anchors_) {
    stt += (a.t - t_ref - mt) * (a.t - t_ref - mt);
    ste += (a.t - t_ref - mt) * (a.error - me);
  }
  drift_ = ste / stt;
}

}  // namespace snapper
