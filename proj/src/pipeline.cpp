#include "snapper/pipeline.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <regex>

#include "snapper/geometry.hpp"

namespace snapper {
namespace {

double receiver_seconds(const Snapshot& s) { return static_cast<double>(s.timestamp_ms) / 1000.0; }

GpsTime timestamp_time(const Snapshot& s) { return GpsTime::from_unix_ms(static_cast<std::int64_t>(s.timestamp_ms)); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Solution {
  Fix fix;
  PseudorangeSet set;
};

// Drops the worst satellite while the residuals say a measurement is bad.
Solution solve_with_exclusion(PseudorangeSet set, const Vec3& ap_pos, GpsTime ap_time, const PipelineSettings& s) {
  Solution best{solve_coarse_time(set, ap_pos, ap_time, s.solver), set};
  for (std::size_t round = 0; round < s.max_exclusions; ++round) {
    if (best.fix.residual_rms_m <= s.solver.filter.low_confidence_rms_m) break;
    if (best.set.measurements.size() <= s.solver.filter.min_sats) break;
    std::optional<Solution> candidate;
    for (std::size_t drop = 0; drop < best.set.measurements.size(); ++drop) {
      PseudorangeSet reduced = best.set;
      reduced.measurements.erase(reduced.measurements.begin() + static_cast<std::ptrdiff_t>(drop));
      try {
        Fix f = solve_coarse_time(reduced, ap_pos, ap_time, s.solver);
        if (!candidate || f.residual_rms_m < candidate->fix.residual_rms_m) candidate = Solution{f, reduced};
      } catch (const NavigationError&) {
      }
    }
    if (!candidate || candidate->fix.residual_rms_m >= best.fix.residual_rms_m) break;
    best = std::move(*candidate);
  }
  return best;
}

}  // namespace

SnapshotProcessor::SnapshotProcessor(const Dataset& dataset, const EphemerisStore& ephemerides,
                                     const PipelineSettings& settings, const FrequencyModel& model,
                                     ReplicaCache* cache)
    : ephemerides_(ephemerides),
      settings_(settings),
      model_(model),
      cache_(cache),
      chain_(settings.clock, dataset.snapshots.empty() ? 0.0 : receiver_seconds(dataset.snapshots.front()), 0.0),
      a_priori_(geodetic_to_ecef(dataset.a_priori)) {}

SnapshotResult SnapshotProcessor::process(const Snapshot& snapshot, std::size_t index) {
  SnapshotResult result;
  result.index = index;
  const double t_rx = receiver_seconds(snapshot);
  const double predicted_error = chain_.predict(t_rx);
  const GpsTime ap_time = timestamp_time(snapshot) - predicted_error;
  const double if_hz = settings_.constants.if_residual_nominal_hz;
  const double offset = predict_offset(model_, snapshot.temperature_c());
  const auto fail = [&](std::string reason) {
    if (!chain_.recoverable(t_rx)) reason = "clock unrecoverable without a new time anchor: " + reason;
    result.error = std::move(reason);
    return result;
  };

  const auto visible = visible_satellites(ephemerides_, a_priori_, ap_time, settings_.elevation_mask_deg);
  if (visible.empty()) return fail("no visible satellites");

  AcquisitionSettings acq;
  acq.constants = settings_.constants;
  acq.threshold = settings_.threshold;
  acq.doppler_span_hz = settings_.doppler_span_hz;
  acq.doppler_step_hz = settings_.doppler_step_hz;
  std::vector<int> prns;
  for (const auto& v : visible) {
    prns.push_back(v.prn);
    acq.prn_doppler_centers_hz[v.prn] = if_hz + offset + v.doppler_hz;
  }
  const auto acquisitions = acquire(snapshot, prns, acq, cache_);

  Fix fix;
  PseudorangeSet used;
  try {
    auto set = reconstruct_pseudoranges(acquisitions, a_priori_, ap_time, ephemerides_, settings_.weight_by_metric);
    auto solution = solve_with_exclusion(std::move(set), a_priori_, ap_time, settings_);
    fix = solution.fix;
    used = std::move(solution.set);
  } catch (const NavigationError& e) {
    return fail(e.what());
  }
  fix.timestamp_ms = snapshot.timestamp_ms;
  fix.temperature_c = snapshot.temperature_c();
  fix.battery_v = snapshot.battery_v();
  result.fix = fix;
  if (fix.confidence == Confidence::Rejected) return result;

  a_priori_ = fix.ecef;
  const double solved_error = timestamp_time(snapshot) - fix.solved_time;
  chain_.anchor(t_rx, solved_error);

  // Front-end offset implied by the measured carriers at the solved state.
  std::vector<double> implied;
  for (const auto& m : used.measurements) {
    const auto it = std::find_if(acquisitions.begin(), acquisitions.end(), [&](const auto& a) { return a.prn == m.prn; });
    const auto p = predict_satellite(m.ephemeris, fix.ecef, fix.solved_time);
    implied.push_back(it->doppler_hz - if_hz - p.doppler_hz);
  }
  observations_.push_back({fix.temperature_c, median(std::move(implied))});
  return result;
}

DatasetProcessing process_snapshots(const Dataset& dataset, const EphemerisStore& ephemerides,
                                    const PipelineSettings& settings, const ProcessHooks& hooks,
                                    std::optional<double> stored_slope, ReplicaCache* cache) {
  DatasetProcessing out;
  const auto& snaps = dataset.snapshots;
  if (snaps.empty()) return out;

  const auto covered = [&](const Snapshot& s) {
    return ephemerides.covers(timestamp_time(s), settings.solver.filter.min_sats);
  };
  if (ephemerides.empty() || !covered(snaps.front()) || !covered(snaps.back())) throw Error("no satellite data");

  const std::size_t k = std::min(settings.offset.max_snapshots, snaps.size());
  OffsetEstimationSettings os = settings.offset;
  os.constants = settings.constants;
  os.threshold = settings.threshold;
  out.offset = estimate_frontend_offset(std::span(snaps).first(k), ephemerides, dataset.a_priori, 0.0, os, cache);

  std::vector<double> temps;
  for (std::size_t i = 0; i < k; ++i) temps.push_back(snaps[i].temperature_c());
  out.frequency_model.t0_c = median(temps);
  out.frequency_model.offset_at_ref_hz = out.offset->offset_hz;
  out.frequency_model.slope_hz_per_c = settings.frequency_slope_hz_per_c.value_or(stored_slope.value_or(0.0));

  SnapshotProcessor processor(dataset, ephemerides, settings, out.frequency_model, cache);
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    if (hooks.should_stop && hooks.should_stop()) throw ProcessingInterrupted("processing interrupted");
    out.results.push_back(processor.process(snaps[i], i));
    if (hooks.on_result) hooks.on_result(out.results.back());
  }
  out.observations = processor.observations();

  std::vector<Fix> fixes;
  for (const auto& r : out.results) {
    if (r.fix) fixes.push_back(*r.fix);
  }
  fixes = filter_track(std::move(fixes), settings.solver.filter);
  std::size_t j = 0;
  for (auto& r : out.results) {
    if (!r.fix) continue;
    r.fix = fixes[j++];
    if (r.fix->confidence != Confidence::Rejected) out.track.push_back(*r.fix);
  }
  return out;
}

void Notifier::notify(const DatasetRecord& record) const {
  const nlohmann::json payload = {{"id", record.id}, {"status", to_string(record.status)}};
  if (log_ != nullptr) {
    nlohmann::json line = {{"event", "dataset_status"},
                           {"id", record.id},
                           {"status", to_string(record.status)},
                           {"processed", record.processed},
                           {"total", record.total}};
    if (record.failure_reason) line["reason"] = *record.failure_reason;
    std::lock_guard lock(mutex_);
    *log_ << line.dump() << '\n' << std::flush;
  }
  if (!webhooks_ || !record.webhook_url) return;
  static const std::regex url_re(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(*record.webhook_url, m, url_re)) return;
  try {
    httplib::Client client(m[1].str(), m[2].matched ? std::stoi(m[2].str()) : 80);
    client.set_connection_timeout(2);
    client.set_read_timeout(2);
    client.Post(m[3].matched ? m[3].str() : "/", payload.dump(), "application/json");
  } catch (...) {
    // best effort
  }
}

Pipeline::Pipeline(Store& store, PipelineSettings settings, const Notifier* notifier)
    : store_(store), settings_(std::move(settings)), notifier_(notifier) {}

DatasetRecord Pipeline::ingest(std::span<const std::uint8_t> file, const IngestMetadata& meta,
                               std::int64_t upload_time_ms) {
  const bool existed = store_.find(Store::content_id(file)).has_value();
  DatasetRecord r = store_.ingest(file, meta, upload_time_ms);
  if (!existed && notifier_) notifier_->notify(r);
  return r;
}

std::vector<Fix> Pipeline::process_dataset(const std::string& id, const EphemerisStore& ephemerides,
                                           const ProcessHooks& hooks) {
  {
    std::lock_guard lock(active_mutex_);
    if (!active_.insert(id).second) throw Error("dataset " + id + " is already being processed");
  }
  struct Release {
    Pipeline* p;
    std::string id;
    ~Release() {
      std::lock_guard lock(p->active_mutex_);
      p->active_.erase(id);
    }
  } release{this, id};

  if (!store_.begin_processing(id, true)) {
    throw Error("dataset " + id + " is " + to_string(store_.get(id).status) + ", expected uploaded");
  }
  if (notifier_) notifier_->notify(store_.get(id));

  const Dataset dataset = store_.load_dataset(id);
  std::optional<double> stored_slope;
  if (auto m = store_.frequency_model(dataset.device_id)) stored_slope = m->slope_hz_per_c;

  ProcessHooks persist = hooks;
  persist.on_result = [&](const SnapshotResult& r) {
    store_.put_result(id, r);
    if (hooks.on_result) hooks.on_result(r);
  };

  DatasetProcessing run;
  try {
    run = process_snapshots(dataset, ephemerides, settings_, persist, stored_slope, &cache_);
  } catch (const ProcessingInterrupted&) {
    throw;
  } catch (const std::exception& e) {
    store_.fail(id, e.what());
    if (notifier_) notifier_->notify(store_.get(id));
    throw Error(e.what());
  }

  if (run.observations.size() >= 2) {
    store_.put_frequency_model(dataset.device_id, fit_frequency_model(run.observations, run.frequency_model.t0_c));
  }
  store_.complete(id, run.results);
  if (notifier_) notifier_->notify(store_.get(id));
  return run.track;
}

std::string Pipeline::export_track(const std::string& id, ExportFormat format) const {
  const auto fixes = store_.track(id);
  return snapper::export_track(fixes, format, "snapper " + id);
}

}  // namespace snapper
