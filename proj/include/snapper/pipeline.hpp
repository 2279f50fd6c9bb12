#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "snapper/calibration.hpp"
#include "snapper/export.hpp"
#include "snapper/navigation.hpp"
#include "snapper/store.hpp"

namespace snapper {

struct PipelineSettings {
  OffsetEstimationSettings offset;
  SolverSettings solver;
  ClockChainSettings clock;
  // Per-satellite search around the predicted carrier frequency.
  double doppler_span_hz = 1500.0;
  double doppler_step_hz = 500.0;
  double threshold = kDefaultDetectionThreshold;
  double elevation_mask_deg = 5.0;
  // Temperature slope of the front-end offset; falls back to the stored
  // device model, then to zero.
  std::optional<double> frequency_slope_hz_per_c;
  bool weight_by_metric = false;
  // Satellites that may be dropped from a fix with large residuals.
  std::size_t max_exclusions = 2;
  SignalConstants constants;
};

struct ProcessHooks {
  // Called after each snapshot result has been produced (and persisted).
  std::function<void(const SnapshotResult&)> on_result;
  // Checked before each snapshot; returning true interrupts processing.
  std::function<bool()> should_stop;
};

class ProcessingInterrupted : public Error {
 public:
  using Error::Error;
};

struct DatasetProcessing {
  std::vector<SnapshotResult> results;  // one per snapshot, confidences filtered
  std::vector<Fix> track;               // non-rejected fixes in order
  std::optional<OffsetEstimate> offset;
  FrequencyModel frequency_model;  // model used for the run
  std::vector<FrequencyObservation> observations;
};

// Sequential per-snapshot state: clock chain, frequency model and the
// a-priori position taken from the last accepted fix.
class SnapshotProcessor {
 public:
  SnapshotProcessor(const Dataset& dataset, const EphemerisStore& ephemerides, const PipelineSettings& settings,
                    const FrequencyModel& model, ReplicaCache* cache);

  SnapshotResult process(const Snapshot& snapshot, std::size_t index);
  const std::vector<FrequencyObservation>& observations() const { return observations_; }
  const ClockChain& clock() const { return chain_; }

 private:
  const EphemerisStore& ephemerides_;
  const PipelineSettings& settings_;
  FrequencyModel model_;
  ReplicaCache* cache_;
  ClockChain chain_;
  Vec3 a_priori_;
  std::vector<FrequencyObservation> observations_;
};

// Runs the whole dataset in memory. Throws Error with "no satellite data" or
// "offset estimation failed" for dataset-level failures.
DatasetProcessing process_snapshots(const Dataset& dataset, const EphemerisStore& ephemerides,
                                    const PipelineSettings& settings = {}, const ProcessHooks& hooks = {},
                                    std::optional<double> stored_slope = std::nullopt,
                                    ReplicaCache* cache = nullptr);

// Status change notifications: one JSON line per event on `log` and an
// optional best-effort POST of {id, status} to the record's webhook.
class Notifier {
 public:
  explicit Notifier(std::ostream* log = nullptr, bool webhooks = true) : log_(log), webhooks_(webhooks) {}
  void notify(const DatasetRecord& record) const;

 private:
  std::ostream* log_;
  bool webhooks_;
  mutable std::mutex mutex_;
};

class Pipeline {
 public:
  explicit Pipeline(Store& store, PipelineSettings settings = {}, const Notifier* notifier = nullptr);

  DatasetRecord ingest(std::span<const std::uint8_t> file, const IngestMetadata& meta = {},
                       std::int64_t upload_time_ms = 0);

  // Processes an uploaded dataset (or one left in processing by an
  // interrupted run) and returns its track. Dataset-level failures mark the
  // record failed and throw Error; an interruption leaves it in processing
  // and throws ProcessingInterrupted. Only one caller may process a given id
  // at a time.
  std::vector<Fix> process_dataset(const std::string& id, const EphemerisStore& ephemerides,
                                   const ProcessHooks& hooks = {});

  std::string export_track(const std::string& id, ExportFormat format) const;

  Store& store() { return store_; }
  const PipelineSettings& settings() const { return settings_; }

 private:
  Store& store_;
  PipelineSettings settings_;
  const Notifier* notifier_;
  ReplicaCache cache_;
  std::mutex active_mutex_;
  std::set<std::string> active_;
};

}  // namespace snapper
