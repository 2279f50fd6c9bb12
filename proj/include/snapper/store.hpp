#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snapper/clock_models.hpp"
#include "snapper/navigation.hpp"
#include "snapper/snapshot.hpp"

struct sqlite3;

namespace snapper {

enum class DatasetStatus { Uploaded, Processing, Complete, Failed };
const char* to_string(DatasetStatus s);
DatasetStatus parse_dataset_status(const std::string& s);

struct DatasetRecord {
  std::string id;
  std::uint64_t device_id = 0;
  DatasetStatus status = DatasetStatus::Uploaded;
  std::int64_t upload_time_ms = 0;
  std::size_t processed = 0;
  std::size_t total = 0;
  std::optional<std::string> failure_reason;
  Geodetic a_priori;
  double a_priori_uncertainty_m = 10'000.0;
  std::optional<std::string> webhook_url;
};

struct IngestMetadata {
  std::optional<double> a_priori_height_m;
  std::optional<double> a_priori_uncertainty_m;
  std::optional<std::string> webhook_url;
};

// Outcome for one snapshot: a fix, or the reason there is none.
struct SnapshotResult {
  std::size_t index = 0;
  std::optional<Fix> fix;
  std::string error;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class NotFound : public StoreError {
 public:
  using StoreError::StoreError;
};

// Relational store (datasets, snapshots, results, device models) on SQLite.
// All methods are serialized by an internal mutex, so one Store may be shared
// between threads.
class Store {
 public:
  // `path` is a directory (the database file is created inside it) or
  // ":memory:".
  explicit Store(const std::string& path);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // Id derived from the SHA-256 of the file contents.
  static std::string content_id(std::span<const std::uint8_t> file);

  // Decodes and persists the dataset; identical content returns the existing
  // record. Throws DatasetFormatError (nothing persisted) on bad input.
  DatasetRecord ingest(std::span<const std::uint8_t> file, const IngestMetadata& meta = {},
                       std::int64_t upload_time_ms = 0);

  std::optional<DatasetRecord> find(const std::string& id) const;
  DatasetRecord get(const std::string& id) const;  // throws NotFound
  std::vector<DatasetRecord> list() const;
  std::vector<DatasetRecord> list(DatasetStatus status) const;
  Dataset load_dataset(const std::string& id) const;

  // uploaded -> processing. Returns false when the record is in another state.
  // A record already in processing (left by an interrupted run) is accepted
  // when `resume` is set; its partial results are discarded.
  bool begin_processing(const std::string& id, bool resume = false);
  // Appends one result and advances progress in one transaction.
  void put_result(const std::string& id, const SnapshotResult& result);
  // Rewrites the confidence of every fix and marks the record complete, in
  // one transaction. `results` must cover every snapshot.
  void complete(const std::string& id, std::span<const SnapshotResult> results);
  void fail(const std::string& id, const std::string& reason);

  std::vector<SnapshotResult> results(const std::string& id) const;
  // Non-rejected fixes in snapshot order; throws StoreError unless complete.
  std::vector<Fix> track(const std::string& id) const;

  void put_frequency_model(std::uint64_t device_id, const FrequencyModel& model);
  std::optional<FrequencyModel> frequency_model(std::uint64_t device_id) const;

  // Checks that every complete record has one result per snapshot and that
  // progress counters match stored rows. Returns the list of problems.
  std::vector<std::string> check_consistency() const;

 private:
  void exec(const char* sql) const;
  DatasetRecord read_record(const std::string& id) const;

  mutable std::recursive_mutex mutex_;
  sqlite3* db_ = nullptr;
};

}  // namespace snapper
