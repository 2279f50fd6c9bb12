#include "snapper/store.hpp"

#include <openssl/evp.h>
#include <sqlite3.h>

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace snapper {
namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS datasets (
  id TEXT PRIMARY KEY,
  device_id TEXT NOT NULL,
  status TEXT NOT NULL CHECK (status IN ('uploaded','processing','complete','failed')),
  upload_time_ms INTEGER NOT NULL,
  processed INTEGER NOT NULL DEFAULT 0,
  total INTEGER NOT NULL,
  failure_reason TEXT,
  lat REAL NOT NULL, lon REAL NOT NULL, height REAL NOT NULL,
  uncertainty REAL NOT NULL,
  webhook_url TEXT
);
CREATE TABLE IF NOT EXISTS snapshots (
  dataset_id TEXT NOT NULL REFERENCES datasets(id),
  idx INTEGER NOT NULL,
  timestamp_ms INTEGER NOT NULL,
  temperature_centi INTEGER NOT NULL,
  battery_mv INTEGER NOT NULL,
  payload BLOB NOT NULL,
  PRIMARY KEY (dataset_id, idx)
);
CREATE TABLE IF NOT EXISTS results (
  dataset_id TEXT NOT NULL REFERENCES datasets(id),
  idx INTEGER NOT NULL,
  error TEXT NOT NULL DEFAULT '',
  has_fix INTEGER NOT NULL,
  gps_seconds INTEGER, gps_fraction REAL,
  lat REAL, lon REAL, height REAL,
  x REAL, y REAL, z REAL,
  time_correction REAL, bias REAL, rms REAL,
  n_sats INTEGER, confidence TEXT, iterations INTEGER,
  timestamp_ms INTEGER, temperature REAL, battery REAL,
  PRIMARY KEY (dataset_id, idx)
);
CREATE TABLE IF NOT EXISTS device_models (
  device_id TEXT PRIMARY KEY,
  model_json TEXT NOT NULL
);
)sql";

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw StoreError(std::string("sql prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int i, const std::optional<std::string>& v) {
    if (v) return bind(i, *v);
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }
  Statement& bind_null(int i) {
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }
  Statement& bind_blob(int i, std::span<const std::uint8_t> v) {
    check(sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }

  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw StoreError(std::string("sql step: ") + sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }
  void reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }

  std::int64_t i64(int c) const { return sqlite3_column_int64(stmt_, c); }
  double f64(int c) const { return sqlite3_column_double(stmt_, c); }
  bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
  std::string text(int c) const {
    const auto* p = sqlite3_column_text(stmt_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
             : std::string();
  }
  std::vector<std::uint8_t> blob(int c) const {
    const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, c));
    return p ? std::vector<std::uint8_t>(p, p + sqlite3_column_bytes(stmt_, c)) : std::vector<std::uint8_t>{};
  }

 private:
  void check(int rc) const {
    if (rc != SQLITE_OK) throw StoreError(std::string("sql bind: ") + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

// Commits on commit(); rolls back if destroyed first.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec("BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec("COMMIT");
    done_ = true;
  }

 private:
  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw StoreError(std::string("sql: ") + msg);
    }
  }
  sqlite3* db_;
  bool done_ = false;
};

Confidence parse_confidence(const std::string& s) {
  if (s == "high") return Confidence::High;
  if (s == "low") return Confidence::Low;
  return Confidence::Rejected;
}

constexpr const char* kRecordColumns =
    "id, device_id, status, upload_time_ms, processed, total, failure_reason, lat, lon, height, uncertainty, "
    "webhook_url";

DatasetRecord row_to_record(const Statement& s) {
  DatasetRecord r;
  r.id = s.text(0);
  r.device_id = parse_device_id(s.text(1));
  r.status = parse_dataset_status(s.text(2));
  r.upload_time_ms = s.i64(3);
  r.processed = static_cast<std::size_t>(s.i64(4));
  r.total = static_cast<std::size_t>(s.i64(5));
  if (!s.is_null(6)) r.failure_reason = s.text(6);
  r.a_priori = {s.f64(7), s.f64(8), s.f64(9)};
  r.a_priori_uncertainty_m = s.f64(10);
  if (!s.is_null(11)) r.webhook_url = s.text(11);
  return r;
}

}  // namespace

const char* to_string(DatasetStatus s) {
  switch (s) {
    case DatasetStatus::Uploaded:
      return "uploaded";
    case DatasetStatus::Processing:
      return "processing";
    case DatasetStatus::Complete:
      return "complete";
    case DatasetStatus::Failed:
      return "failed";
  }
  return "failed";
}

DatasetStatus parse_dataset_status(const std::string& s) {
  if (s == "uploaded") return DatasetStatus::Uploaded;
  if (s == "processing") return DatasetStatus::Processing;
  if (s == "complete") return DatasetStatus::Complete;
  if (s == "failed") return DatasetStatus::Failed;
  throw std::invalid_argument("unknown dataset status: " + s);
}

Store::Store(const std::string& path) {
  std::string file = path;
  if (path != ":memory:") {
    std::filesystem::create_directories(path);
    file = (std::filesystem::path(path) / "snapper.db").string();
  }
  if (sqlite3_open_v2(file.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX, nullptr) !=
      SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw StoreError("cannot open store " + file + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 10'000);
  if (path != ":memory:") exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=NORMAL");
  exec("PRAGMA foreign_keys=ON");
  exec(kSchema);
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw StoreError("sql: " + msg);
  }
}

std::string Store::content_id(std::span<const std::uint8_t> file) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(file.data(), file.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw StoreError("sha-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (unsigned i = 0; i < 16 && i < len; ++i) {
    id += kHex[digest[i] >> 4];
    id += kHex[digest[i] & 0xF];
  }
  return id;
}

DatasetRecord Store::ingest(std::span<const std::uint8_t> file, const IngestMetadata& meta,
                            std::int64_t upload_time_ms) {
  Dataset ds = decode_dataset(file);  // throws before anything is written
  const std::string id = content_id(file);
  std::lock_guard lock(mutex_);
  if (auto existing = find(id)) return *existing;

  Transaction tx(db_);
  Statement ins(db_,
                "INSERT OR IGNORE INTO datasets (id, device_id, status, upload_time_ms, processed, total, failure_reason, lat, "
                "lon, height, uncertainty, webhook_url) VALUES (?1, ?2, 'uploaded', ?3, 0, ?4, NULL, ?5, ?6, ?7, ?8, "
                "?9)");
  ins.bind(1, id)
      .bind(2, format_device_id(ds.device_id))
      .bind(3, upload_time_ms)
      .bind(4, static_cast<std::int64_t>(ds.snapshots.size()))
      .bind(5, ds.a_priori.lat_deg)
      .bind(6, ds.a_priori.lon_deg)
      .bind(7, meta.a_priori_height_m.value_or(ds.a_priori.height_m))
      .bind(8, meta.a_priori_uncertainty_m.value_or(ds.a_priori_uncertainty_m))
      .bind(9, meta.webhook_url);
  ins.run();
  if (sqlite3_changes(db_) == 0) {  // another connection stored it first
    tx.commit();
    return read_record(id);
  }
  Statement snap(db_,
                 "INSERT INTO snapshots (dataset_id, idx, timestamp_ms, temperature_centi, battery_mv, payload) "
                 "VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
  for (std::size_t i = 0; i < ds.snapshots.size(); ++i) {
    const auto& s = ds.snapshots[i];
    snap.reset();
    snap.bind(1, id)
        .bind(2, static_cast<std::int64_t>(i))
        .bind(3, static_cast<std::int64_t>(s.timestamp_ms))
        .bind(4, static_cast<std::int64_t>(s.temperature_centi_c))
        .bind(5, static_cast<std::int64_t>(s.battery_mv))
        .bind_blob(6, s.payload);
    snap.run();
  }
  tx.commit();
  return read_record(id);
}

DatasetRecord Store::read_record(const std::string& id) const {
  auto r = find(id);
  if (!r) throw NotFound("unknown dataset " + id);
  return *r;
}

std::optional<DatasetRecord> Store::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, (std::string("SELECT ") + kRecordColumns + " FROM datasets WHERE id = ?1").c_str());
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return row_to_record(s);
}

DatasetRecord Store::get(const std::string& id) const { return read_record(id); }

std::vector<DatasetRecord> Store::list() const {
  std::lock_guard lock(mutex_);
  Statement s(db_, (std::string("SELECT ") + kRecordColumns + " FROM datasets ORDER BY upload_time_ms, id").c_str());
  std::vector<DatasetRecord> out;
  while (s.step()) out.push_back(row_to_record(s));
  return out;
}

std::vector<DatasetRecord> Store::list(DatasetStatus status) const {
  auto all = list();
  std::erase_if(all, [&](const DatasetRecord& r) { return r.status != status; });
  return all;
}

Dataset Store::load_dataset(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const DatasetRecord r = read_record(id);
  Dataset ds;
  ds.device_id = r.device_id;
  ds.a_priori = r.a_priori;
  ds.a_priori_uncertainty_m = r.a_priori_uncertainty_m;
  Statement s(db_,
              "SELECT timestamp_ms, temperature_centi, battery_mv, payload FROM snapshots WHERE dataset_id = ?1 "
              "ORDER BY idx");
  s.bind(1, id);
  while (s.step()) {
    Snapshot snap;
    snap.timestamp_ms = static_cast<std::uint64_t>(s.i64(0));
    snap.temperature_centi_c = static_cast<std::int16_t>(s.i64(1));
    snap.battery_mv = static_cast<std::uint16_t>(s.i64(2));
    snap.payload = s.blob(3);
    ds.snapshots.push_back(std::move(snap));
  }
  return ds;
}

bool Store::begin_processing(const std::string& id, bool resume) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  const DatasetRecord r = read_record(id);
  if (r.status == DatasetStatus::Processing && resume) {
    Statement del(db_, "DELETE FROM results WHERE dataset_id = ?1");
    del.bind(1, id).run();
    Statement upd(db_, "UPDATE datasets SET processed = 0 WHERE id = ?1");
    upd.bind(1, id).run();
    tx.commit();
    return true;
  }
  if (r.status != DatasetStatus::Uploaded) return false;
  Statement upd(db_, "UPDATE datasets SET status = 'processing', processed = 0 WHERE id = ?1 AND status = 'uploaded'");
  upd.bind(1, id).run();
  tx.commit();
  return true;
}

namespace {

void insert_result(sqlite3* db, const std::string& id, const SnapshotResult& r) {
  Statement s(db,
              "INSERT OR REPLACE INTO results (dataset_id, idx, error, has_fix, gps_seconds, gps_fraction, lat, lon, "
              "height, x, y, z, time_correction, bias, rms, n_sats, confidence, iterations, timestamp_ms, "
              "temperature, battery) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, "
              "?17, ?18, ?19, ?20, ?21)");
  s.bind(1, id).bind(2, static_cast<std::int64_t>(r.index)).bind(3, r.error).bind(4, std::int64_t{r.fix ? 1 : 0});
  if (r.fix) {
    const Fix& f = *r.fix;
    s.bind(5, f.solved_time.seconds())
        .bind(6, f.solved_time.fraction())
        .bind(7, f.position.lat_deg)
        .bind(8, f.position.lon_deg)
        .bind(9, f.position.height_m)
        .bind(10, f.ecef.x())
        .bind(11, f.ecef.y())
        .bind(12, f.ecef.z())
        .bind(13, f.coarse_time_correction_s)
        .bind(14, f.common_bias_m)
        .bind(15, f.residual_rms_m)
        .bind(16, static_cast<std::int64_t>(f.n_sats))
        .bind(17, std::string(to_string(f.confidence)))
        .bind(18, static_cast<std::int64_t>(f.iterations))
        .bind(19, static_cast<std::int64_t>(f.timestamp_ms))
        .bind(20, f.temperature_c)
        .bind(21, f.battery_v);
  } else {
    for (int c = 5; c <= 21; ++c) s.bind_null(c);
  }
  s.run();
}

}  // namespace

void Store::put_result(const std::string& id, const SnapshotResult& result) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  insert_result(db_, id, result);
  Statement upd(db_,
                "UPDATE datasets SET processed = (SELECT COUNT(*) FROM results WHERE dataset_id = ?1) WHERE id = ?1");
  upd.bind(1, id).run();
  tx.commit();
}

void Store::complete(const std::string& id, std::span<const SnapshotResult> results) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  const DatasetRecord r = read_record(id);
  if (r.status != DatasetStatus::Processing) throw StoreError("dataset " + id + " is not processing");
  if (results.size() != r.total) throw StoreError("result count does not match snapshot count");
  Statement del(db_, "DELETE FROM results WHERE dataset_id = ?1");
  del.bind(1, id).run();
  for (const auto& res : results) insert_result(db_, id, res);
  Statement upd(db_,
                "UPDATE datasets SET status = 'complete', processed = ?2, failure_reason = NULL WHERE id = ?1");
  upd.bind(1, id).bind(2, static_cast<std::int64_t>(results.size())).run();
  tx.commit();
}

void Store::fail(const std::string& id, const std::string& reason) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  const DatasetRecord r = read_record(id);
  if (r.status != DatasetStatus::Processing) throw StoreError("dataset " + id + " is not processing");
  Statement upd(db_, "UPDATE datasets SET status = 'failed', failure_reason = ?2 WHERE id = ?1");
  upd.bind(1, id).bind(2, reason).run();
  tx.commit();
}

std::vector<SnapshotResult> Store::results(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "SELECT idx, error, has_fix, gps_seconds, gps_fraction, lat, lon, height, x, y, z, time_correction, "
              "bias, rms, n_sats, confidence, iterations, timestamp_ms, temperature, battery FROM results WHERE "
              "dataset_id = ?1 ORDER BY idx");
  s.bind(1, id);
  std::vector<SnapshotResult> out;
  while (s.step()) {
    SnapshotResult r;
    r.index = static_cast<std::size_t>(s.i64(0));
    r.error = s.text(1);
    if (s.i64(2) != 0) {
      Fix f;
      f.solved_time = GpsTime(s.i64(3), s.f64(4));
      f.position = {s.f64(5), s.f64(6), s.f64(7)};
      f.ecef = {s.f64(8), s.f64(9), s.f64(10)};
      f.coarse_time_correction_s = s.f64(11);
      f.common_bias_m = s.f64(12);
      f.residual_rms_m = s.f64(13);
      f.n_sats = static_cast<std::size_t>(s.i64(14));
      f.confidence = parse_confidence(s.text(15));
      f.iterations = static_cast<int>(s.i64(16));
      f.timestamp_ms = static_cast<std::uint64_t>(s.i64(17));
      f.temperature_c = s.f64(18);
      f.battery_v = s.f64(19);
      r.fix = f;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Fix> Store::track(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const DatasetRecord r = read_record(id);
  if (r.status != DatasetStatus::Complete) {
    throw StoreError("dataset " + id + " is " + to_string(r.status) + ", not complete");
  }
  std::vector<Fix> out;
  for (auto& res : results(id)) {
    if (res.fix && res.fix->confidence != Confidence::Rejected) out.push_back(*res.fix);
  }
  return out;
}

void Store::put_frequency_model(std::uint64_t device_id, const FrequencyModel& model) {
  const nlohmann::json j = {
      {"offset_at_ref_hz", model.offset_at_ref_hz}, {"slope_hz_per_c", model.slope_hz_per_c}, {"t0_c", model.t0_c}};
  std::lock_guard lock(mutex_);
  Statement s(db_, "INSERT OR REPLACE INTO device_models (device_id, model_json) VALUES (?1, ?2)");
  s.bind(1, format_device_id(device_id)).bind(2, j.dump()).run();
}

std::optional<FrequencyModel> Store::frequency_model(std::uint64_t device_id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT model_json FROM device_models WHERE device_id = ?1");
  s.bind(1, format_device_id(device_id));
  if (!s.step()) return std::nullopt;
  const auto j = nlohmann::json::parse(s.text(0));
  return FrequencyModel{j.at("offset_at_ref_hz").get<double>(), j.at("slope_hz_per_c").get<double>(),
                        j.at("t0_c").get<double>()};
}

std::vector<std::string> Store::check_consistency() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> problems;
  for (const auto& r : list()) {
    Statement snaps(db_, "SELECT COUNT(*) FROM snapshots WHERE dataset_id = ?1");
    snaps.bind(1, r.id);
    snaps.step();
    if (static_cast<std::size_t>(snaps.i64(0)) != r.total) problems.push_back(r.id + ": snapshot rows != total");
    Statement res(db_, "SELECT COUNT(*), COALESCE(MIN(idx), 0), COALESCE(MAX(idx), -1) FROM results WHERE dataset_id = ?1");
    res.bind(1, r.id);
    res.step();
    const auto n = static_cast<std::size_t>(res.i64(0));
    if (r.status == DatasetStatus::Complete) {
      if (n != r.total) problems.push_back(r.id + ": complete with missing results");
      if (n > 0 && (res.i64(1) != 0 || res.i64(2) != static_cast<std::int64_t>(n) - 1)) {
        problems.push_back(r.id + ": result indices not contiguous");
      }
    }
    if (n != r.processed) problems.push_back(r.id + ": progress counter != result rows");
    if (r.status == DatasetStatus::Uploaded && n != 0) problems.push_back(r.id + ": uploaded with results");
  }
  return problems;
}

}  // namespace snapper
