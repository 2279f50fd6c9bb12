#include "snapper/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <nlohmann/json.hpp>

namespace snapper {
namespace {

using nlohmann::json;

json record_json(const DatasetRecord& r) {
  json j = {{"id", r.id},
            {"device_id", format_device_id(r.device_id)},
            {"status", to_string(r.status)},
            {"upload_time_ms", r.upload_time_ms},
            {"progress", {{"processed", r.processed}, {"total", r.total}}},
            {"a_priori", {{"lat", r.a_priori.lat_deg}, {"lon", r.a_priori.lon_deg}, {"height", r.a_priori.height_m}}},
            {"a_priori_uncertainty_m", r.a_priori_uncertainty_m}};
  j["failure_reason"] = r.failure_reason ? json(*r.failure_reason) : json(nullptr);
  return j;
}

void error_response(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

IngestMetadata parse_metadata(const std::string& text) {
  IngestMetadata meta;
  if (text.empty()) return meta;
  const json j = json::parse(text);  // throws on malformed input
  if (!j.is_object()) throw std::invalid_argument("metadata must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k == "a_priori_height_m") {
      meta.a_priori_height_m = v.get<double>();
    } else if (k == "a_priori_uncertainty_m") {
      meta.a_priori_uncertainty_m = v.get<double>();
    } else if (k == "webhook_url") {
      meta.webhook_url = v.get<std::string>();
    } else {
      throw std::invalid_argument("unknown metadata key " + k);
    }
  }
  return meta;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Service::Service(Store& store, EphemerisStore ephemerides, ServiceConfig config)
    : store_(store),
      ephemerides_(std::move(ephemerides)),
      config_(std::move(config)),
      notifier_(config_.log, config_.webhooks),
      pipeline_(store_, config_.pipeline, &notifier_),
      server_(std::make_unique<httplib::Server>()) {
  if (config_.workers == 0) throw std::invalid_argument("at least one worker is required");

  server_->Post("/api/v1/datasets", [this](const httplib::Request& req, httplib::Response& res) {
    std::string body;
    std::string metadata;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("dataset")) return error_response(res, 400, "multipart field \"dataset\" missing");
      body = req.get_file_value("dataset").content;
      if (req.has_file("metadata")) metadata = req.get_file_value("metadata").content;
    } else {
      body = req.body;
    }
    IngestMetadata meta;
    try {
      meta = parse_metadata(metadata);
    } catch (const std::exception& e) {
      return error_response(res, 400, std::string("malformed metadata: ") + e.what());
    }
    const std::span bytes(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
    DatasetRecord r;
    try {
      const bool existed = store_.find(Store::content_id(bytes)).has_value();
      r = pipeline_.ingest(bytes, meta, now_ms());
      res.status = existed ? 200 : 201;
    } catch (const DatasetFormatError& e) {
      return error_response(res, 400, std::string("malformed upload: ") + e.what());
    }
    res.set_content(json{{"id", r.id}, {"status", to_string(r.status)}}.dump(), "application/json");
    if (r.status == DatasetStatus::Uploaded) enqueue(r.id);
  });

  server_->Get(R"(/api/v1/datasets/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = store_.find(req.matches[1]);
    if (!r) return error_response(res, 404, "unknown dataset");
    res.set_content(record_json(*r).dump(), "application/json");
  });

  server_->Get(R"(/api/v1/datasets/([0-9a-f]+)/track)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    ExportFormat format = ExportFormat::Json;
    try {
      if (req.has_param("format")) format = parse_export_format(req.get_param_value("format"));
    } catch (const std::invalid_argument& e) {
      return error_response(res, 400, e.what());
    }
    const auto r = store_.find(id);
    if (!r) return error_response(res, 404, "unknown dataset");
    if (r->status != DatasetStatus::Complete) {
      return error_response(res, 409, std::string("dataset is ") + to_string(r->status));
    }
    res.set_content(pipeline_.export_track(id, format), mime_type(format));
  });

  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    error_response(res, 500, what);
  });
}

Service::~Service() { stop(); }

void Service::start() {
  if (started_) return;
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
  } else {
    port_ = server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ <= 0) throw Error("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  started_ = true;
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();

  for (const auto& r : store_.list()) {
    if (r.status == DatasetStatus::Uploaded || r.status == DatasetStatus::Processing) enqueue(r.id);
  }
  for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker(); });
}

void Service::enqueue(const std::string& id) {
  {
    std::lock_guard lock(mutex_);
    if (std::find(queue_.begin(), queue_.end(), id) != queue_.end()) return;
    queue_.push_back(id);
  }
  cv_.notify_one();
}

void Service::worker() {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
    }
    ProcessHooks hooks;
    hooks.should_stop = [this] {
      std::lock_guard lock(mutex_);
      return stopping_;
    };
    try {
      pipeline_.process_dataset(id, ephemerides_, hooks);
    } catch (const std::exception& e) {
      if (config_.log) {
        std::lock_guard lock(log_mutex_);
        *config_.log << json{{"event", "processing_error"}, {"id", id}, {"error", e.what()}}.dump() << '\n';
      }
    }
  }
}

void Service::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (started_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  cv_.notify_all();
}

void Service::wait() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return stopping_; });
}

}  // namespace snapper
