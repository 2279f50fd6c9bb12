#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "snapper/pipeline.hpp"

namespace httplib {
class Server;
}

namespace snapper {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 binds a free port
  std::size_t workers = 2;
  PipelineSettings pipeline;
  std::ostream* log = nullptr;  // structured status events
  bool webhooks = true;
};

// HTTP API over the pipeline:
//   POST /api/v1/datasets                 multipart "dataset" file + optional "metadata" JSON
//   GET  /api/v1/datasets/{id}            record JSON
//   GET  /api/v1/datasets/{id}/track?format=csv|json|gpx|kml
// A bounded worker pool drains uploaded datasets (and ones left in
// processing by an earlier run) through the pipeline.
class Service {
 public:
  Service(Store& store, EphemerisStore ephemerides, ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts serving; returns once the socket listens. Throws Error
  // when the address cannot be bound.
  void start();
  int port() const { return port_; }
  // Stops accepting requests, lets workers finish their current snapshot and
  // joins every thread. Progress of interrupted datasets stays persisted.
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

 private:
  void enqueue(const std::string& id);
  void worker();

  Store& store_;
  EphemerisStore ephemerides_;
  ServiceConfig config_;
  Notifier notifier_;
  Pipeline pipeline_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::mutex log_mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool stopping_ = false;
  bool started_ = false;
  int port_ = 0;
};

}  // namespace snapper
