#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "snapper/cli.hpp"
#include "snapper/constellation.hpp"
#include "snapper/service.hpp"
#include "snapper/signal_sim.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines _res.
#include <httplib.h>
#include <sys/wait.h>

using namespace snapper;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

int cli_binary(const std::string& args) {
  const std::string cmd = std::string(SNAPPER_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("snapper_if_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kScenario = R"({
  "start": "2022-03-01T08:00:00Z",
  "waypoints": [
    {"t_s": 0, "lat": 52.2053, "lon": 0.1218, "height": 20, "temperature_c": 12},
    {"t_s": 3000, "lat": 52.2100, "lon": 0.1300, "height": 20, "temperature_c": 14}
  ],
  "interval_s": 600,
  "cn0_dbhz": 45,
  "max_satellites": 10,
  "seed": 5,
  "device_id": "5a5a000000000002",
  "errors": {"clock_drift_ppm": 5.0, "initial_clock_offset_s": 2.0, "frequency_offset_hz": 400.0}
})";

const GpsTime kEpoch = GpsTime::from_week_tow(2199, 180000.0);

std::vector<std::uint8_t> small_dataset(std::uint64_t seed, std::size_t n, const EphemerisStore& store) {
  std::vector<Waypoint> track = {{kEpoch, {47.37, 8.54, 400.0}, 20.0},
                                 {kEpoch + 300.0 * static_cast<double>(n), {47.37, 8.54, 400.0}, 20.0}};
  DeploymentOptions o;
  o.interval_s = 300.0;
  o.seed = seed;
  o.device_id = 0x1000 + seed;
  DeploymentErrors e;
  e.clock_drift = 0.0;
  auto d = generate_deployment(track, store, o, e);
  d.dataset.snapshots.resize(n);
  return encode_dataset(d.dataset);
}

const EphemerisStore& ephemerides() {
  static const NominalConstellation c;
  static const EphemerisStore s = c.store_for_span(kEpoch - 7200, kEpoch + 3 * 3600);
  return s;
}

httplib::Result upload(httplib::Client& client, const std::vector<std::uint8_t>& bytes, const std::string& meta = "") {
  httplib::MultipartFormDataItems items = {
      {"dataset", std::string(bytes.begin(), bytes.end()), "d.snpr", "application/octet-stream"}};
  if (!meta.empty()) items.push_back({"metadata", meta, "", "application/json"});
  return client.Post("/api/v1/datasets", items);
}

std::string poll_status(httplib::Client& client, const std::string& id, std::vector<std::string>* seen = nullptr,
                        double timeout_s = 120.0) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string status;
  while (std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < timeout_s) {
    auto r = client.Get("/api/v1/datasets/" + id);
    if (!r || r->status != 200) return "error";
    status = json::parse(r->body)["status"].get<std::string>();
    if (seen && (seen->empty() || seen->back() != status)) seen->push_back(status);
    if (status == "complete" || status == "failed") return status;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return status;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  const auto unknown = cli({"energy", "--bogus"});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("energy"), std::string::npos);
  TempDir dir;
  write(dir / "d.snpr", "x");
  EXPECT_EQ(cli({"process", "--in", dir / "d.snpr"}).code, kExitUsage);
  EXPECT_EQ(cli({"acquire", "--in", dir / "d.snpr", "--prn", "40"}).code, kExitUsage);
  EXPECT_EQ(cli({"energy", "--sleep-ua", "9"}).code, kExitUsage);
}

TEST(Cli, EnergyReport) {
  const auto text = cli({"energy", "--battery-mah", "40", "--interval", "3600"});
  EXPECT_EQ(text.code, kExitOk);
  EXPECT_NE(text.out.find("455.1 days"), std::string::npos) << text.out;
  EXPECT_NE(text.out.find("memory"), std::string::npos);
  const auto j = json::parse(cli({"energy", "--interval", "3600", "--json"}).out);
  EXPECT_NEAR(j["days"].get<double>(), 10922.0 / 24.0, 1e-6);
  EXPECT_EQ(j["limiting_factor"], "memory");
  EXPECT_EQ(j["max_records"], 10922);
  EXPECT_GT(j["energy_days"].get<double>(), 365.25 * 2.5);
}

TEST(Cli, SimulateProcessExportEndToEnd) {
  TempDir dir;
  write(dir / "s.json", kScenario);
  const auto sim = cli({"simulate", "--scenario", dir / "s.json", "--out", dir / "d.snpr", "--nav-out",
                        dir / "nav.rnx", "--truth", dir / "truth.json"});
  ASSERT_EQ(sim.code, kExitOk) << sim.err;
  ASSERT_TRUE(fs::exists(dir / "d.snpr"));
  EXPECT_EQ(fs::file_size(dir / "d.snpr"), 33u + 6u * 6150u);

  const auto proc = cli({"process", "--in", dir / "d.snpr", "--nav", dir / "nav.rnx", "--out", dir / "t.gpx",
                         "--store", dir / "store", "--json"});
  ASSERT_EQ(proc.code, kExitOk) << proc.err;
  const auto summary = json::parse(proc.out);
  EXPECT_EQ(summary["snapshots"], 6);
  EXPECT_GE(summary["fixes"].get<int>(), 5);
  std::ifstream gpx(dir / "t.gpx");
  const std::string doc((std::istreambuf_iterator<char>(gpx)), {});
  std::size_t trkpts = 0;
  for (auto p = doc.find("<trkpt "); p != std::string::npos; p = doc.find("<trkpt ", p + 1)) ++trkpts;
  EXPECT_EQ(trkpts, summary["fixes"].get<std::size_t>());

  const auto exp = cli({"export", "--store", dir / "store", "--id", summary["id"], "--format", "csv"});
  ASSERT_EQ(exp.code, kExitOk) << exp.err;
  EXPECT_EQ(std::count(exp.out.begin(), exp.out.end(), '\n'), summary["fixes"].get<long>() + 1);
  EXPECT_EQ(cli({"export", "--store", dir / "store", "--id", "abc"}).code, kExitUsage);

  const auto solve = cli({"solve", "--in", dir / "d.snpr", "--nav", dir / "nav.rnx", "--index", "1", "--json"});
  EXPECT_EQ(solve.code, kExitOk) << solve.err;

  const auto acq = cli({"acquire", "--in", dir / "d.snpr", "--prn", "1", "--prn", "2", "--json"});
  EXPECT_EQ(acq.code, kExitOk) << acq.err;
}

TEST(Cli, ProcessingFailureExitsTwo) {
  TempDir dir;
  write(dir / "s.json", kScenario);
  ASSERT_EQ(cli({"simulate", "--scenario", dir / "s.json", "--out", dir / "d.snpr"}).code, kExitOk);
  // Navigation data from another week leaves no usable ephemerides.
  const NominalConstellation c;
  const GpsTime other = GpsTime::from_week_tow(2100, 0.0);
  const auto eph = c.store_for_span(other, other + 7200.0);
  ASSERT_EQ(cli({"simulate", "--scenario", dir / "s.json", "--out", dir / "ignored.snpr"}).code, kExitOk);
  write(dir / "bad.snpr", "SNPR garbage");
  EXPECT_EQ(cli({"process", "--in", dir / "bad.snpr", "--nav", SNAPPER_TEST_DATA "/one_gps.rnx"}).code, kExitUsage);
  EXPECT_EQ(cli({"process", "--in", dir / "d.snpr", "--nav", SNAPPER_TEST_DATA "/one_gps.rnx"}).code, kExitFailure);
}

TEST(Cli, BinaryExitCodes) {
  EXPECT_EQ(cli_binary("--help"), 0);
  EXPECT_EQ(cli_binary("energy --interval 3600"), 0);
  EXPECT_EQ(cli_binary("process --in /nonexistent"), 1);
  EXPECT_EQ(cli_binary("nonsense"), 1);
}

TEST(Cli, DeviceSimScript) {
  TempDir dir;
  write(dir / "script.json", R"({
    "start_time": "2022-03-01T08:00:00Z",
    "events": [
      {"event": "plug_in"},
      {"event": "configure", "start": "2022-03-01T09:00:00Z", "end": "2022-03-01T12:00:00Z", "interval_s": 3600},
      {"event": "unplug"},
      {"event": "advance", "seconds": 7200},
      {"event": "set_environment", "battery_v": 2.8},
      {"event": "advance", "seconds": 3600},
      {"event": "configure", "start": "2022-03-01T09:00:00Z", "end": "2022-03-01T12:00:00Z"},
      {"event": "advance", "seconds": 7200}
    ]})");
  const auto r = cli({"device-sim", "--script", dir / "script.json", "--json"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["records"], 2);
  EXPECT_EQ(j["brownouts"], 2);
  EXPECT_EQ(j["state"], "shutdown");
  EXPECT_TRUE(j["events"][6].contains("error"));
}

TEST(Cli, FitFrequencyModel) {
  TempDir dir;
  write(dir / "obs.csv", "temperature,offset\n0,800\n10,780\n20,760\n30,740\n");
  const auto r = cli({"fit-freq-model", "--in", dir / "obs.csv", "--t0", "20", "--json"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["slope_hz_per_c"].get<double>(), -2.0, 1e-9);
  EXPECT_NEAR(j["offset_at_ref_hz"].get<double>(), 760.0, 1e-9);
}

TEST(Http, UploadPollFetch) {
  Store store(":memory:");
  ServiceConfig cfg;
  cfg.workers = 1;
  Service service(store, ephemerides(), cfg);
  service.start();
  httplib::Client client("127.0.0.1", service.port());
  client.set_read_timeout(30);

  const auto big = small_dataset(1, 12, ephemerides());
  const auto bytes = small_dataset(2, 4, ephemerides());
  auto first = upload(client, big);
  ASSERT_TRUE(first);
  EXPECT_EQ(first->status, 201);
  auto res = upload(client, bytes, R"({"a_priori_uncertainty_m": 20000})");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const std::string id = json::parse(res->body)["id"];

  // Queued behind the first dataset on the only worker.
  auto early = client.Get("/api/v1/datasets/" + id + "/track?format=gpx");
  ASSERT_TRUE(early);
  EXPECT_EQ(early->status, 409);

  std::vector<std::string> seen;
  EXPECT_EQ(poll_status(client, id, &seen), "complete");
  ASSERT_GE(seen.size(), 2u);
  EXPECT_EQ(seen.front(), "uploaded");
  EXPECT_EQ(seen.back(), "complete");
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_NE(seen[i], "uploaded");

  const auto record = json::parse(client.Get("/api/v1/datasets/" + id)->body);
  EXPECT_EQ(record["progress"]["processed"], 4);
  EXPECT_EQ(record["progress"]["total"], 4);

  for (const auto& [fmt, mime] : std::vector<std::pair<std::string, std::string>>{
           {"gpx", "application/gpx+xml"}, {"csv", "text/csv"}, {"json", "application/json"},
           {"kml", "application/vnd.google-earth.kml+xml"}}) {
    auto t = client.Get("/api/v1/datasets/" + id + "/track?format=" + fmt);
    ASSERT_TRUE(t);
    EXPECT_EQ(t->status, 200);
    EXPECT_EQ(t->get_header_value("Content-Type"), mime);
  }
  const auto track = json::parse(client.Get("/api/v1/datasets/" + id + "/track")->body);
  EXPECT_GE(track.size(), 3u);

  auto again = upload(client, bytes);
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(json::parse(again->body)["id"], id);
  service.stop();
}

TEST(Http, ErrorStatuses) {
  Store store(":memory:");
  Service service(store, ephemerides());
  service.start();
  httplib::Client client("127.0.0.1", service.port());
  EXPECT_EQ(client.Get("/api/v1/datasets/0123abcd")->status, 404);
  EXPECT_EQ(client.Get("/api/v1/datasets/0123abcd/track")->status, 404);
  const std::vector<std::uint8_t> junk = {'n', 'o', 'p', 'e'};
  EXPECT_EQ(upload(client, junk)->status, 400);
  EXPECT_EQ(upload(client, small_dataset(3, 1, ephemerides()), "{not json")->status, 400);
  EXPECT_EQ(upload(client, small_dataset(3, 1, ephemerides()), R"({"colour": 1})")->status, 400);
  httplib::MultipartFormDataItems wrong = {{"file", "abc", "x", "application/octet-stream"}};
  EXPECT_EQ(client.Post("/api/v1/datasets", wrong)->status, 400);
  EXPECT_TRUE(store.list().empty());

  Dataset empty;
  const auto bytes = encode_dataset(empty);
  const auto id = json::parse(upload(client, bytes)->body)["id"].get<std::string>();
  EXPECT_EQ(poll_status(client, id), "complete");
  EXPECT_EQ(client.Get("/api/v1/datasets/" + id + "/track?format=shp")->status, 400);
  service.stop();
}

TEST(Http, ConcurrentUploadsKeepStoreConsistent) {
  TempDir dir;
  Store store(dir.path.string());
  ServiceConfig cfg;
  cfg.workers = 2;
  Service service(store, ephemerides(), cfg);
  service.start();

  std::vector<std::vector<std::uint8_t>> files;
  for (std::uint64_t i = 0; i < 100; ++i) {
    if (i % 10 == 0) {
      files.push_back(small_dataset(100 + i, 1, ephemerides()));
    } else {
      Dataset d;
      d.device_id = 0x9000 + i;
      files.push_back(encode_dataset(d));
    }
  }
  std::atomic<int> created{0}, failed{0};
  std::vector<std::string> ids(files.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < files.size(); ++i) {
    threads.emplace_back([&, i] {
      httplib::Client client("127.0.0.1", service.port());
      client.set_read_timeout(60);
      client.set_connection_timeout(30);
      auto r = upload(client, files[i]);
      if (r && r->status == 201) {
        ++created;
        ids[i] = json::parse(r->body)["id"];
      } else {
        ++failed;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(created.load(), 100);
  EXPECT_EQ(failed.load(), 0);

  httplib::Client client("127.0.0.1", service.port());
  for (const auto& id : ids) {
    if (id.empty()) continue;
    const auto status = poll_status(client, id, nullptr, 300.0);
    EXPECT_TRUE(status == "complete" || status == "failed") << status;
  }
  service.stop();
  EXPECT_EQ(store.list().size(), 100u);
  EXPECT_EQ(store.list(DatasetStatus::Complete).size() + store.list(DatasetStatus::Failed).size(), 100u);
  EXPECT_TRUE(store.check_consistency().empty());
}

TEST(Http, StopPersistsProgressAndRestartResumes) {
  TempDir dir;
  const auto bytes = small_dataset(7, 10, ephemerides());
  std::string id;
  {
    Store store(dir.path.string());
    Service service(store, ephemerides());
    service.start();
    httplib::Client client("127.0.0.1", service.port());
    id = json::parse(upload(client, bytes)->body)["id"];
    while (store.get(id).processed < 2) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    service.stop();
    const auto r = store.get(id);
    EXPECT_EQ(r.status, DatasetStatus::Processing);
    EXPECT_TRUE(store.check_consistency().empty());
  }
  Store store(dir.path.string());
  Service service(store, ephemerides());
  service.start();
  httplib::Client client("127.0.0.1", service.port());
  EXPECT_EQ(poll_status(client, id), "complete");
  service.stop();
  EXPECT_EQ(store.results(id).size(), 10u);
  EXPECT_TRUE(store.check_consistency().empty());
}
