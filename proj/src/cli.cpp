#include "snapper/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <thread>

#include "snapper/constellation.hpp"
#include "snapper/host_protocol.hpp"
#include "snapper/pipeline.hpp"
#include "snapper/receiver.hpp"
#include "snapper/rinex.hpp"
#include "snapper/scenario_io.hpp"
#include "snapper/service.hpp"

namespace snapper {
namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FailureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FailureError("write failed: " + path);
}

Dataset load_dataset_file(const std::string& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_dataset(bytes);
  } catch (const DatasetFormatError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

EphemerisStore load_nav(const std::string& path) {
  try {
    const auto nav = rinex::read_nav_file(path);
    return EphemerisStore(nav.ephemerides);
  } catch (const rinex::ParseError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const Error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::pair<std::string, int> parse_listen(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw UsageError("--listen expects HOST:PORT");
  const std::string host = s.substr(0, colon);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
  }
  if (host.empty() || port < 0 || port > 65535) throw UsageError("--listen expects HOST:PORT");
  return {host, port};
}

std::string resolve_store(const std::string& flag, bool required) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SNAPPER_STORE"); env && *env) return env;
  if (required) throw UsageError("a store is required: pass --store DIR or set SNAPPER_STORE");
  return {};
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

json fix_json(const Fix& f) {
  return {{"time", format_iso8601_ms(f.solved_time.to_unix_ms())},
          {"lat", f.position.lat_deg},
          {"lon", f.position.lon_deg},
          {"height", f.position.height_m},
          {"coarse_time_correction_s", f.coarse_time_correction_s},
          {"common_bias_m", f.common_bias_m},
          {"residual_rms_m", f.residual_rms_m},
          {"n_sats", f.n_sats},
          {"confidence", to_string(f.confidence)}};
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, out, truth, nav_out;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  DeploymentSpec spec;
  try {
    spec = parse_deployment_spec(read_text(a.scenario));
  } catch (const std::invalid_argument& e) {
    throw UsageError(a.scenario + ": " + e.what());
  }
  if (a.seed) spec.options.seed = *a.seed;
  const NominalConstellation constellation(spec.constellation_seed);
  const GpsTime start = spec.track.front().time - 7200.0;
  const GpsTime end = spec.track.back().time + 7200.0;
  const EphemerisStore store = constellation.store_for_span(start, end);
  Deployment d;
  try {
    d = generate_deployment(spec.track, store, spec.options, spec.errors);
  } catch (const std::invalid_argument& e) {
    throw UsageError(a.scenario + ": " + e.what());
  }
  const auto bytes = encode_dataset(d.dataset);
  write_file(a.out, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  if (!a.truth.empty()) write_file(a.truth, deployment_truth_to_json(d));
  if (!a.nav_out.empty()) write_file(a.nav_out, rinex::write_nav(constellation.ephemerides_for_span(start, end)));
  if (a.json) {
    out << json{{"snapshots", d.dataset.snapshots.size()},
                {"device_id", format_device_id(d.dataset.device_id)},
                {"clock_drift", d.clock_drift},
                {"out", a.out}}
               .dump()
        << '\n';
  } else {
    out << "wrote " << d.dataset.snapshots.size() << " snapshots to " << a.out << '\n';
  }
  return kExitOk;
}

// ---- process ---------------------------------------------------------------

struct ProcessArgs {
  std::string in, nav, out, format, store;
  std::optional<double> slope;
  bool json = false;
};

ExportFormat format_for(const std::string& flag, const std::string& out_path) {
  try {
    if (!flag.empty()) return parse_export_format(flag);
    const std::string ext = std::filesystem::path(out_path).extension().string();
    if (ext.size() > 1) return parse_export_format(ext.substr(1));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return ExportFormat::Json;
}

int cmd_process(const ProcessArgs& a, std::ostream& out, std::ostream& err) {
  const ExportFormat format = format_for(a.format, a.out);
  const auto bytes = read_bytes(a.in);
  const EphemerisStore eph = load_nav(a.nav);
  const std::string store_path = resolve_store(a.store, false);
  Store store(store_path.empty() ? ":memory:" : store_path);
  PipelineSettings settings;
  settings.frequency_slope_hz_per_c = a.slope;
  Notifier notifier(nullptr, false);
  Pipeline pipeline(store, settings, &notifier);

  DatasetRecord rec;
  try {
    rec = pipeline.ingest(bytes, {}, 0);
  } catch (const DatasetFormatError& e) {
    throw UsageError(a.in + ": " + e.what());
  }
  if (rec.status != DatasetStatus::Complete) {
    try {
      pipeline.process_dataset(rec.id, eph);
    } catch (const Error& e) {
      throw FailureError(std::string("processing failed: ") + e.what());
    }
  }
  rec = store.get(rec.id);
  if (rec.status != DatasetStatus::Complete) {
    throw FailureError("dataset " + rec.id + " is " + to_string(rec.status) +
                       (rec.failure_reason ? ": " + *rec.failure_reason : std::string()));
  }
  const std::string exported = pipeline.export_track(rec.id, format);
  const auto track = store.track(rec.id);
  if (!a.out.empty()) {
    write_file(a.out, exported);
    if (a.json) {
      out << json{{"id", rec.id}, {"status", to_string(rec.status)}, {"snapshots", rec.total},
                  {"fixes", track.size()}, {"out", a.out}, {"format", to_string(format)}}
                 .dump()
          << '\n';
    } else {
      out << rec.total << " snapshots, " << track.size() << " fixes, " << to_string(format) << " written to "
          << a.out << '\n';
    }
  } else {
    out << exported;
    err << rec.total << " snapshots, " << track.size() << " fixes\n";
  }
  return kExitOk;
}

// ---- acquire ---------------------------------------------------------------

struct AcquireArgs {
  std::string in;
  std::size_t index = 0;
  std::vector<int> prns;
  std::optional<double> center;
  double span = 6000.0;
  double step = 500.0;
  double threshold = kDefaultDetectionThreshold;
  bool json = false;
};

int cmd_acquire(const AcquireArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset_file(a.in);
  if (a.index >= ds.snapshots.size()) throw UsageError("--index out of range");
  AcquisitionSettings s;
  s.doppler_center_hz = a.center;
  s.doppler_span_hz = a.span;
  s.doppler_step_hz = a.step;
  s.threshold = a.threshold;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::vector<int> prns = a.prns;
  if (prns.empty()) {
    for (int p = 1; p <= 32; ++p) prns.push_back(p);
  }
  std::vector<AcquisitionResult> res;
  try {
    res = acquire(ds.snapshots[a.index], prns, s);
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  }
  if (a.json) {
    json arr = json::array();
    for (const auto& r : res) {
      arr.push_back({{"prn", r.prn}, {"code_phase", r.code_phase}, {"doppler_hz", r.doppler_hz},
                     {"peak_metric", r.peak_metric}, {"detected", r.detected}});
    }
    out << arr.dump() << '\n';
  } else {
    out << "prn  code_phase  doppler_hz   metric  detected\n";
    for (const auto& r : res) {
      out << std::setw(3) << r.prn << "  " << std::setw(10) << fixed(r.code_phase, 2) << "  " << std::setw(10)
          << fixed(r.doppler_hz, 1) << "  " << std::setw(7) << fixed(r.peak_metric, 3) << "  "
          << (r.detected ? "yes" : "no") << '\n';
    }
  }
  return kExitOk;
}

// ---- solve -----------------------------------------------------------------

struct SolveArgs {
  std::string in, nav;
  std::size_t index = 0;
  bool json = false;
};

int cmd_solve(const SolveArgs& a, std::ostream& out) {
  Dataset ds = load_dataset_file(a.in);
  const EphemerisStore eph = load_nav(a.nav);
  if (a.index >= ds.snapshots.size()) throw UsageError("--index out of range");
  ds.snapshots.resize(a.index + 1);
  DatasetProcessing run;
  try {
    run = process_snapshots(ds, eph);
  } catch (const Error& e) {
    throw FailureError(e.what());
  }
  const SnapshotResult& r = run.results.back();
  if (!r.fix) throw FailureError("snapshot " + std::to_string(a.index) + ": " + r.error);
  if (a.json) {
    json j = fix_json(*r.fix);
    j["index"] = a.index;
    j["frontend_offset_hz"] = run.frequency_model.offset_at_ref_hz;
    out << j.dump() << '\n';
  } else {
    const Fix& f = *r.fix;
    out << format_iso8601_ms(f.solved_time.to_unix_ms()) << "  lat " << fixed(f.position.lat_deg, 7) << "  lon "
        << fixed(f.position.lon_deg, 7) << "  h " << fixed(f.position.height_m, 1) << " m  dt "
        << fixed(f.coarse_time_correction_s, 4) << " s  rms " << fixed(f.residual_rms_m, 2) << " m  sats "
        << f.n_sats << "  " << to_string(f.confidence) << '\n';
  }
  return kExitOk;
}

// ---- export ----------------------------------------------------------------

struct ExportArgs {
  std::string store, id, format = "json", out;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  ExportFormat format;
  try {
    format = parse_export_format(a.format);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::string path = resolve_store(a.store, true);
  if (!std::filesystem::exists(std::filesystem::path(path) / "snapper.db")) throw UsageError("no store at " + path);
  Store store(path);
  const auto rec = store.find(a.id);
  if (!rec) throw UsageError("unknown dataset " + a.id);
  if (rec->status != DatasetStatus::Complete) {
    throw FailureError("dataset " + a.id + " is " + to_string(rec->status) + ", not complete");
  }
  const std::string data = export_track(store.track(a.id), format, "snapper " + a.id);
  if (a.out.empty()) {
    out << data;
  } else {
    write_file(a.out, data);
  }
  return kExitOk;
}

// ---- energy ----------------------------------------------------------------

struct EnergyArgs {
  double battery_mah = 40.0;
  double interval = 3600.0;
  double flash_mbit = 512.0;
  double sleep_ua = 1.5;
  double capture_uah = 0.3;
  bool json = false;
};

int cmd_energy(const EnergyArgs& a, std::ostream& out) {
  if (a.battery_mah <= 0) throw UsageError("--battery-mah must be positive");
  if (a.interval < 1) throw UsageError("--interval must be at least 1 s");
  if (a.flash_mbit <= 0) throw UsageError("--flash-mbit must be positive");
  EnergyModel e;
  e.battery_capacity_ah = a.battery_mah / 1000.0;
  e.sleep_current_a = a.sleep_ua * 1e-6;
  e.capture_charge_ah = a.capture_uah * 1e-6;
  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }
  FlashLayout flash;
  flash.capacity_bits = static_cast<std::uint64_t>(std::llround(a.flash_mbit * 1024.0 * 1024.0));
  const Lifetime l = estimate_lifetime(a.interval, e, flash);
  if (a.json) {
    out << json{{"days", l.days},
                {"energy_days", l.energy_days},
                {"memory_days", l.memory_days},
                {"limiting_factor", l.limiting_factor},
                {"max_records", flash.max_records()}}
               .dump()
        << '\n';
  } else {
    out << "lifetime: " << fixed(l.days, 1) << " days (limiting factor: " << l.limiting_factor << ")\n"
        << "energy-limited: " << fixed(l.energy_days, 1) << " days\n"
        << "memory-limited: " << fixed(l.memory_days, 1) << " days (" << flash.max_records() << " records)\n";
  }
  return kExitOk;
}

// ---- device-sim ------------------------------------------------------------

struct DeviceSimArgs {
  std::string script, listen;
  std::uint64_t seed = 1;
  bool json = false;
};

int cmd_device_sim(const DeviceSimArgs& a, std::ostream& out) {
  json script;
  try {
    script = json::parse(read_text(a.script));
    if (!script.is_object() || !script.contains("events") || !script["events"].is_array()) {
      throw std::invalid_argument("script needs an \"events\" array");
    }
  } catch (const std::exception& e) {
    throw UsageError(a.script + ": " + e.what());
  }
  ReceiverOptions opts;
  opts.seed = a.seed;
  try {
    opts.true_time_ms = script.contains("start_time") ? parse_iso8601_ms(script["start_time"].get<std::string>()) : 0;
    opts.device_clock_ms =
        opts.true_time_ms + std::llround(script.value("device_clock_offset_s", 0.0) * 1000.0);
    opts.rtc_drift = script.value("rtc_drift_ppm", 0.0) * 1e-6;
  } catch (const std::exception& e) {
    throw UsageError(a.script + ": " + e.what());
  }

  SimulatedReceiver device(opts);
  std::mutex device_mutex;
  std::unique_ptr<protocol::DeviceServer> server;
  if (!a.listen.empty()) {
    const auto [host, port] = parse_listen(a.listen);
    try {
      server = std::make_unique<protocol::DeviceServer>(device, device_mutex, host, static_cast<std::uint16_t>(port));
    } catch (const Error& e) {
      throw FailureError(e.what());
    }
    out << "listening on " << host << ":" << server->port() << std::endl;
  }

  json log = json::array();
  for (std::size_t i = 0; i < script["events"].size(); ++i) {
    const json& ev = script["events"][i];
    const std::string where = "events[" + std::to_string(i) + "]";
    std::string name;
    try {
      name = ev.at("event").get<std::string>();
      if (name == "await_host") {
        if (!server) throw std::invalid_argument("await_host needs --listen");
        server->wait_for_requests(ev.value("requests", 1ull));
      } else {
        std::lock_guard lock(device_mutex);
        if (name == "plug_in") {
          device.plug_in();
        } else if (name == "unplug") {
          device.unplug();
        } else if (name == "advance") {
          device.advance(std::llround(ev.at("seconds").get<double>() * 1000.0));
        } else if (name == "set_environment") {
          ReceiverEnvironment env = device.environment();
          env.temperature_c = ev.value("temperature_c", env.temperature_c);
          env.battery_v = ev.value("battery_v", env.battery_v);
          device.set_environment(env);
        } else if (name == "configure") {
          DeploymentConfig cfg;
          cfg.start_ms = parse_iso8601_ms(ev.at("start").get<std::string>());
          cfg.end_ms = parse_iso8601_ms(ev.at("end").get<std::string>());
          cfg.interval_s = ev.value("interval_s", 3600u);
          cfg.host_time_ms = ev.contains("host_time") ? parse_iso8601_ms(ev["host_time"].get<std::string>())
                                                      : device.true_time_ms();
          device.configure(cfg);
        } else if (name == "shutdown") {
          device.shutdown_command();
        } else {
          throw std::invalid_argument("unknown event \"" + name + "\"");
        }
      }
    } catch (const RejectedTransition& e) {
      log.push_back({{"event", name}, {"error", e.what()}});
      continue;
    } catch (const std::exception& e) {
      throw UsageError(a.script + ": " + where + ": " + e.what());
    }
    std::lock_guard lock(device_mutex);
    log.push_back({{"event", name}, {"state", to_string(device.state())}, {"records", device.records().size()}});
  }
  if (server) server->stop();

  std::lock_guard lock(device_mutex);
  const json summary = {{"state", to_string(device.state())},
                        {"records", device.records().size()},
                        {"captures", device.captures()},
                        {"brownouts", device.brownouts()},
                        {"remaining_charge_nams", device.remaining_charge()},
                        {"firmware_version", device.firmware_version()},
                        {"events", log}};
  if (a.json) {
    out << summary.dump() << '\n';
  } else {
    for (const auto& e : log) {
      out << e["event"].get<std::string>() << ": "
          << (e.contains("error") ? e["error"].get<std::string>()
                                  : e["state"].get<std::string>() + ", " + std::to_string(e["records"].get<std::size_t>()) +
                                        " records")
          << '\n';
    }
    out << "final state " << to_string(device.state()) << ", " << device.records().size() << " records, "
        << device.brownouts() << " brownouts\n";
  }
  return kExitOk;
}

// ---- serve -----------------------------------------------------------------

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
  std::string store, nav, listen = "127.0.0.1:8080";
  std::size_t workers = 2;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  const auto [host, port] = parse_listen(a.listen);
  const std::string path = resolve_store(a.store, true);
  const EphemerisStore eph = load_nav(a.nav);
  Store store(path);
  ServiceConfig cfg;
  cfg.host = host;
  cfg.port = port;
  cfg.workers = a.workers;
  cfg.log = &err;
  Service service(store, eph, cfg);
  try {
    service.start();
  } catch (const Error& e) {
    throw FailureError(e.what());
  }
  out << "listening on " << host << ":" << service.port() << std::endl;
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  out << "stopped" << std::endl;
  return kExitOk;
}

// ---- fit-freq-model --------------------------------------------------------

struct FitArgs {
  std::string in, store, device;
  double t0 = 20.0;
  bool json = false;
};

std::vector<FrequencyObservation> parse_observations(const std::string& text) {
  std::vector<FrequencyObservation> obs;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    for (const auto& o : json::parse(text)) {
      obs.push_back({o.at("temperature_c").get<double>(), o.at("offset_hz").get<double>()});
    }
    return obs;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double t = 0, f = 0;
    if (!(ls >> t >> f)) {
      if (obs.empty() && n == 1) continue;  // header
      throw std::invalid_argument("line " + std::to_string(n) + ": expected temperature,offset");
    }
    obs.push_back({t, f});
  }
  return obs;
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  std::vector<FrequencyObservation> obs;
  try {
    obs = parse_observations(read_text(a.in));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(a.in + ": " + e.what());
  }
  if (obs.empty()) throw UsageError(a.in + ": no observations");
  std::optional<std::uint64_t> device;
  if (!a.device.empty()) {
    try {
      device = parse_device_id(a.device);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const FrequencyModel m = fit_frequency_model(obs, a.t0);
  if (device) {
    Store store(resolve_store(a.store, true));
    store.put_frequency_model(*device, m);
  }
  if (a.json) {
    out << json{{"offset_at_ref_hz", m.offset_at_ref_hz}, {"slope_hz_per_c", m.slope_hz_per_c}, {"t0_c", m.t0_c}}
               .dump()
        << '\n';
  } else {
    out << "offset at " << fixed(m.t0_c, 2) << " C: " << fixed(m.offset_at_ref_hz, 2) << " Hz, slope "
        << fixed(m.slope_hz_per_c, 4) << " Hz/C (" << obs.size() << " observations)\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Snapshot GPS simulation and processing"};
  app.name("snapper");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a deployment into a dataset file");
  simulate->add_option("--scenario", sim.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output .snpr dataset")->required();
  simulate->add_option("--truth", sim.truth, "Write ground truth JSON");
  simulate->add_option("--nav-out", sim.nav_out, "Write RINEX navigation data covering the deployment");
  simulate->add_option("--seed", sim.seed, "Override the scenario seed");
  simulate->add_flag("--json", sim.json);

  ProcessArgs proc;
  auto* process = app.add_subcommand("process", "Process a dataset into a track");
  process->add_option("--in", proc.in, "Input .snpr dataset")->required()->check(CLI::ExistingFile);
  process->add_option("--nav", proc.nav, "RINEX navigation file")->required()->check(CLI::ExistingFile);
  process->add_option("--out", proc.out, "Output track file (format from extension)");
  process->add_option("--format", proc.format, "csv, json, gpx or kml");
  process->add_option("--store", proc.store, "Store directory (default SNAPPER_STORE, else in memory)");
  process->add_option("--slope", proc.slope, "Front-end offset temperature slope, Hz/C");
  process->add_flag("--json", proc.json);

  AcquireArgs acq;
  auto* acquire_cmd = app.add_subcommand("acquire", "Acquire satellites in one snapshot");
  acquire_cmd->add_option("--in", acq.in, "Input .snpr dataset")->required()->check(CLI::ExistingFile);
  acquire_cmd->add_option("--index", acq.index, "Snapshot index");
  acquire_cmd->add_option("--prn", acq.prns, "PRNs to search (default 1-32)")->check(CLI::Range(1, 32));
  acquire_cmd->add_option("--doppler-center", acq.center, "Search centre, Hz");
  acquire_cmd->add_option("--doppler-span", acq.span, "Half width of the search, Hz");
  acquire_cmd->add_option("--doppler-step", acq.step, "Bin spacing, Hz");
  acquire_cmd->add_option("--threshold", acq.threshold, "Detection threshold on the peak metric");
  acquire_cmd->add_flag("--json", acq.json);

  SolveArgs sol;
  auto* solve = app.add_subcommand("solve", "Solve one snapshot of a dataset");
  solve->add_option("--in", sol.in, "Input .snpr dataset")->required()->check(CLI::ExistingFile);
  solve->add_option("--nav", sol.nav, "RINEX navigation file")->required()->check(CLI::ExistingFile);
  solve->add_option("--index", sol.index, "Snapshot index");
  solve->add_flag("--json", sol.json);

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export", "Export a processed track from the store");
  export_cmd->add_option("--store", exp.store, "Store directory (default SNAPPER_STORE)");
  export_cmd->add_option("--id", exp.id, "Dataset id")->required();
  export_cmd->add_option("--format", exp.format, "csv, json, gpx or kml");
  export_cmd->add_option("--out", exp.out, "Output file (default stdout)");

  EnergyArgs en;
  auto* energy = app.add_subcommand("energy", "Estimate deployment lifetime");
  energy->add_option("--battery-mah", en.battery_mah, "Battery capacity, mAh");
  energy->add_option("--interval", en.interval, "Seconds between snapshots");
  energy->add_option("--flash-mbit", en.flash_mbit, "Flash capacity, Mbit");
  energy->add_option("--sleep-ua", en.sleep_ua, "Sleep current, uA");
  energy->add_option("--capture-uah", en.capture_uah, "Charge per snapshot, uAh");
  energy->add_flag("--json", en.json);

  DeviceSimArgs dev;
  auto* device = app.add_subcommand("device-sim", "Run a scripted receiver simulation");
  device->add_option("--script", dev.script, "Event script JSON")->required()->check(CLI::ExistingFile);
  device->add_option("--listen", dev.listen, "Serve the host protocol on HOST:PORT");
  device->add_option("--seed", dev.seed, "Seed for simulated captures");
  device->add_flag("--json", dev.json);

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP processing service");
  serve->add_option("--store", srv.store, "Store directory (default SNAPPER_STORE)");
  serve->add_option("--nav", srv.nav, "RINEX navigation file")->required()->check(CLI::ExistingFile);
  serve->add_option("--listen", srv.listen, "HOST:PORT");
  serve->add_option("--workers", srv.workers, "Processing workers")->check(CLI::Range(1, 64));

  FitArgs fit;
  auto* fitcmd = app.add_subcommand("fit-freq-model", "Fit a temperature model to front-end offsets");
  fitcmd->add_option("--in", fit.in, "CSV (temperature,offset) or JSON observations")->required()->check(CLI::ExistingFile);
  fitcmd->add_option("--t0", fit.t0, "Reference temperature, C");
  fitcmd->add_option("--device", fit.device, "Store the model for this device id");
  fitcmd->add_option("--store", fit.store, "Store directory (default SNAPPER_STORE)");
  fitcmd->add_flag("--json", fit.json);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim, out);
    if (process->parsed()) return cmd_process(proc, out, err);
    if (acquire_cmd->parsed()) return cmd_acquire(acq, out);
    if (solve->parsed()) return cmd_solve(sol, out);
    if (export_cmd->parsed()) return cmd_export(exp, out);
    if (energy->parsed()) return cmd_energy(en, out);
    if (device->parsed()) return cmd_device_sim(dev, out);
    if (serve->parsed()) return cmd_serve(srv, out, err);
    if (fitcmd->parsed()) return cmd_fit(fit, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace snapper
