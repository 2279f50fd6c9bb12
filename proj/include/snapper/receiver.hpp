#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snapper/error.hpp"
#include "snapper/snapshot.hpp"

namespace snapper {

enum class ReceiverState { ConnectedUnconfigured, ConnectedConfigured, Capture, Sleep, Shutdown };
enum class ReceiverEvent { PlugIn, Unplug, Configure, ShutdownCmd, CounterInterrupt, CaptureDone, EndOrFull };

inline constexpr std::array<ReceiverState, 5> kAllStates = {
    ReceiverState::ConnectedUnconfigured, ReceiverState::ConnectedConfigured, ReceiverState::Capture,
    ReceiverState::Sleep, ReceiverState::Shutdown};
inline constexpr std::array<ReceiverEvent, 7> kAllEvents = {
    ReceiverEvent::PlugIn,           ReceiverEvent::Unplug,      ReceiverEvent::Configure, ReceiverEvent::ShutdownCmd,
    ReceiverEvent::CounterInterrupt, ReceiverEvent::CaptureDone, ReceiverEvent::EndOrFull};

const char* to_string(ReceiverState s);
const char* to_string(ReceiverEvent e);

class RejectedTransition : public Error {
 public:
  RejectedTransition(ReceiverState s, ReceiverEvent e);
  ReceiverState state() const { return state_; }
  ReceiverEvent event() const { return event_; }

 private:
  ReceiverState state_;
  ReceiverEvent event_;
};

// Target of (state, event), or nullopt when there is no such edge. Unplugging
// a configured receiver leads to capture when a snapshot is due, else sleep.
std::optional<ReceiverState> transition(ReceiverState s, ReceiverEvent e, bool capture_due = false);
// As transition(), throwing RejectedTransition for a missing edge.
ReceiverState step(ReceiverState s, ReceiverEvent e, bool capture_due = false);

struct DeploymentConfig {
  std::int64_t start_ms = 0;  // UTC ms
  std::int64_t end_ms = 0;
  std::uint32_t interval_s = 3600;
  std::int64_t host_time_ms = 0;  // clock value to sync the device to

  // Throws std::invalid_argument unless start < end and interval >= 1 s.
  void validate() const;
  friend bool operator==(const DeploymentConfig&, const DeploymentConfig&) = default;
};

struct EnergyModel {
  double sleep_current_a = 1.5e-6;      // board level, EM3
  double mcu_stop_current_a = 0.5e-6;   // MCU alone in EM3
  double shutoff_current_a = 2e-8;      // EM4
  double capture_peak_current_a = 2.5e-2;
  double capture_charge_ah = 3e-7;      // per snapshot
  double battery_capacity_ah = 0.04;

  static constexpr double kMaxCaptureChargeAh = 3e-7;
  // Throws std::invalid_argument when a value leaves its documented band.
  void validate() const;
};

struct FlashLayout {
  std::uint64_t capacity_bits = 536'870'912;
  std::uint32_t record_slot_bytes = 6'144;

  std::uint64_t max_records() const { return capacity_bits / 8 / record_slot_bytes; }
};

struct Lifetime {
  double energy_days = 0.0;
  double memory_days = 0.0;
  double days = 0.0;
  std::string limiting_factor;  // "energy" or "memory"
};

// Non-positive or infinite intervals mean "no captures".
Lifetime estimate_lifetime(double interval_s, const EnergyModel& energy = {}, const FlashLayout& flash = {});

inline constexpr std::array<std::string_view, 13> kCaptureSteps = {
    "measure temperature",
    "measure battery voltage",
    "power on radio & high-frequency oscillator",
    "wait for oscillator to stabilise",
    "check frequency of high-frequency oscillator",
    "switch to high-frequency clock domain",
    "get timestamp",
    "capture snapshot & write to RAM",
    "switch to low-frequency clock domain",
    "power off radio & high-frequency oscillator",
    "power on external flash memory",
    "write to external memory",
    "power off external memory",
};
inline constexpr std::string_view kBrownoutStep = "brownout: capture aborted";

struct ReceiverEnvironment {
  double temperature_c = 20.0;
  double battery_v = 3.9;
};

struct ReceiverOptions {
  EnergyModel energy;
  FlashLayout flash;
  std::uint64_t device_id = 0x5A5A000000000001ull;
  std::uint32_t firmware_version = 1;
  std::int64_t true_time_ms = 0;     // simulation start, UTC ms
  std::int64_t device_clock_ms = 0;  // device clock at simulation start
  double rtc_drift = 0.0;            // s/s
  std::uint64_t seed = 1;
};

// Firmware of one tag as a deterministic single-threaded state machine.
// Simulated time advances only through advance(); energy is tracked in
// integer nA*ms so the ledger is exact.
class SimulatedReceiver {
 public:
  // Produces the 49 104 samples of a capture taken at true UTC time t_ms.
  using SignalSource = std::function<std::vector<std::int8_t>(std::int64_t t_ms)>;
  using CaptureObserver = std::function<void(const std::vector<std::string>& log)>;

  explicit SimulatedReceiver(ReceiverOptions options = {});

  ReceiverState state() const { return state_; }
  void plug_in();
  void unplug();
  void configure(const DeploymentConfig& cfg);
  void shutdown_command();
  // Advances simulated time, firing counter interrupts and captures.
  void advance(std::int64_t ms);

  std::int64_t true_time_ms() const { return true_ms_; }
  std::int64_t device_clock_ms() const;
  const std::optional<DeploymentConfig>& config() const { return config_; }
  const std::vector<Snapshot>& records() const { return records_; }
  std::uint64_t max_records() const { return options_.flash.max_records(); }
  std::uint64_t device_id() const { return options_.device_id; }
  std::uint32_t firmware_version() const { return firmware_version_; }

  // Charge in nA*ms.
  std::int64_t initial_charge() const { return initial_charge_; }
  std::int64_t remaining_charge() const { return initial_charge_ - sleep_drain_ - shutoff_drain_ - capture_drain_; }
  std::int64_t sleep_drain() const { return sleep_drain_; }
  std::int64_t shutoff_drain() const { return shutoff_drain_; }
  std::int64_t capture_drain() const { return capture_drain_; }
  std::int64_t capture_charge() const { return capture_charge_; }
  std::uint64_t captures() const { return captures_; }
  std::uint64_t brownouts() const { return brownouts_; }

  bool hf_oscillator_on() const { return hf_on_; }
  const std::vector<std::string>& last_capture_log() const { return last_log_; }

  void set_environment(const ReceiverEnvironment& env) { env_ = env; }
  const ReceiverEnvironment& environment() const { return env_; }
  void set_signal_source(SignalSource source) { source_ = std::move(source); }
  void set_capture_observer(CaptureObserver observer) { observer_ = std::move(observer); }

  // Firmware image handling used by the host protocol.
  void stage_firmware(std::vector<std::uint8_t> image) { staged_ = std::move(image); }
  bool has_staged_firmware() const { return staged_.has_value(); }
  // Applies a staged image; returns false when nothing is staged.
  bool reboot();

 private:
  void apply(ReceiverEvent e, bool capture_due = false);
  std::optional<std::int64_t> next_capture_true_ms() const;
  std::int64_t to_true_ms(std::int64_t device_ms) const;
  void drain(std::int64_t ms);
  void run_capture();

  ReceiverOptions options_;
  ReceiverState state_ = ReceiverState::Shutdown;
  std::optional<DeploymentConfig> config_;
  std::int64_t true_ms_;
  // Device clock = sync_device + (true - sync_true) * (1 + drift).
  std::int64_t sync_true_ms_;
  std::int64_t sync_device_ms_;
  std::uint64_t next_index_ = 0;  // index of the next scheduled capture

  std::int64_t initial_charge_;
  std::int64_t sleep_current_na_;
  std::int64_t shutoff_current_na_;
  std::int64_t capture_charge_;
  std::int64_t sleep_drain_ = 0;
  std::int64_t shutoff_drain_ = 0;
  std::int64_t capture_drain_ = 0;
  std::uint64_t captures_ = 0;
  std::uint64_t brownouts_ = 0;

  bool hf_on_ = false;
  std::vector<Snapshot> records_;
  std::vector<std::string> last_log_;
  ReceiverEnvironment env_;
  SignalSource source_;
  CaptureObserver observer_;
  std::uint32_t firmware_version_;
  std::optional<std::vector<std::uint8_t>> staged_;
};

}  // namespace snapper
