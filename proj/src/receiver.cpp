#include "snapper/receiver.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "snapper/random.hpp"

namespace snapper {
namespace {

constexpr double kNanoAmpPerAmp = 1e9;
constexpr double kMsPerHour = 3.6e6;

std::int64_t charge_nams(double amp_hours) { return std::llround(amp_hours * kNanoAmpPerAmp * kMsPerHour); }

}  // namespace

const char* to_string(ReceiverState s) {
  switch (s) {
    case ReceiverState::ConnectedUnconfigured:
      return "connected_unconfigured";
    case ReceiverState::ConnectedConfigured:
      return "connected_configured";
    case ReceiverState::Capture:
      return "capture";
    case ReceiverState::Sleep:
      return "sleep";
    case ReceiverState::Shutdown:
      return "shutdown";
  }
  return "?";
}

const char* to_string(ReceiverEvent e) {
  switch (e) {
    case ReceiverEvent::PlugIn:
      return "plug_in";
    case ReceiverEvent::Unplug:
      return "unplug";
    case ReceiverEvent::Configure:
      return "configure";
    case ReceiverEvent::ShutdownCmd:
      return "shutdown_cmd";
    case ReceiverEvent::CounterInterrupt:
      return "counter_interrupt";
    case ReceiverEvent::CaptureDone:
      return "capture_done";
    case ReceiverEvent::EndOrFull:
      return "end_or_full";
  }
  return "?";
}

RejectedTransition::RejectedTransition(ReceiverState s, ReceiverEvent e)
    : Error(std::string("rejected transition: ") + to_string(e) + " in state " + to_string(s)), state_(s), event_(e) {}

std::optional<ReceiverState> transition(ReceiverState s, ReceiverEvent e, bool capture_due) {
  using S = ReceiverState;
  using E = ReceiverEvent;
  switch (s) {
    case S::ConnectedUnconfigured:
      if (e == E::Configure) return S::ConnectedConfigured;
      if (e == E::Unplug) return S::Shutdown;
      break;
    case S::ConnectedConfigured:
      if (e == E::ShutdownCmd) return S::ConnectedUnconfigured;
      if (e == E::Unplug) return capture_due ? S::Capture : S::Sleep;
      break;
    case S::Sleep:
      if (e == E::PlugIn) return S::ConnectedUnconfigured;
      if (e == E::CounterInterrupt) return S::Capture;
      break;
    case S::Capture:
      if (e == E::CaptureDone) return S::Sleep;
      if (e == E::EndOrFull) return S::Shutdown;
      break;
    case S::Shutdown:
      if (e == E::PlugIn) return S::ConnectedUnconfigured;
      break;
  }
  return std::nullopt;
}

ReceiverState step(ReceiverState s, ReceiverEvent e, bool capture_due) {
  const auto next = transition(s, e, capture_due);
  if (!next) throw RejectedTransition(s, e);
  return *next;
}

void DeploymentConfig::validate() const {
  if (!(start_ms < end_ms)) throw std::invalid_argument("deployment start must precede its end");
  if (interval_s < 1) throw std::invalid_argument("interval must be at least 1 s");
}

void EnergyModel::validate() const {
  if (sleep_current_a < 1e-6 || sleep_current_a > 2e-6) throw std::invalid_argument("sleep current outside 1-2 uA");
  if (capture_charge_ah <= 0.0 || capture_charge_ah > kMaxCaptureChargeAh) {
    throw std::invalid_argument("capture charge must be positive and at most 0.3 uAh");
  }
  if (shutoff_current_a < 0.0 || battery_capacity_ah <= 0.0) throw std::invalid_argument("invalid energy model");
}

Lifetime estimate_lifetime(double interval_s, const EnergyModel& energy, const FlashLayout& flash) {
  const bool captures = std::isfinite(interval_s) && interval_s > 0.0;
  const double mean_current = energy.sleep_current_a + (captures ? energy.capture_charge_ah * 3600.0 / interval_s : 0.0);
  Lifetime l;
  l.energy_days = energy.battery_capacity_ah / mean_current / 24.0;
  l.memory_days = captures ? static_cast<double>(flash.max_records()) * interval_s / 86'400.0
                           : std::numeric_limits<double>::infinity();
  l.days = std::min(l.energy_days, l.memory_days);
  l.limiting_factor = l.memory_days < l.energy_days ? "memory" : "energy";
  return l;
}

SimulatedReceiver::SimulatedReceiver(ReceiverOptions options)
    : options_(options),
      true_ms_(options.true_time_ms),
      sync_true_ms_(options.true_time_ms),
      sync_device_ms_(options.device_clock_ms),
      initial_charge_(charge_nams(options.energy.battery_capacity_ah)),
      sleep_current_na_(std::llround(options.energy.sleep_current_a * kNanoAmpPerAmp)),
      shutoff_current_na_(std::llround(options.energy.shutoff_current_a * kNanoAmpPerAmp)),
      capture_charge_(charge_nams(options.energy.capture_charge_ah)),
      firmware_version_(options.firmware_version) {
  options_.energy.validate();
}

std::int64_t SimulatedReceiver::device_clock_ms() const {
  const double elapsed = static_cast<double>(true_ms_ - sync_true_ms_);
  return sync_device_ms_ + std::llround(elapsed * (1.0 + options_.rtc_drift));
}

std::int64_t SimulatedReceiver::to_true_ms(std::int64_t device_ms) const {
  const double elapsed = static_cast<double>(device_ms - sync_device_ms_) / (1.0 + options_.rtc_drift);
  return sync_true_ms_ + static_cast<std::int64_t>(std::ceil(elapsed));
}

void SimulatedReceiver::apply(ReceiverEvent e, bool capture_due) {
  state_ = step(state_, e, capture_due);
  if (state_ == ReceiverState::ConnectedUnconfigured) config_.reset();
}

void SimulatedReceiver::plug_in() { apply(ReceiverEvent::PlugIn); }

void SimulatedReceiver::configure(const DeploymentConfig& cfg) {
  cfg.validate();
  if (!transition(state_, ReceiverEvent::Configure)) throw RejectedTransition(state_, ReceiverEvent::Configure);
  sync_true_ms_ = true_ms_;
  sync_device_ms_ = cfg.host_time_ms;
  apply(ReceiverEvent::Configure);
  config_ = cfg;
  next_index_ = 0;
}

void SimulatedReceiver::shutdown_command() { apply(ReceiverEvent::ShutdownCmd); }

void SimulatedReceiver::unplug() {
  bool due = false;
  if (state_ == ReceiverState::ConnectedConfigured) {
    const std::int64_t now = device_clock_ms();
    due = config_->start_ms <= now && now <= config_->end_ms;
    const std::int64_t interval_ms = static_cast<std::int64_t>(config_->interval_s) * 1000;
    next_index_ = now <= config_->start_ms
                      ? 0
                      : static_cast<std::uint64_t>((now - config_->start_ms + interval_ms - 1) / interval_ms);
  }
  apply(ReceiverEvent::Unplug, due);
  if (state_ == ReceiverState::Capture) run_capture();
}

std::optional<std::int64_t> SimulatedReceiver::next_capture_true_ms() const {
  if (!config_) return std::nullopt;
  const std::int64_t device_ms =
      config_->start_ms + static_cast<std::int64_t>(next_index_) * static_cast<std::int64_t>(config_->interval_s) * 1000;
  if (device_ms > config_->end_ms) return std::nullopt;
  return std::max(true_ms_, to_true_ms(device_ms));
}

void SimulatedReceiver::drain(std::int64_t ms) {
  if (state_ == ReceiverState::Sleep) sleep_drain_ += sleep_current_na_ * ms;
  if (state_ == ReceiverState::Shutdown) shutoff_drain_ += shutoff_current_na_ * ms;
  true_ms_ += ms;
}

void SimulatedReceiver::advance(std::int64_t ms) {
  if (ms < 0) throw std::invalid_argument("time cannot run backwards");
  const std::int64_t target = true_ms_ + ms;
  while (true_ms_ < target) {
    if (state_ == ReceiverState::Sleep) {
      const auto next = next_capture_true_ms();
      if (next && *next <= target) {
        drain(*next - true_ms_);
        apply(ReceiverEvent::CounterInterrupt);
        run_capture();
        continue;
      }
    }
    drain(target - true_ms_);
  }
}

void SimulatedReceiver::run_capture() {
  last_log_.clear();
  const auto log = [&](std::string_view s) { last_log_.emplace_back(s); };
  const auto finish = [&] {
    const bool full = records_.size() >= max_records();
    const bool ended = !next_capture_true_ms().has_value();
    apply(full || ended ? ReceiverEvent::EndOrFull : ReceiverEvent::CaptureDone);
  };
  if (records_.size() >= max_records()) {
    apply(ReceiverEvent::EndOrFull);
    return;
  }

  log(kCaptureSteps[0]);
  const double temperature = env_.temperature_c;
  log(kCaptureSteps[1]);
  const double battery = env_.battery_v;
  if (battery < 3.0) {
    log(kBrownoutStep);
    ++brownouts_;
    ++next_index_;
    if (observer_) observer_(last_log_);
    finish();
    return;
  }
  log(kCaptureSteps[2]);
  hf_on_ = true;
  log(kCaptureSteps[3]);
  log(kCaptureSteps[4]);
  log(kCaptureSteps[5]);
  log(kCaptureSteps[6]);
  const auto timestamp = static_cast<std::uint64_t>(device_clock_ms());
  log(kCaptureSteps[7]);
  std::vector<std::int8_t> samples;
  if (source_) {
    samples = source_(true_ms_);
  } else {
    Rng rng(derive_seed(options_.seed, captures_));
    samples.resize(SignalConstants::kSamplesPerSnapshot);
    for (std::size_t i = 0; i < samples.size(); i += 64) {
      const std::uint64_t bits = rng.next();
      for (std::size_t b = 0; b < 64 && i + b < samples.size(); ++b) samples[i + b] = (bits >> b) & 1u ? 1 : -1;
    }
  }
  log(kCaptureSteps[8]);
  log(kCaptureSteps[9]);
  hf_on_ = false;
  log(kCaptureSteps[10]);
  log(kCaptureSteps[11]);
  records_.push_back(Snapshot::from_samples(timestamp, temperature, battery, samples));
  log(kCaptureSteps[12]);

  capture_drain_ += capture_charge_;
  ++captures_;
  ++next_index_;
  if (observer_) observer_(last_log_);
  finish();
}

bool SimulatedReceiver::reboot() {
  if (!staged_) return false;
  const auto& image = *staged_;
  if (image.size() >= 4) {
    firmware_version_ = static_cast<std::uint32_t>(image[0]) | static_cast<std::uint32_t>(image[1]) << 8 |
                        static_cast<std::uint32_t>(image[2]) << 16 | static_cast<std::uint32_t>(image[3]) << 24;
  }
  staged_.reset();
  return true;
}

}  // namespace snapper
