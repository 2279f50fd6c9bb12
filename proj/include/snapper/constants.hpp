#pragma once

#include <cstddef>
#include <cstdint>

namespace snapper {

// Physical and front-end constants of the L1 C/A snapshot receiver.
struct SignalConstants {
  static constexpr double kL1Hz = 1'575'420'000.0;
  static constexpr double kTcxoHz = 16'368'000.0;
  static constexpr double kRtcHz = 32'768.0;
  static constexpr double kSampleRateHz = 4'092'000.0;
  static constexpr double kSnapshotSeconds = 0.012;
  static constexpr int kQuantizationBits = 1;
  static constexpr int kRadioOutputBits = 2;

  static constexpr double kChipRateHz = 1'023'000.0;
  static constexpr std::size_t kCodeLength = 1023;
  static constexpr std::size_t kSamplesPerChip = 4;
  static constexpr std::size_t kSamplesPerMs = kCodeLength * kSamplesPerChip;
  static constexpr std::size_t kSamplesPerSnapshot = 12 * kSamplesPerMs;
  static constexpr std::size_t kPayloadBytes = kSamplesPerSnapshot / 8;

  // Residual carrier frequency of a zero-Doppler satellite in the sampled
  // stream. fs/4 keeps the real-sampled image 2 MHz away from the signal.
  double if_residual_nominal_hz = kSampleRateHz / 4.0;
  double tcxo_tolerance_ppb = 500.0;
  double rtc_tolerance_ppm = 10.0;

  // Ratio by which a fractional TCXO error is scaled into a front-end offset.
  static constexpr double lo_amplification() { return kL1Hz / kTcxoHz; }

  // Memory saved by sampling 1-bit at fs instead of keeping the 2-bit radio
  // output at the TCXO rate.
  static constexpr double memory_reduction_factor() {
    return (kTcxoHz * kRadioOutputBits) / (kSampleRateHz * kQuantizationBits);
  }

  // Front-end frequency offset caused by a TCXO error given in ppb.
  static constexpr double frontend_offset_for_tcxo_error(double ppb) { return ppb * 1e-9 * kL1Hz; }
};

static_assert(SignalConstants::kSampleRateHz * 4.0 == SignalConstants::kTcxoHz);
static_assert(SignalConstants::kSamplesPerSnapshot == 49'104);
static_assert(SignalConstants::kPayloadBytes == 6'138);
static_assert(SignalConstants::kSampleRateHz / SignalConstants::kChipRateHz == 4.0);

namespace phys {
inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kEarthRotationRate = 7.2921151467e-5;
inline constexpr double kGravitationalParameter = 3.986005e14;
inline constexpr double kRelativisticF = -4.442807633e-10;
inline constexpr double kPi = 3.1415926535898;  // GPS ICD value of pi
inline constexpr double kWgs84A = 6'378'137.0;
inline constexpr double kWgs84F = 1.0 / 298.257223563;
// Distance light travels in one C/A code period.
inline constexpr double kMillisecondRange = kSpeedOfLight * 1e-3;
}  // namespace phys

}  // namespace snapper
