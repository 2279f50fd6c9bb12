#include "snapper/ca_code.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace snapper {
namespace {

// G2 phase-selector taps (1-based stage numbers) per PRN.
constexpr std::array<std::array<int, 2>, 32> kG2Taps = {{
    {2, 6}, {3, 7}, {4, 8}, {5, 9}, {1, 9}, {2, 10}, {1, 8}, {2, 9},  {3, 10}, {2, 3}, {3, 4},
    {5, 6}, {6, 7}, {7, 8}, {8, 9}, {9, 10}, {1, 4}, {2, 5}, {3, 6}, {4, 7},  {5, 8}, {6, 9},
    {1, 3}, {4, 6}, {5, 7}, {6, 8}, {7, 9},  {8, 10}, {1, 6}, {2, 7}, {3, 8}, {4, 9},
}};

}  // namespace

CaCode generate_ca_code(int prn) {
  if (prn < kMinPrn || prn > kMaxPrn) throw std::out_of_range("PRN " + std::to_string(prn) + " outside 1..32");
  std::array<std::uint8_t, 10> g1;
  std::array<std::uint8_t, 10> g2;
  g1.fill(1);
  g2.fill(1);
  const auto [t1, t2] = kG2Taps[static_cast<std::size_t>(prn - 1)];

  CaCode code;
  code.prn = prn;
  for (std::size_t i = 0; i < SignalConstants::kCodeLength; ++i) {
    const std::uint8_t g2_out = g2[static_cast<std::size_t>(t1 - 1)] ^ g2[static_cast<std::size_t>(t2 - 1)];
    const std::uint8_t chip = g1[9] ^ g2_out;
    code.chips[i] = chip ? -1 : 1;

    const std::uint8_t f1 = g1[2] ^ g1[9];
    const std::uint8_t f2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
    for (std::size_t s = 9; s > 0; --s) {
      g1[s] = g1[s - 1];
      g2[s] = g2[s - 1];
    }
    g1[0] = f1;
    g2[0] = f2;
  }
  return code;
}

std::vector<std::complex<double>> sample_replica(int prn, double code_phase, double f_resid_hz, std::size_t n) {
  constexpr auto kPeriod = static_cast<double>(SignalConstants::kSamplesPerMs);
  if (n > SignalConstants::kSamplesPerSnapshot) throw std::invalid_argument("replica longer than a snapshot");
  if (!(code_phase >= 0.0 && code_phase < kPeriod)) throw std::invalid_argument("code phase outside [0, 4092)");

  const CaCode code = generate_ca_code(prn);
  std::vector<std::complex<double>> out(n);
  const double w = 2.0 * std::numbers::pi * f_resid_hz / SignalConstants::kSampleRateHz;
  for (std::size_t k = 0; k < n; ++k) {
    const double pos = std::fmod(static_cast<double>(k) + code_phase, kPeriod);
    const auto chip = static_cast<std::size_t>(pos / SignalConstants::kSamplesPerChip);
    const double phase = w * static_cast<double>(k);
    out[k] = static_cast<double>(code.chips[chip]) * std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return out;
}

}  // namespace snapper
