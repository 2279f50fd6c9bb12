#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include "snapper/constants.hpp"

namespace snapper {

struct CaCode {
  int prn = 0;
  std::array<std::int8_t, SignalConstants::kCodeLength> chips{};  // +1 / -1
};

inline constexpr int kMinPrn = 1;
inline constexpr int kMaxPrn = 32;

// GPS C/A Gold code: G1 (taps 3,10) XOR two PRN-selected G2 stages (taps
// 2,3,6,8,9,10), both registers all-ones at start; chip 0 -> +1, 1 -> -1.
// Throws std::out_of_range for prn outside 1..32.
CaCode generate_ca_code(int prn);

// Sampled replica at fs: sample k uses chip floor(((k + code_phase) mod 4092) / 4)
// and is rotated by exp(+j 2 pi f_resid k / fs). Requires n <= 49104 and
// code_phase in [0, 4092); throws std::invalid_argument otherwise.
std::vector<std::complex<double>> sample_replica(int prn, double code_phase, double f_resid_hz, std::size_t n);

}  // namespace snapper
