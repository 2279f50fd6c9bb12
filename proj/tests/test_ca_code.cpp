#include <gtest/gtest.h>

#include <array>
#include <set>

#include "snapper/ca_code.hpp"

using namespace snapper;

namespace {

// Independent Gold-code generator: G2 output delayed by the ICD delay table.
const std::array<int, 32> kG2Delay = {5,   6,   7,   8,   17,  18,  139, 140, 141, 251, 252, 254, 255, 256, 257, 258,
                                      469, 470, 471, 472, 473, 474, 509, 512, 513, 514, 515, 516, 859, 860, 861, 862};

std::array<int, 1023> oracle_bits(int prn) {
  std::array<int, 1023> g1{}, g2{};
  std::array<int, 10> r1, r2;
  r1.fill(1);
  r2.fill(1);
  for (int i = 0; i < 1023; ++i) {
    g1[i] = r1[9];
    g2[i] = r2[9];
    const int f1 = r1[2] ^ r1[9];
    const int f2 = r2[1] ^ r2[2] ^ r2[5] ^ r2[7] ^ r2[8] ^ r2[9];
    for (int k = 9; k > 0; --k) {
      r1[k] = r1[k - 1];
      r2[k] = r2[k - 1];
    }
    r1[0] = f1;
    r2[0] = f2;
  }
  std::array<int, 1023> out{};
  const int d = kG2Delay[prn - 1];
  for (int i = 0; i < 1023; ++i) out[i] = g1[i] ^ g2[(i - d + 1023) % 1023];
  return out;
}

int circular_correlation(const CaCode& a, const CaCode& b, int lag) {
  int sum = 0;
  for (int i = 0; i < 1023; ++i) sum += a.chips[i] * b.chips[(i + lag) % 1023];
  return sum;
}

// First ten chips in octal, from the ICD table.
const std::array<int, 32> kFirstTenOctal = {01440, 01620, 01710, 01744, 01133, 01455, 01131, 01454,
                                            01626, 01504, 01642, 01750, 01764, 01772, 01775, 01776,
                                            01156, 01467, 01633, 01715, 01746, 01763, 01063, 01706,
                                            01743, 01761, 01770, 01774, 01127, 01453, 01625, 01712};

}  // namespace

TEST(CaCode, MatchesIndependentGenerator) {
  for (int prn = 1; prn <= 32; ++prn) {
    const auto code = generate_ca_code(prn);
    const auto ref = oracle_bits(prn);
    EXPECT_EQ(code.prn, prn);
    for (int i = 0; i < 1023; ++i) ASSERT_EQ(code.chips[i], ref[i] ? -1 : 1) << "prn " << prn << " chip " << i;
  }
}

TEST(CaCode, FirstTenChipsMatchPublishedTable) {
  for (int prn = 1; prn <= 32; ++prn) {
    const auto code = generate_ca_code(prn);
    int v = 0;
    for (int i = 0; i < 10; ++i) v = (v << 1) | (code.chips[i] == -1 ? 1 : 0);
    EXPECT_EQ(v, kFirstTenOctal[prn - 1]) << "prn " << prn;
  }
}

TEST(CaCode, OutOfRangeThrows) {
  EXPECT_THROW(generate_ca_code(0), std::out_of_range);
  EXPECT_THROW(generate_ca_code(33), std::out_of_range);
}

TEST(CaCode, AutocorrelationPeakAndSidelobes) {
  for (int prn = 1; prn <= 32; ++prn) {
    const auto c = generate_ca_code(prn);
    EXPECT_EQ(circular_correlation(c, c, 0), 1023);
    for (int lag = 1; lag < 1023; ++lag) {
      const int r = circular_correlation(c, c, lag);
      ASSERT_TRUE(r == -65 || r == -1 || r == 63) << "prn " << prn << " lag " << lag << " r " << r;
    }
  }
}

TEST(CaCode, CrossCorrelationThreeValued) {
  const std::array<std::pair<int, int>, 5> pairs = {{{1, 2}, {3, 17}, {7, 31}, {12, 25}, {20, 32}}};
  for (auto [a, b] : pairs) {
    const auto ca = generate_ca_code(a);
    const auto cb = generate_ca_code(b);
    for (int lag = 0; lag < 1023; ++lag) {
      const int r = circular_correlation(ca, cb, lag);
      ASSERT_TRUE(r == -65 || r == -1 || r == 63) << a << "/" << b << " lag " << lag;
    }
  }
}

TEST(CaCode, AllCodesDistinctUnderRotation) {
  std::vector<CaCode> codes;
  for (int prn = 1; prn <= 32; ++prn) codes.push_back(generate_ca_code(prn));
  for (int a = 0; a < 32; ++a) {
    for (int b = a + 1; b < 32; ++b) {
      for (int lag = 0; lag < 1023; ++lag) {
        ASSERT_LT(circular_correlation(codes[a], codes[b], lag), 1023);
      }
    }
  }
}

TEST(SampleReplica, ZeroPhaseIsRealAndStartsAtChipZero) {
  const auto code = generate_ca_code(5);
  const auto r = sample_replica(5, 0.0, 0.0, 4092);
  for (std::size_t k = 0; k < r.size(); ++k) {
    ASSERT_EQ(r[k].imag(), 0.0);
    ASSERT_EQ(r[k].real(), code.chips[k / 4]);
  }
}

TEST(SampleReplica, PhaseWrapsModulo4092) {
  const auto code = generate_ca_code(9);
  const auto r = sample_replica(9, 4092.0 - 2.0, 0.0, 16);
  EXPECT_EQ(r[0].real(), code.chips[1022]);
  EXPECT_EQ(r[1].real(), code.chips[1022]);
  EXPECT_EQ(r[2].real(), code.chips[0]);
  EXPECT_EQ(r[6].real(), code.chips[1]);
}

TEST(SampleReplica, PeriodicOverMilliseconds) {
  const auto r = sample_replica(3, 17.0, 0.0, 3 * 4092);
  for (std::size_t k = 0; k < 4092; ++k) {
    ASSERT_EQ(r[k], r[k + 4092]);
    ASSERT_EQ(r[k], r[k + 8184]);
  }
}

TEST(SampleReplica, SelfCorrelationEqualsLength) {
  const std::size_t n = 49'104;
  const auto r = sample_replica(11, 123.0, 2500.0, n);
  std::complex<double> acc = 0;
  for (const auto& v : r) acc += v * std::conj(v);
  EXPECT_NEAR(std::abs(acc), static_cast<double>(n), 1e-6);
}

TEST(SampleReplica, CarrierRotation) {
  const double f = 1000.0;
  const auto r = sample_replica(1, 0.0, f, 100);
  const auto base = sample_replica(1, 0.0, 0.0, 100);
  for (std::size_t k = 0; k < 100; ++k) {
    const double ph = 2.0 * M_PI * f * static_cast<double>(k) / SignalConstants::kSampleRateHz;
    EXPECT_NEAR(r[k].real(), base[k].real() * std::cos(ph), 1e-12);
    EXPECT_NEAR(r[k].imag(), base[k].real() * std::sin(ph), 1e-12);
  }
}

TEST(SampleReplica, PreconditionsEnforced) {
  EXPECT_THROW(sample_replica(1, 0.0, 0.0, 49'105), std::invalid_argument);
  EXPECT_THROW(sample_replica(1, 4092.0, 0.0, 10), std::invalid_argument);
  EXPECT_THROW(sample_replica(1, -0.5, 0.0, 10), std::invalid_argument);
  EXPECT_THROW(sample_replica(0, 0.0, 0.0, 10), std::out_of_range);
}
