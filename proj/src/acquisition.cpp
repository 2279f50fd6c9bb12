#include "snapper/acquisition.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "snapper/ca_code.hpp"

namespace snapper {
namespace {

constexpr int kN = static_cast<int>(SignalConstants::kSamplesPerMs);
// Frequency spacing of FFT bins over a 1 ms block.
constexpr double kBinHz = 1000.0;

struct FftwDeleter {
  void operator()(fftwf_complex* p) const { fftwf_free(p); }
};
using Buffer = std::unique_ptr<fftwf_complex[], FftwDeleter>;

Buffer make_buffer(std::size_t n) {
  auto* p = static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * n));
  if (p == nullptr) throw std::bad_alloc();
  return Buffer(p);
}

struct Plans {
  fftwf_plan forward;
  fftwf_plan inverse;
};

// Plans are created once (planner calls are not thread-safe); executing a
// plan on other aligned arrays is.
const Plans& plans() {
  static const Plans p = [] {
    Buffer in = make_buffer(kN), out = make_buffer(kN);
    return Plans{fftwf_plan_dft_1d(kN, in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE),
                 fftwf_plan_dft_1d(kN, in.get(), out.get(), FFTW_BACKWARD, FFTW_ESTIMATE)};
  }();
  return p;
}

ReplicaCache::Spectrum replica_spectrum(int prn) {
  const auto replica = sample_replica(prn, 0.0, 0.0, static_cast<std::size_t>(kN));
  Buffer in = make_buffer(kN), out = make_buffer(kN);
  for (int k = 0; k < kN; ++k) {
    in[k][0] = static_cast<float>(replica[static_cast<std::size_t>(k)].real());
    in[k][1] = 0.0f;
  }
  fftwf_execute_dft(plans().forward, in.get(), out.get());
  ReplicaCache::Spectrum s(static_cast<std::size_t>(kN));
  for (int q = 0; q < kN; ++q) s[static_cast<std::size_t>(q)] = {out[q][0], -out[q][1]};
  return s;
}

// Block spectra of the signal mixed down by a sub-kHz residual frequency.
class SignalSpectra {
 public:
  SignalSpectra(std::span<const std::int8_t> samples, std::size_t blocks) : samples_(samples), blocks_(blocks) {}

  const Buffer& get(double residual_hz) {
    const auto key = static_cast<std::int64_t>(std::llround(residual_hz * 1e6));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const std::size_t total = blocks_ * static_cast<std::size_t>(kN);
    Buffer mixed = make_buffer(total), spectra = make_buffer(total);
    const double w = -2.0 * std::numbers::pi * residual_hz / SignalConstants::kSampleRateHz;
    for (std::size_t k = 0; k < total; ++k) {
      const double ph = w * static_cast<double>(k);
      const double s = samples_[k];
      mixed[k][0] = static_cast<float>(s * std::cos(ph));
      mixed[k][1] = static_cast<float>(s * std::sin(ph));
    }
    for (std::size_t b = 0; b < blocks_; ++b) {
      fftwf_execute_dft(plans().forward, mixed.get() + b * kN, spectra.get() + b * kN);
    }
    return cache_.emplace(key, std::move(spectra)).first->second;
  }

 private:
  std::span<const std::int8_t> samples_;
  std::size_t blocks_;
  std::map<std::int64_t, Buffer> cache_;
};

AcquisitionResult search_prn(int prn, const ReplicaCache::Spectrum& code, SignalSpectra& spectra,
                             const AcquisitionSettings& settings) {
  const auto bins = settings.doppler_bins(prn);
  const std::size_t nd = bins.size();
  const std::size_t blocks = settings.noncoherent_blocks;
  std::vector<float> surface(nd * kN, 0.0f);
  Buffer prod = make_buffer(kN), corr = make_buffer(kN);

  for (std::size_t d = 0; d < nd; ++d) {
    const double shift = std::floor(bins[d] / kBinHz);
    const double residual = bins[d] - shift * kBinHz;
    const int m = static_cast<int>(((static_cast<std::int64_t>(shift) % kN) + kN) % kN);
    const Buffer& x = spectra.get(residual);
    float* row = surface.data() + d * kN;
    for (std::size_t b = 0; b < blocks; ++b) {
      const fftwf_complex* xb = x.get() + b * kN;
      for (int q = 0; q < kN; ++q) {
        int src = q + m;
        if (src >= kN) src -= kN;
        const float xr = xb[src][0], xi = xb[src][1];
        const float cr = code[static_cast<std::size_t>(q)].real(), ci = code[static_cast<std::size_t>(q)].imag();
        prod[q][0] = xr * cr - xi * ci;
        prod[q][1] = xr * ci + xi * cr;
      }
      fftwf_execute_dft(plans().inverse, prod.get(), corr.get());
      for (int t = 0; t < kN; ++t) row[t] += std::sqrt(corr[t][0] * corr[t][0] + corr[t][1] * corr[t][1]);
    }
  }

  double sum = 0.0;
  float peak = -1.0f;
  std::size_t best_d = 0, best_t = 0;
  for (std::size_t d = 0; d < nd; ++d) {
    const float* row = surface.data() + d * kN;
    for (std::size_t t = 0; t < static_cast<std::size_t>(kN); ++t) {
      sum += row[t];
      if (row[t] > peak) {
        peak = row[t];
        best_d = d;
        best_t = t;
      }
    }
  }

  AcquisitionResult r;
  r.prn = prn;
  const double mean = sum / static_cast<double>(surface.size());
  r.peak_metric = mean > 0.0 ? std::max(1.0, static_cast<double>(peak) / mean) : 1.0;
  r.detected = r.peak_metric >= settings.threshold;

  const float* row = surface.data() + best_d * kN;
  const std::size_t tm = (best_t + kN - 1) % kN, tp = (best_t + 1) % kN;
  double phase = static_cast<double>(best_t) + parabolic_offset(row[tm], row[best_t], row[tp]);
  if (phase < 0.0) phase += kN;
  if (phase >= kN) phase -= kN;
  r.code_phase = phase;

  double doppler = bins[best_d];
  if (best_d > 0 && best_d + 1 < nd) {
    doppler += settings.doppler_step_hz * parabolic_offset(surface[(best_d - 1) * kN + best_t], row[best_t],
                                                           surface[(best_d + 1) * kN + best_t]);
  }
  r.doppler_hz = doppler;
  return r;
}

}  // namespace

void AcquisitionSettings::validate() const {
  if (!(doppler_step_hz > 0.0 && doppler_step_hz <= kBinHz)) {
    throw std::invalid_argument("Doppler step must be in (0, 1000] Hz");
  }
  if (!(doppler_span_hz >= 0.0)) throw std::invalid_argument("Doppler span must be non-negative");
  if (noncoherent_blocks < 1 || noncoherent_blocks > 12) {
    throw std::invalid_argument("noncoherent block count must be in 1..12");
  }
}

std::vector<double> AcquisitionSettings::doppler_bins(int prn) const {
  double center = doppler_center_hz.value_or(constants.if_residual_nominal_hz);
  if (auto it = prn_doppler_centers_hz.find(prn); it != prn_doppler_centers_hz.end()) center = it->second;
  const auto half = static_cast<int>(std::floor(doppler_span_hz / doppler_step_hz + 1e-9));
  std::vector<double> bins;
  bins.reserve(static_cast<std::size_t>(2 * half + 1));
  for (int i = -half; i <= half; ++i) bins.push_back(center + i * doppler_step_hz);
  return bins;
}

void ReplicaCache::precompute(std::span<const int> prns) {
  for (int prn : prns) get(prn);
}

const ReplicaCache::Spectrum& ReplicaCache::get(int prn) {
  if (prn < kMinPrn || prn > kMaxPrn) throw std::out_of_range("PRN out of range");
  std::lock_guard lock(mutex_);
  auto it = spectra_.find(prn);
  if (it == spectra_.end()) it = spectra_.emplace(prn, replica_spectrum(prn)).first;
  return it->second;
}

std::size_t ReplicaCache::size() const {
  std::lock_guard lock(mutex_);
  return spectra_.size();
}

bool ReplicaCache::contains(int prn) const {
  std::lock_guard lock(mutex_);
  return spectra_.count(prn) != 0;
}

double parabolic_offset(double y_minus, double y0, double y_plus) {
  const double denom = y_minus - 2.0 * y0 + y_plus;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (y_minus - y_plus) / denom, -0.5, 0.5);
}

std::vector<AcquisitionResult> acquire(std::span<const std::int8_t> samples, std::span<const int> prns,
                                       const AcquisitionSettings& settings, ReplicaCache* cache) {
  settings.validate();
  for (int prn : prns) {
    if (prn < kMinPrn || prn > kMaxPrn) throw std::out_of_range("PRN out of range");
  }
  const std::size_t needed = settings.noncoherent_blocks * static_cast<std::size_t>(kN);
  if (samples.size() < needed) throw std::invalid_argument("snapshot shorter than the integration time");

  // A constant window carries no signal; report every PRN as absent.
  const auto window = samples.first(needed);
  if (std::all_of(window.begin(), window.end(), [&](std::int8_t v) { return v == window.front(); })) {
    std::vector<AcquisitionResult> empty;
    for (int prn : prns) {
      AcquisitionResult r;
      r.prn = prn;
      r.doppler_hz = settings.doppler_bins(prn)[settings.doppler_bins(prn).size() / 2];
      empty.push_back(r);
    }
    return empty;
  }

  ReplicaCache local;
  ReplicaCache& codes = cache != nullptr ? *cache : local;
  SignalSpectra spectra(samples, settings.noncoherent_blocks);
  std::vector<AcquisitionResult> results;
  results.reserve(prns.size());
  for (int prn : prns) results.push_back(search_prn(prn, codes.get(prn), spectra, settings));
  return results;
}

std::vector<AcquisitionResult> acquire(const Snapshot& snapshot, std::span<const int> prns,
                                       const AcquisitionSettings& settings, ReplicaCache* cache) {
  const auto samples = snapshot.samples();
  return acquire(samples, prns, settings, cache);
}

}  // namespace snapper
