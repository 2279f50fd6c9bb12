// Monte Carlo calibration of the acquisition detection threshold on pure noise.
#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "snapper/acquisition.hpp"
#include "snapper/signal_sim.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Calibrate the acquisition detection threshold"};
  std::size_t trials = 10'000;
  double target = 1e-3;
  double margin = 0.05;
  std::uint64_t seed = 7'000'000;
  std::string out;
  app.add_option("--trials", trials, "Per-PRN noise trials")->check(CLI::PositiveNumber);
  app.add_option("--target", target, "Target false-alarm rate");
  app.add_option("--margin", margin, "Added to the empirical quantile, then rounded up to 0.05");
  app.add_option("--seed", seed, "First noise seed");
  app.add_option("--out", out, "Write the result as JSON");
  CLI11_PARSE(app, argc, argv);

  using namespace snapper;
  std::vector<int> prns(32);
  std::iota(prns.begin(), prns.end(), 1);
  AcquisitionSettings settings;  // default 25-bin search
  ReplicaCache cache;
  cache.precompute(prns);

  std::vector<double> metrics;
  metrics.reserve(trials);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t s = seed; metrics.size() < trials; ++s) {
    Scenario sc;
    sc.noise_seed = s;
    const auto snap = synthesize_snapshot(sc);
    const std::size_t take = std::min<std::size_t>(prns.size(), trials - metrics.size());
    for (const auto& r : acquire(snap.snapshot, std::span(prns.data(), take), settings, &cache)) {
      metrics.push_back(r.peak_metric);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<double> sorted = metrics;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const auto i = std::min(sorted.size() - 1, static_cast<std::size_t>(std::floor(q * (sorted.size() - 1))));
    return sorted[i];
  };
  const double q = quantile(1.0 - target);
  const double threshold = std::ceil((q + margin) / 0.05) * 0.05;
  const auto above = std::count_if(metrics.begin(), metrics.end(), [&](double m) { return m >= threshold; });
  const double mean = std::accumulate(metrics.begin(), metrics.end(), 0.0) / static_cast<double>(metrics.size());

  const nlohmann::json result = {
      {"trials", metrics.size()},
      {"target_false_alarm_rate", target},
      {"mean_metric", mean},
      {"quantile_metric", q},
      {"max_metric", sorted.back()},
      {"threshold", threshold},
      {"false_alarms_at_threshold", above},
      {"false_alarm_rate", static_cast<double>(above) / static_cast<double>(metrics.size())},
      {"doppler_span_hz", settings.doppler_span_hz},
      {"doppler_step_hz", settings.doppler_step_hz},
      {"noncoherent_blocks", settings.noncoherent_blocks},
      {"first_seed", seed},
      {"seconds", secs}};
  std::cout << result.dump(2) << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    f << result.dump(2) << '\n';
  }
  return 0;
}
