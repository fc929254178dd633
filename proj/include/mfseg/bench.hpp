#pragma once

// Single-iteration timing sweeps over sample count and cluster count.

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "mfseg/engine.hpp"
#include "mfseg/ingest.hpp"
#include "mfseg/model.hpp"

namespace mfseg {

struct BenchData {
  SampleColumns points;
  SampleColumns fields;
  DomainExtent extent;
};

/// `samples` uniformly scattered samples in [0,10]^4, a `point_fraction`
/// share of them point samples, values from a smooth pattern plus noise.
BenchData bench_data(std::size_t samples, double point_fraction, std::uint64_t seed);
/// Engine-ready (optionally normalized) columns of a loaded dataset.
BenchData bench_data(const Dataset& data, bool normalize);

/// Minimum over `repeats` of the wall time of one update + reassignment step,
/// each on a freshly initialized engine. Every timing goes to `runs`.
double time_iteration(const BenchData& data, const ClusterParams& params, const EngineOptions& options, int repeats,
                      std::vector<double>* runs = nullptr);

struct BenchConfig {
  std::vector<std::size_t> sample_counts{100000, 200000, 400000, 800000};
  std::vector<Counts4> ks{{4, 4, 4, 4}};
  int repeats = 3;
  double point_fraction = 0.5;
  std::uint64_t seed = 42;
  ClusterParams params;
  EngineOptions options;
};

struct BenchRow {
  std::size_t samples = 0;
  Counts4 k{};
  double seconds = 0;
  std::vector<double> runs;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  nlohmann::ordered_json machine;
};

/// One row per (sample count, k) pair, sample counts outermost.
BenchReport run_bench(const BenchConfig& config);
nlohmann::ordered_json bench_json(const BenchReport& report, const BenchConfig& config);
/// Host, compiler and kernel description.
nlohmann::ordered_json machine_info(const EngineOptions& options);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

/// Ordinary least squares y = slope x + intercept.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace mfseg
