#include "mfseg/bench.hpp"

#include <sys/utsname.h>

#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "mfseg/error.hpp"
#include "mfseg/kernels.hpp"

namespace mfseg {

using nlohmann::ordered_json;

BenchData bench_data(std::size_t samples, double point_fraction, std::uint64_t seed) {
  BenchData d{{}, {}, DomainExtent({0, 0, 0, 0}, {10, 10, 10, 10})};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const auto n_points = static_cast<std::size_t>(std::llround(static_cast<double>(samples) * point_fraction));
  d.points.reserve(n_points);
  d.fields.reserve(samples - n_points);
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng), t = u(rng);
    const double v = 0.5 + 0.25 * std::sin(x) * std::cos(y) + 0.2 * std::sin(0.5 * z + 0.3 * t) + noise(rng);
    (i < n_points ? d.points : d.fields).push(x, y, z, t, v);
  }
  return d;
}

BenchData bench_data(const Dataset& data, bool normalize) {
  BenchData d{data.points.cols, data.field_columns, data.extent};
  normalize_variables(&d.points, &d.fields, normalize, nullptr);
  return d;
}

double time_iteration(const BenchData& data, const ClusterParams& params, const EngineOptions& options, int repeats,
                      std::vector<double>* runs) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, repeats); ++r) {
    Engine engine(data.points, data.fields, data.extent, params, options);
    engine.initialize();
    const auto t0 = std::chrono::steady_clock::now();
    engine.step(true);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (runs) runs->push_back(s);
    best = std::min(best, s);
  }
  return best;
}

BenchReport run_bench(const BenchConfig& config) {
  if (config.sample_counts.empty() || config.ks.empty()) throw ParameterError("bench needs sample counts and k values");
  BenchReport report;
  report.machine = machine_info(config.options);
  for (std::size_t n : config.sample_counts) {
    const BenchData data = bench_data(n, config.point_fraction, config.seed);
    for (const auto& k : config.ks) {
      ClusterParams p = config.params;
      p.k = k;
      p.validate(!data.points.empty(), !data.fields.empty());
      BenchRow row;
      row.samples = n;
      row.k = k;
      row.seconds = time_iteration(data, p, config.options, config.repeats, &row.runs);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

ordered_json machine_info(const EngineOptions& options) {
  ordered_json m;
  utsname u{};
  if (uname(&u) == 0) {
    m["system"] = std::string(u.sysname) + " " + u.release;
    m["arch"] = u.machine;
  }
  m["hardware_threads"] = std::thread::hardware_concurrency();
  m["workers"] = options.workers;
  m["chunk_size"] = options.chunk_size;
  m["kernel"] = std::string(kernels::select(options.isa).name);
#if defined(__clang__)
  m["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  m["compiler"] = std::string("gcc ") + __VERSION__;
#endif
#ifdef NDEBUG
  m["optimized"] = true;
#else
  m["optimized"] = false;
#endif
  return m;
}

ordered_json bench_json(const BenchReport& report, const BenchConfig& config) {
  ordered_json j;
  j["machine"] = report.machine;
  j["repeats"] = config.repeats;
  j["point_fraction"] = config.point_fraction;
  j["seed"] = config.seed;
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"samples", r.samples},
                    {"k", r.k},
                    {"clusters", r.k[0] * r.k[1] * r.k[2] * r.k[3]},
                    {"seconds", r.seconds},
                    {"runs", r.runs}});
  }
  j["rows"] = std::move(rows);
  return j;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  LinearFit f;
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxx > 0 ? sxy / sxx : 0;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
  }
  f.r2 = syy > 0 ? 1 - ss_res / syy : 1;
  return f;
}

}  // namespace mfseg
