// Acceptance checks. Each prints one PASS/FAIL line; the exit code is the
// number of failures. An optional argument restricts the run to checks whose
// name contains it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "mfseg/bench.hpp"
#include "mfseg/engine.hpp"
#include "mfseg/kernels.hpp"
#include "mfseg/pipeline.hpp"
#include "mfseg/synthetic.hpp"
#include "oracles.hpp"
#include "scratch_dir.hpp"

using namespace mfseg;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

template <typename... Parts>
std::string str(const Parts&... parts) {
  std::ostringstream out;
  out.precision(4);
  (out << ... << parts);
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<ClusterId> merged_labels(const SegmentationArtifacts& a, bool points) {
  const auto& raw = points ? a.segmentation.point_labels : a.segmentation.field_labels;
  std::vector<ClusterId> out;
  out.reserve(raw.size());
  for (ClusterId l : raw) out.push_back(a.merge.map[static_cast<std::size_t>(l)]);
  return out;
}

// ---------------------------------------------------------------------------

Verdict oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0, 1);
  const DomainExtent extent({0, 0, 0, 0}, {10, 10, 10, 10});
  const Counts4 shapes[] = {{4, 4, 4, 4}, {8, 4, 2, 4}, {2, 2, 2, 2}, {16, 4, 4, 1}, {3, 5, 2, 7}, {1, 1, 1, 1}};
  std::vector<kernels::Isa> isas{kernels::Isa::Scalar};
  if (kernels::available(kernels::Isa::Avx2)) isas.push_back(kernels::Isa::Avx2);

  std::size_t instances = 0, compared = 0, mismatches = 0;
  for (int trial = 0; trial < 24; ++trial) {
    ClusterParams params;
    params.k = shapes[trial % std::size(shapes)];
    params.cf = 0.25 + 2 * u01(rng);
    params.wd = 0.05 + 2 * u01(rng);
    params.wp = 2 * u01(rng);
    params.wf = 2 * u01(rng);
    const Dims4 half = interval_distances(extent, params.k);

    std::vector<ClusterCenter> centers;
    for (auto c : seed_centers(extent, params.k)) {
      c.x += (u01(rng) - 0.5) * 0.6 * half[0];
      c.y += (u01(rng) - 0.5) * 0.6 * half[1];
      c.z += (u01(rng) - 0.5) * 0.6 * half[2];
      c.t += (u01(rng) - 0.5) * 0.6 * half[3];
      if (u01(rng) < 0.85) c.p = u01(rng);
      if (u01(rng) < 0.85) c.f = u01(rng);
      centers.push_back(c);
    }

    // Keep only samples whose global argmin lies inside their window.
    SampleColumns pts, fld;
    while (pts.size() + fld.size() < 10000) {
      const bool point = u01(rng) < 0.5;
      const Location4 s{10 * u01(rng), 10 * u01(rng), 10 * u01(rng), 10 * u01(rng)};
      const double v = u01(rng);
      const ClusterId best = oracle::argmin(point, s, v, centers, params);
      if (!oracle::within_window(s, centers[static_cast<std::size_t>(best)], half)) continue;
      (point ? pts : fld).push(s.x, s.y, s.z, s.t, v);
    }

    const CenterGrid grid(extent, params.k, centers);
    for (auto isa : isas) {
      EngineOptions opts;
      opts.isa = isa;
      opts.workers = 1 + trial % 3;
      const auto r = assign_iteration(pts, fld, centers, grid, params, opts);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        mismatches += r.point_labels[i] != oracle::argmin(true, pts.location(i), pts.v[i], centers, params);
      }
      for (std::size_t i = 0; i < fld.size(); ++i) {
        mismatches += r.field_labels[i] != oracle::argmin(false, fld.location(i), fld.v[i], centers, params);
      }
      compared += pts.size() + fld.size();
    }
    ++instances;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10,
          str(instances, " instances, ", compared, " labels compared, ", mismatches, " mismatches, ", secs, " s")};
}

// ---------------------------------------------------------------------------

/// `blobs` flat x-band blobs of width 10/(blobs+1) with one background band;
/// the band order is blob, blob, ..., background in the middle, ..., blob.
SyntheticSpec banded_spec(int blobs) {
  SyntheticSpec s;
  s.extent = DomainExtent({0, 0, 0, 0}, {10, 10, 10, 10});
  s.grid = {20, 8, 8};
  s.field_timesteps = 4;
  s.point_timesteps = 10;
  s.background_field = 0.05;
  s.background_point = 0.05;
  s.background_trajectories = 40;
  s.background_speed = 0.5;
  s.seed = 7;
  const int bands = blobs + 1;
  const double width = 10.0 / bands;
  const int middle = bands / 2;
  int b = 0;
  for (int band = 0; band < bands; ++band) {
    if (band == middle) continue;
    BlobSpec blob;
    const double margin = 0.02 * width;
    blob.center = {(band + 0.5) * width, 5, 5, 5};
    blob.radius = {0.5 * width - margin, 5, 5, 5};
    blob.shape = BlobShape::Box;
    blob.field_value = 0.2 + 0.2 * b;
    blob.point_value = 0.9 - 0.2 * b;
    blob.trajectories = 15;
    s.blobs.push_back(blob);
    ++b;
  }
  return s;
}

Verdict ground_truth_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = true;
  for (int blobs : {2, 4}) {
    const auto syn = generate_synthetic(banded_spec(blobs));
    const Dataset data = to_dataset(syn);
    ClusterParams params;
    params.k = {blobs + 1, 1, 1, 1};
    const auto a = segment_dataset(data, {}, params);
    std::vector<int> truth = syn.field_truth;
    truth.insert(truth.end(), syn.point_truth.begin(), syn.point_truth.end());
    auto labels = merged_labels(a, false);
    const auto pl = merged_labels(a, true);
    labels.insert(labels.end(), pl.begin(), pl.end());
    const double rand = metrics::rand_index<int, ClusterId>(truth, labels);
    pass = pass && a.segmentation.converged && rand >= 0.99;
    detail += str(blobs, " blobs: Rand ", rand, " (", labels.size(), " samples, ", a.merge.table.size(),
                  " features, converged=", a.segmentation.converged, "); ");
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 30, detail + str(secs, " s")};
}

// ---------------------------------------------------------------------------

/// Four Gaussian blobs, two positive and two negative, one per quadrant of
/// the x-y plane, with the engine's k matched to that layout.
Verdict convergence_bound() {
  SyntheticSpec s;
  s.extent = DomainExtent({0, 0, 0, 0}, {10, 10, 10, 10});
  s.grid = {20, 20, 20};
  s.field_timesteps = 10;
  s.point_timesteps = 20;
  s.background_trajectories = 1100;
  s.background_speed = 0.5;
  s.field_noise = 0.02;
  s.point_noise = 0.02;
  s.seed = 11;
  const double amplitudes[] = {1.0, -0.8, 0.6, -1.0};
  const Dims4 centers[] = {{2.5, 2.5, 5, 5}, {7.5, 2.5, 5, 5}, {2.5, 7.5, 5, 5}, {7.5, 7.5, 5, 5}};
  for (int i = 0; i < 4; ++i) {
    BlobSpec b;
    b.center = centers[i];
    b.radius = {2, 2, 4, 5};
    b.profile = BlobProfile::Gaussian;
    b.field_value = amplitudes[i];
    b.point_value = -amplitudes[i];
    s.blobs.push_back(b);
  }
  const Dataset data = to_dataset(generate_synthetic(s));
  ClusterParams params;
  params.k = {2, 2, 2, 1};
  params.eps_c = 0.01;
  const auto a = segment_dataset(data, {}, params);
  const std::size_t n = data.points.size() + data.field_columns.size();
  return {n >= 100000 && a.segmentation.converged && a.segmentation.iterations_used <= 10,
          str(n, " samples, k=(2,2,2,1), iterations_used=", a.segmentation.iterations_used,
              ", converged=", a.segmentation.converged)};
}

// ---------------------------------------------------------------------------

Verdict linear_sample_scaling() {
  const std::vector<double> ns{1e5, 2e5, 4e5, 8e5};
  ClusterParams params;
  params.k = {4, 4, 4, 4};
  std::vector<double> secs;
  for (double n : ns) {
    const auto data = bench_data(static_cast<std::size_t>(n), 0.5, 42);
    secs.push_back(time_iteration(data, params, {}, 7));
  }
  bool pass = true;
  std::string detail = "times";
  for (double t : secs) detail += str(" ", t * 1e3, "ms");
  detail += "; ratios";
  for (std::size_t i = 1; i < secs.size(); ++i) {
    const double r = secs[i] / secs[i - 1];
    pass = pass && r >= 1.6 && r <= 2.4;
    detail += str(" ", r);
  }
  const auto fit = fit_line(ns, secs);
  pass = pass && fit.r2 >= 0.95;
  return {pass, detail + str("; R^2 ", fit.r2)};
}

Verdict cluster_count_insensitivity() {
  const auto data = bench_data(400000, 0.5, 42);
  ClusterParams few, many;
  few.k = {4, 4, 4, 4};
  many.k = {8, 8, 8, 4};
  const double t_few = time_iteration(data, few, {}, 7);
  const double t_many = time_iteration(data, many, {}, 7);
  const double ratio = t_many / t_few;
  return {ratio <= 1.5, str("256 clusters ", t_few * 1e3, "ms, 2048 clusters ", t_many * 1e3, "ms, ratio ", ratio)};
}

// ---------------------------------------------------------------------------

struct Compactness {
  double value_std = 0;
  double radius = 0;
};

/// Unweighted means over clusters of the members' value standard deviation
/// and of their mean space-time distance to the member centroid.
Compactness compactness(const SampleColumns& fields, const std::vector<ClusterId>& labels, double cf) {
  std::map<ClusterId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  Compactness c;
  for (const auto& [id, idx] : members) {
    double mx = 0, my = 0, mz = 0, mt = 0, mv = 0;
    for (auto i : idx) {
      mx += fields.x[i];
      my += fields.y[i];
      mz += fields.z[i];
      mt += fields.t[i];
      mv += fields.v[i];
    }
    const double n = static_cast<double>(idx.size());
    mx /= n, my /= n, mz /= n, mt /= n, mv /= n;
    double var = 0, rad = 0;
    for (auto i : idx) {
      var += (fields.v[i] - mv) * (fields.v[i] - mv);
      const double dx = fields.x[i] - mx, dy = fields.y[i] - my, dz = fields.z[i] - mz, dt = cf * (fields.t[i] - mt);
      rad += std::sqrt(dx * dx + dy * dy + dz * dz + dt * dt);
    }
    c.value_std += std::sqrt(var / n);
    c.radius += rad / n;
  }
  c.value_std /= static_cast<double>(members.size());
  c.radius /= static_cast<double>(members.size());
  return c;
}

Verdict weight_effect() {
  // Field of stripes along x: value 1 on even unit slabs, 0 on odd ones, with
  // light noise.
  FieldGrid grid;
  grid.geometry.dims = {40, 20, 20};
  grid.geometry.spacing = {0.25, 0.5, 0.5};
  grid.geometry.times = {0, 5, 10};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0, 0.05);
  for (std::size_t st = 0; st < 3; ++st) {
    for (int k = 0; k < 20; ++k)
      for (int j = 0; j < 20; ++j)
        for (int i = 0; i < 40; ++i) grid.values.push_back(((i / 4) % 2 == 0 ? 1.0 : 0.0) + noise(rng));
  }
  Dataset data;
  data.field = grid;
  data.extent = field_extent(grid.geometry);
  data.field_columns = grid.columns();

  auto measure = [&](double wd) {
    ClusterParams p;
    p.k = {4, 4, 4, 2};
    p.wd = wd;
    p.wf = 1;
    const auto a = segment_dataset(data, {}, p);
    return compactness(data.field_columns, a.segmentation.field_labels, p.cf);
  };
  const auto loose = measure(0.01);
  const auto tight = measure(10);
  return {loose.value_std < tight.value_std && tight.radius < loose.radius,
          str("value std ", loose.value_std, " (wd=0.01) vs ", tight.value_std, " (wd=10); radius ", tight.radius,
              " (wd=10) vs ", loose.radius, " (wd=0.01)")};
}

// ---------------------------------------------------------------------------

Verdict background_merge() {
  // Uniform field everywhere. One box region carries divergent point values
  // but the background field value, aligned with one k-grid cell.
  SyntheticSpec s;
  s.extent = DomainExtent({0, 0, 0, 0}, {10, 10, 10, 10});
  s.grid = {16, 16, 16};
  s.field_timesteps = 4;
  s.point_timesteps = 16;
  s.background_field = 0.25;
  s.background_point = 1.0;
  s.background_trajectories = 1600;
  s.background_speed = 0.5;
  s.seed = 3;
  BlobSpec odd;
  odd.center = {1.25, 1.25, 2.5, 5};
  odd.radius = {1.2, 1.2, 2.4, 5};
  odd.shape = BlobShape::Box;
  odd.field_value = 0.25;
  odd.point_value = 3.0;
  odd.trajectories = 300;
  s.blobs.push_back(odd);
  const auto syn = generate_synthetic(s);
  const Dataset data = to_dataset(syn);
  ClusterParams params;
  params.k = {4, 4, 2, 2};
  params.eps_m = 0.01;
  const auto a = segment_dataset(data, {}, params);

  // Majority ground-truth class per cluster, over all member samples.
  std::map<ClusterId, std::map<int, std::size_t>> votes;
  for (std::size_t i = 0; i < syn.field_truth.size(); ++i) ++votes[a.segmentation.field_labels[i]][syn.field_truth[i]];
  for (std::size_t i = 0; i < syn.point_truth.size(); ++i) ++votes[a.segmentation.point_labels[i]][syn.point_truth[i]];
  std::set<ClusterId> background_features;
  std::vector<ClusterId> odd_clusters;
  for (const auto& [id, v] : votes) {
    const int majority = std::max_element(v.begin(), v.end(), [](auto& x, auto& y) { return x.second < y.second; })->first;
    if (majority == 0) {
      background_features.insert(a.merge.map[static_cast<std::size_t>(id)]);
    } else {
      odd_clusters.push_back(id);
    }
  }
  const std::size_t initial = a.clusters.size();
  bool odd_separate = !odd_clusters.empty();
  std::string odd_detail;
  for (ClusterId id : odd_clusters) {
    const auto& row = *std::find_if(a.clusters.begin(), a.clusters.end(), [&](auto& r) { return r.center.id == id; });
    const bool f_matches = row.center.f && std::fabs(*row.center.f - 0.25) < 1e-9;
    const bool merged_into_bg =
        background_features.size() == 1 && a.merge.map[static_cast<std::size_t>(id)] == *background_features.begin();
    odd_separate = odd_separate && f_matches && !merged_into_bg;
    odd_detail += str(" cluster ", id, " p_c=", row.center.p.value_or(NAN), " f_c=", row.center.f.value_or(NAN),
                      merged_into_bg ? " merged" : " separate");
  }
  const bool pass = initial >= 20 && background_features.size() == 1 && odd_separate;
  return {pass, str(initial, " initial clusters, ", background_features.size(), " background feature(s), ",
                    a.merge.table.size(), " features total;", odd_detail)};
}

// ---------------------------------------------------------------------------

Verdict determinism() {
  auto spec = banded_spec(4);
  spec.grid = {30, 20, 20};
  spec.field_noise = 0.05;
  spec.point_noise = 0.05;
  spec.background_trajectories = 400;
  const Dataset data = to_dataset(generate_synthetic(spec));
  ClusterParams params;
  params.k = {6, 3, 3, 2};
  const SampleColumns& pts = data.points.cols;
  const SampleColumns& fld = data.field_columns;

  const auto reference = run(pts, fld, data.extent, params);
  std::size_t runs = 0, differing = 0;
  for (int workers : {1, 2, 8}) {
    for (std::size_t chunk : {std::size_t{0}, std::size_t{1000}}) {
      EngineOptions opts;
      opts.workers = workers;
      opts.chunk_size = chunk;
      const auto r = run(pts, fld, data.extent, params, opts);
      ++runs;
      differing += r.segmentation.point_labels != reference.segmentation.point_labels ||
                   r.segmentation.field_labels != reference.segmentation.field_labels ||
                   r.segmentation.iterations_used != reference.segmentation.iterations_used;
    }
  }

  ScratchDir one("acc_det1"), two("acc_det2");
  EngineOptions wide;
  wide.workers = 8;
  wide.chunk_size = 1000;
  write_segmentation(segment_dataset(data, {}, params), one.path());
  write_segmentation(segment_dataset(data, {}, params, wide), two.path());
  std::size_t artifacts_differing = 0;
  for (const char* name : {"segmentation.json", "point_labels.bin", "field_labels.bin", "report.json", "merge.json"}) {
    artifacts_differing += slurp(one / name) != slurp(two / name);
  }
  return {differing == 0 && artifacts_differing == 0,
          str(runs, " runs over workers {1,2,8} x chunks {all,1000}: ", differing, " differ from reference; ",
              artifacts_differing, " artifact files differ across repeated runs; ",
              pts.size() + fld.size(), " samples")};
}

// ---------------------------------------------------------------------------

Verdict trajectory_splitting() {
  std::mt19937_64 rng(99);
  std::size_t cases = 0, polylines = 0, violations = 0;
  for (int trial = 0; trial < 300; ++trial) {
    // Random trajectories with gaps, shuffled input order, random labels.
    PointSet points;
    const int trajectories = 1 + static_cast<int>(rng() % 8);
    for (int tr = 0; tr < trajectories; ++tr) {
      const int steps = 1 + static_cast<int>(rng() % 20);
      for (int st = 0; st < steps; ++st) {
        if (rng() % 5 == 0) continue;
        PointSample s;
        s.trajectory_id = 100 + tr;
        s.x = s.y = s.z = 0.5;
        s.t = st;
        s.v = 0;
        points.push(s);
      }
    }
    if (points.size() == 0) continue;
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    PointSet shuffled;
    for (auto i : order) shuffled.push(points.at(i));
    shuffled.index_steps();

    const int clusters = 1 + static_cast<int>(rng() % 4);
    Segmentation seg;
    for (int c = 0; c < clusters; ++c) {
      ClusterCenter center;
      center.id = c;
      seg.centers.push_back(center);
    }
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
      seg.point_labels.push_back(static_cast<ClusterId>(rng() % static_cast<unsigned>(clusters)));
    }
    MergeMap map(static_cast<std::size_t>(clusters));
    for (int c = 0; c < clusters; ++c) map[static_cast<std::size_t>(c)] = (rng() % 2) ? 0 : c;
    const auto features = build_features(seg, map, shuffled, {}, 0);

    std::vector<int> seen(shuffled.size(), 0);
    for (const auto& f : features) {
      for (const auto& line : f.polylines) {
        ++polylines;
        violations += line.points.size() < 2;
        for (std::size_t k = 0; k < line.points.size(); ++k) {
          const auto i = line.points[k];
          ++seen[i];
          violations += shuffled.trajectory[i] != line.trajectory_id;
          violations += map[static_cast<std::size_t>(seg.point_labels[i])] != f.id;
          if (k > 0) violations += shuffled.step[i] != shuffled.step[line.points[k - 1]] + 1;
        }
      }
      for (auto i : f.isolated_points) {
        ++seen[i];
        violations += map[static_cast<std::size_t>(seg.point_labels[i])] != f.id;
      }
    }
    violations += static_cast<std::size_t>(std::count_if(seen.begin(), seen.end(), [](int n) { return n != 1; }));
    ++cases;
  }
  return {violations == 0, str(cases, " random cases, ", polylines, " polylines, ", violations, " violations")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Verdict()>>> checks = {
      {"oracle-equivalence", oracle_equivalence},
      {"ground-truth-recovery", ground_truth_recovery},
      {"convergence-bound", convergence_bound},
      {"linear-sample-scaling", linear_sample_scaling},
      {"cluster-count-insensitivity", cluster_count_insensitivity},
      {"weight-effect", weight_effect},
      {"background-merge", background_merge},
      {"determinism", determinism},
      {"trajectory-splitting", trajectory_splitting},
  };
  int failures = 0;
  for (const auto& [name, check] : checks) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, str("threw: ", e.what())};
    }
    failures += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
