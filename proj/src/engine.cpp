#include "mfseg/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "mfseg/error.hpp"

namespace mfseg {

namespace {

constexpr double kRelativeGuard = 1e-12;
// Bins are slightly wider than C_i so that |c - s| <= C_i always maps to bins
// at most one apart, even after rounding.
constexpr double kBinSlack = 1e-6;

double relative_change(double old_value, double new_value) {
  return std::fabs(new_value - old_value) / (std::fabs(old_value) + kRelativeGuard);
}

const std::optional<double>& kind_value(const ClusterCenter& c, SampleKind kind) {
  return kind == SampleKind::Point ? c.p : c.f;
}

double kind_weight(const ClusterParams& params, SampleKind kind) {
  return kind == SampleKind::Point ? params.wp : params.wf;
}

bool in_box(const Location4& s, const ClusterCenter& c, const Dims4& half) {
  return std::fabs(s.x - c.x) <= half[0] && std::fabs(s.y - c.y) <= half[1] && std::fabs(s.z - c.z) <= half[2] &&
         std::fabs(s.t - c.t) <= half[3];
}

// Widened search for samples whose window holds no center: the half-widths are
// doubled until at least one center qualifies.
ClusterId fallback_assign(SampleKind kind, const Location4& s, double value, std::span<const ClusterCenter> centers,
                          const Dims4& half_width, const ClusterParams& params) {
  if (centers.empty()) return kNoCluster;
  Dims4 half = half_width;
  for (;;) {
    for (double& h : half) h *= 2;
    ClusterId best = kNoCluster;
    double best_d = std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& c : centers) {
      if (!in_box(s, c, half)) continue;
      any = true;
      const double d = sample_distance(kind, s, value, c, params);
      if (d < best_d) {
        best_d = d;
        best = c.id;
      }
    }
    if (any) return best;
  }
}

// Samples are labeled in tiles of this many, grouped by grid bin inside each
// tile so that candidate blocks and sample columns both stay cache resident.
constexpr std::size_t kTile = 4096;

// Visits [begin, end) tile by tile, each tile in ascending bin order.
template <typename Visit>
void visit_by_bin(std::size_t begin, std::size_t end, std::span<const std::uint32_t> bins, std::size_t bin_count,
                  const Visit& visit) {
  std::vector<std::uint32_t> starts;
  std::vector<std::uint64_t> keys;
  std::vector<std::size_t> order;
  const bool counting = bin_count <= 2 * kTile;
  if (counting) starts.resize(bin_count + 1);
  for (std::size_t t0 = begin; t0 < end; t0 += kTile) {
    const std::size_t t1 = std::min(end, t0 + kTile);
    if (counting) {
      std::fill(starts.begin(), starts.end(), 0);
      for (std::size_t i = t0; i < t1; ++i) ++starts[bins[i] + 1];
      for (std::size_t b = 1; b < starts.size(); ++b) starts[b] += starts[b - 1];
      order.resize(t1 - t0);
      for (std::size_t i = t0; i < t1; ++i) order[starts[bins[i]]++] = i;
      for (std::size_t i : order) visit(i);
    } else {
      keys.clear();
      for (std::size_t i = t0; i < t1; ++i) keys.push_back(std::uint64_t{bins[i]} << 32 | (i - t0));
      std::sort(keys.begin(), keys.end());
      for (auto k : keys) visit(t0 + (k & 0xffffffffu));
    }
  }
}

// Assignment of one sample kind followed by accumulation in sample order.
// Labels do not depend on the visiting order. Accumulation is split by
// cluster ownership so every cluster's sums are formed in the same order
// whatever the worker count or chunk size.
template <typename Labeler>
std::size_t assign_kind(const SampleColumns& cols, const CenterGrid& grid, SampleKind kind, std::size_t chunk_size,
                        WorkerPool& pool, std::vector<ClusterId>& labels, std::vector<Accumulator>& acc,
                        const Labeler& labeler) {
  const std::size_t n = cols.size();
  labels.assign(n, kNoCluster);
  const std::size_t chunk = chunk_size == 0 ? std::max<std::size_t>(n, 1) : chunk_size;
  const int workers = pool.size();
  std::vector<std::size_t> fallbacks(static_cast<std::size_t>(workers), 0);
  const std::size_t clusters = acc.size();

  std::vector<std::uint32_t> bins(n);
  pool.run([&](int w) {
    const auto [b, e] = split_range(n, w, workers);
    for (std::size_t i = b; i < e; ++i) bins[i] = static_cast<std::uint32_t>(grid.bin_of(cols.location(i)));
  });

  for (std::size_t c0 = 0; c0 < n; c0 += chunk) {
    const std::size_t c1 = std::min(n, c0 + chunk);
    pool.run([&](int w) {
      const auto [b, e] = split_range(c1 - c0, w, workers);
      std::size_t local_fallback = 0;
      visit_by_bin(c0 + b, c0 + e, bins, grid.bin_count(), [&](std::size_t i) {
        labels[i] = labeler(bins[i], cols.location(i), cols.v[i], local_fallback);
      });
      fallbacks[static_cast<std::size_t>(w)] += local_fallback;
    });
    pool.run([&](int w) {
      const auto [lo, hi] = split_range(clusters, w, workers);
      for (std::size_t i = c0; i < c1; ++i) {
        const auto l = static_cast<std::size_t>(labels[i]);
        if (l >= lo && l < hi) acc[l].add(kind, cols.location(i), cols.v[i]);
      }
    });
  }
  std::size_t total = 0;
  for (auto f : fallbacks) total += f;
  return total;
}

AssignResult assign_impl(const SampleColumns& points, const SampleColumns& fields,
                         std::span<const ClusterCenter> centers, const CenterGrid& grid, const ClusterParams& params,
                         bool values_ignored, std::size_t chunk_size, const kernels::KernelSet& kset,
                         WorkerPool& pool) {
  AssignResult result;
  result.accumulators.assign(centers.size(), Accumulator{});
  ClusterParams effective = params;
  if (values_ignored) {
    effective.wd = 1.0;
    effective.wp = 0.0;
    effective.wf = 0.0;
  }

  for (SampleKind kind : {SampleKind::Point, SampleKind::Field}) {
    const SampleColumns& cols = kind == SampleKind::Point ? points : fields;
    auto& labels = kind == SampleKind::Point ? result.point_labels : result.field_labels;
    kernels::WindowMetric metric;
    metric.cf = effective.cf;
    metric.wd = effective.wd;
    metric.wv = kind_weight(effective, kind);
    metric.half_width = grid.half_width();
    auto labeler = [&](std::size_t bin, const Location4& loc, double value, std::size_t& fallback) -> ClusterId {
      const auto block = grid.candidates(bin, kind);
      const auto hit = kset.windowed_argmin(loc, value, block, metric);
      if (hit.index >= 0) return grid.candidate_id(bin, static_cast<std::size_t>(hit.index));
      ++fallback;
      return fallback_assign(kind, loc, value, centers, grid.half_width(), effective);
    };
    result.fallback_count += assign_kind(cols, grid, kind, chunk_size, pool, labels, result.accumulators, labeler);
  }
  return result;
}

void check_center_ids(std::span<const ClusterCenter> centers) {
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (centers[i].id != static_cast<ClusterId>(i)) {
      throw ParameterError("center table must be indexed by dense ascending id");
    }
  }
}

}  // namespace

ClusterId seed_id(const Counts4& k, int ix, int iy, int iz, int it) {
  return static_cast<ClusterId>(((it * k[2] + iz) * k[1] + iy) * k[0] + ix);
}

std::vector<ClusterCenter> seed_centers(const DomainExtent& extent, const Counts4& k) {
  const Dims4 c = interval_distances(extent, k);
  const auto& lo = extent.min();
  std::vector<ClusterCenter> centers;
  centers.reserve(static_cast<std::size_t>(k[0]) * k[1] * k[2] * k[3]);
  for (int it = 0; it < k[3]; ++it)
    for (int iz = 0; iz < k[2]; ++iz)
      for (int iy = 0; iy < k[1]; ++iy)
        for (int ix = 0; ix < k[0]; ++ix) {
          ClusterCenter s;
          s.id = seed_id(k, ix, iy, iz, it);
          s.x = lo[0] + (ix + 0.5) * c[0];
          s.y = lo[1] + (iy + 0.5) * c[1];
          s.z = lo[2] + (iz + 0.5) * c[2];
          s.t = lo[3] + (it + 0.5) * c[3];
          centers.push_back(s);
        }
  return centers;
}

double sample_distance(SampleKind kind, const Location4& s, double value, const ClusterCenter& c,
                       const ClusterParams& params) {
  const double st = space_time_distance(s, c.location(), params.cf);
  const auto& cv = kind_value(c, kind);
  if (!cv) return params.wd * st;
  return kind_weight(params, kind) * std::fabs(value - *cv) + params.wd * st;
}

double point_distance(const PointSample& s, const ClusterCenter& c, const ClusterParams& params) {
  return sample_distance(SampleKind::Point, {s.x, s.y, s.z, s.t}, s.v, c, params);
}

double field_distance(const FieldSample& s, const ClusterCenter& c, const ClusterParams& params) {
  return sample_distance(SampleKind::Field, {s.x, s.y, s.z, s.t}, s.v, c, params);
}

// --- CenterGrid -------------------------------------------------------------

CenterGrid::CenterGrid(const DomainExtent& extent, const Counts4& k, std::span<const ClusterCenter> centers)
    : extent_(extent), k_(k), half_width_(interval_distances(extent, k)) {
  for (int a = 0; a < 4; ++a) bin_width_[a] = half_width_[a] * (1.0 + kBinSlack);
  const std::size_t bins = static_cast<std::size_t>(k[0]) * k[1] * k[2] * k[3];

  std::vector<std::size_t> center_bin(centers.size());
  member_offsets_.assign(bins + 1, 0);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    center_bin[i] = bin_of(centers[i].location());
    ++member_offsets_[center_bin[i] + 1];
  }
  for (std::size_t b = 0; b < bins; ++b) member_offsets_[b + 1] += member_offsets_[b];
  members_.resize(centers.size());
  {
    std::vector<std::size_t> fill(member_offsets_.begin(), member_offsets_.end() - 1);
    for (std::size_t i = 0; i < centers.size(); ++i) members_[fill[center_bin[i]]++] = centers[i].id;
  }

  bin_offsets_.assign(bins + 1, 0);
  std::vector<ClusterId> gathered;
  std::vector<std::size_t> id_to_pos;
  {
    ClusterId max_id = -1;
    for (const auto& c : centers) max_id = std::max(max_id, c.id);
    id_to_pos.assign(static_cast<std::size_t>(max_id + 1), 0);
    for (std::size_t i = 0; i < centers.size(); ++i) id_to_pos[static_cast<std::size_t>(centers[i].id)] = i;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    std::size_t rest = b;
    int bc[4];
    for (int a = 0; a < 4; ++a) {
      bc[a] = static_cast<int>(rest % static_cast<std::size_t>(k[a]));
      rest /= static_cast<std::size_t>(k[a]);
    }
    gathered.clear();
    for (int t = std::max(0, bc[3] - 1); t <= std::min(k[3] - 1, bc[3] + 1); ++t)
      for (int z = std::max(0, bc[2] - 1); z <= std::min(k[2] - 1, bc[2] + 1); ++z)
        for (int y = std::max(0, bc[1] - 1); y <= std::min(k[1] - 1, bc[1] + 1); ++y)
          for (int x = std::max(0, bc[0] - 1); x <= std::min(k[0] - 1, bc[0] + 1); ++x) {
            const std::size_t nb = static_cast<std::size_t>(((t * k[2] + z) * k[1] + y) * k[0] + x);
            for (std::size_t m = member_offsets_[nb]; m < member_offsets_[nb + 1]; ++m) gathered.push_back(members_[m]);
          }
    std::sort(gathered.begin(), gathered.end());
    for (ClusterId id : gathered) {
      const auto& c = centers[id_to_pos[static_cast<std::size_t>(id)]];
      ids_.push_back(id);
      x_.push_back(c.x);
      y_.push_back(c.y);
      z_.push_back(c.z);
      t_.push_back(c.t);
      p_.push_back(c.p.value_or(0.0));
      has_p_.push_back(c.p ? 1.0 : 0.0);
      f_.push_back(c.f.value_or(0.0));
      has_f_.push_back(c.f ? 1.0 : 0.0);
    }
    while (ids_.size() % kernels::kLanes != 0) {
      ids_.push_back(kNoCluster);
      x_.push_back(kernels::kPadCoordinate);
      y_.push_back(kernels::kPadCoordinate);
      z_.push_back(kernels::kPadCoordinate);
      t_.push_back(kernels::kPadCoordinate);
      p_.push_back(0.0);
      has_p_.push_back(0.0);
      f_.push_back(0.0);
      has_f_.push_back(0.0);
    }
    bin_offsets_[b + 1] = ids_.size();
  }
}

std::array<int, 4> CenterGrid::bin_coords(const Location4& p) const {
  const double c[4] = {p.x, p.y, p.z, p.t};
  std::array<int, 4> b{};
  for (int a = 0; a < 4; ++a) {
    const double f = std::floor((c[a] - extent_.min()[a]) / bin_width_[a]);
    b[a] = f < 0 ? 0 : (f >= k_[a] ? k_[a] - 1 : static_cast<int>(f));
  }
  return b;
}

std::size_t CenterGrid::bin_of(const Location4& p) const {
  const auto b = bin_coords(p);
  return static_cast<std::size_t>(((b[3] * k_[2] + b[2]) * k_[1] + b[1]) * k_[0] + b[0]);
}

std::span<const ClusterId> CenterGrid::bin_members(std::size_t bin) const {
  return {members_.data() + member_offsets_[bin], member_offsets_[bin + 1] - member_offsets_[bin]};
}

kernels::CandidateBlock CenterGrid::candidates(std::size_t bin, SampleKind kind) const {
  const std::size_t o = bin_offsets_[bin];
  kernels::CandidateBlock b;
  b.x = x_.data() + o;
  b.y = y_.data() + o;
  b.z = z_.data() + o;
  b.t = t_.data() + o;
  b.value = (kind == SampleKind::Point ? p_.data() : f_.data()) + o;
  b.has_value = (kind == SampleKind::Point ? has_p_.data() : has_f_.data()) + o;
  b.count = bin_offsets_[bin + 1] - o;
  return b;
}

// --- assignment ---------------------------------------------------------------

void Accumulator::add(SampleKind kind, const Location4& loc, double value) {
  sum_x += loc.x;
  sum_y += loc.y;
  sum_z += loc.z;
  sum_t += loc.t;
  if (kind == SampleKind::Point) {
    sum_p += value;
    ++n_points;
  } else {
    sum_f += value;
    ++n_fields;
  }
}

AssignResult initial_assignment(const SampleColumns& points, const SampleColumns& fields,
                                std::span<const ClusterCenter> centers, const DomainExtent& extent,
                                const ClusterParams& params, const EngineOptions& options) {
  check_center_ids(centers);
  const CenterGrid grid(extent, params.k, centers);
  WorkerPool pool(options.workers);
  return assign_impl(points, fields, centers, grid, params, true, options.chunk_size, kernels::select(options.isa),
                     pool);
}

AssignResult assign_iteration(const SampleColumns& points, const SampleColumns& fields,
                              std::span<const ClusterCenter> centers, const CenterGrid& grid,
                              const ClusterParams& params, const EngineOptions& options) {
  check_center_ids(centers);
  if (centers.empty()) throw ParameterError("assign_iteration needs at least one center");
  WorkerPool pool(options.workers);
  return assign_impl(points, fields, centers, grid, params, false, options.chunk_size, kernels::select(options.isa),
                     pool);
}

std::vector<ClusterCenter> update_centers(std::span<const ClusterCenter> previous,
                                          std::span<const Accumulator> accumulators) {
  std::vector<ClusterCenter> next(previous.begin(), previous.end());
  for (std::size_t i = 0; i < next.size(); ++i) {
    const Accumulator& a = accumulators[i];
    ClusterCenter& c = next[i];
    const std::int64_t n = a.n_points + a.n_fields;
    c.n_points = a.n_points;
    c.n_fields = a.n_fields;
    if (n == 0) {
      c.dormant = true;
      continue;
    }
    const auto dn = static_cast<double>(n);
    c.dormant = false;
    c.x = a.sum_x / dn;
    c.y = a.sum_y / dn;
    c.z = a.sum_z / dn;
    c.t = a.sum_t / dn;
    c.p = a.n_points > 0 ? std::optional<double>(a.sum_p / static_cast<double>(a.n_points)) : std::nullopt;
    c.f = a.n_fields > 0 ? std::optional<double>(a.sum_f / static_cast<double>(a.n_fields)) : std::nullopt;
  }
  return next;
}

double max_relative_change(std::span<const ClusterCenter> old_centers, std::span<const ClusterCenter> new_centers) {
  double worst = 0;
  const std::size_t n = std::min(old_centers.size(), new_centers.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = old_centers[i];
    const auto& c = new_centers[i];
    if (c.dormant) continue;
    worst = std::max({worst, relative_change(o.x, c.x), relative_change(o.y, c.y), relative_change(o.z, c.z),
                      relative_change(o.t, c.t)});
    for (const auto* pair : {&o.p, &o.f}) {
      const auto& ov = *pair;
      const auto& nv = pair == &o.p ? c.p : c.f;
      if (ov.has_value() != nv.has_value()) return std::numeric_limits<double>::infinity();
      if (ov) worst = std::max(worst, relative_change(*ov, *nv));
    }
  }
  return worst;
}

bool has_converged(std::span<const ClusterCenter> old_centers, std::span<const ClusterCenter> new_centers,
                   double eps_c) {
  return max_relative_change(old_centers, new_centers) < eps_c;
}

// --- driver -------------------------------------------------------------------

Engine::Engine(const SampleColumns& points, const SampleColumns& fields, const DomainExtent& extent,
               const ClusterParams& params, const EngineOptions& options)
    : points_(points), fields_(fields), extent_(extent), params_(params), options_(options) {
  params_.validate(!points.empty(), !fields.empty());
  if (points.empty() && fields.empty()) throw ParameterError("no samples to cluster");
  if (options_.workers < 1) throw ParameterError("workers must be >= 1");
  pool_ = std::make_unique<WorkerPool>(options_.workers);
}

Engine::~Engine() = default;

void Engine::initialize() {
  centers_ = seed_centers(extent_, params_.k);
  const CenterGrid grid(extent_, params_.k, centers_);
  current_ = assign_impl(points_, fields_, centers_, grid, params_, true, options_.chunk_size,
                         kernels::select(options_.isa), *pool_);
  iterations_ = 0;
  converged_ = false;
  history_.clear();
}

bool Engine::step(bool always_assign) {
  const auto start = std::chrono::steady_clock::now();
  auto next = update_centers(centers_, current_.accumulators);
  ++iterations_;
  IterationProgress progress;
  progress.iteration = iterations_;
  progress.max_delta = max_relative_change(centers_, next);
  converged_ = progress.max_delta < params_.eps_c;
  centers_ = std::move(next);
  const bool last = iterations_ >= params_.max_iterations;
  if (always_assign || (!converged_ && !last)) {
    const CenterGrid grid(extent_, params_.k, centers_);
    current_ = assign_impl(points_, fields_, centers_, grid, params_, false, options_.chunk_size,
                           kernels::select(options_.isa), *pool_);
  }
  progress.fallback_count = current_.fallback_count;
  progress.dormant_count = static_cast<std::size_t>(
      std::count_if(centers_.begin(), centers_.end(), [](const ClusterCenter& c) { return c.dormant; }));
  progress.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(progress);
  return converged_;
}

RunResult Engine::finish() const {
  RunResult out;
  auto& seg = out.segmentation;
  seg.point_labels = current_.point_labels;
  seg.field_labels = current_.field_labels;
  seg.params = params_;
  seg.iterations_used = iterations_;
  seg.converged = converged_;
  for (const auto& c : centers_) {
    if (c.size() == 0) {
      ++out.dropped_empty_clusters;
      continue;
    }
    seg.centers.push_back(c);
  }
  out.iterations = history_;
  if (!converged_) {
    std::ostringstream os;
    os << "did not converge within " << params_.max_iterations << " iterations";
    out.warnings.push_back(os.str());
  }
  return out;
}

RunResult run(const SampleColumns& points, const SampleColumns& fields, const DomainExtent& extent,
              const ClusterParams& params, const EngineOptions& options, const ProgressSink& progress) {
  Engine engine(points, fields, extent, params, options);
  engine.initialize();
  for (;;) {
    const bool done = engine.step();
    if (progress) progress(engine.history().back());
    if (done || engine.iterations() >= params.max_iterations) break;
  }
  return engine.finish();
}

}  // namespace mfseg
