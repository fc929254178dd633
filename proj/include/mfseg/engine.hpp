#pragma once

// Iterative 4D clustering of point and field samples.
//
// One iteration recomputes every center from its members, then reassigns each
// sample to the center minimizing its kind's metric among centers lying within
// a box of half-width C_i around the sample:
//
//   D_p = w_p |p_s - p_c| + w_d S_st      (point samples)
//   D_f = w_f |f_s - f_c| + w_d S_st      (field samples)
//
// A missing p_c / f_c contributes no value term. Ties go to the lowest id.

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfseg/kernels.hpp"
#include "mfseg/model.hpp"
#include "mfseg/parallel.hpp"

namespace mfseg {

enum class SampleKind { Point, Field };

/// k_1 k_2 k_3 k_4 centers at the midpoints of the k-grid cells, ids assigned
/// t-major then z, y, x. Value averages are left empty.
std::vector<ClusterCenter> seed_centers(const DomainExtent& extent, const Counts4& k);

/// Linear seed id for per-axis seed indices.
ClusterId seed_id(const Counts4& k, int ix, int iy, int iz, int it);

double point_distance(const PointSample& s, const ClusterCenter& c, const ClusterParams& params);
double field_distance(const FieldSample& s, const ClusterCenter& c, const ClusterParams& params);
/// Kind-generic form of the two metrics above.
double sample_distance(SampleKind kind, const Location4& s, double value, const ClusterCenter& c,
                       const ClusterParams& params);

/// Centers binned on the k-grid by their current location. For every bin it
/// keeps the centers of the bin and its 3^4 neighborhood as a padded candidate
/// block, which is a superset of the centers within +-C_i of any sample in the
/// bin.
class CenterGrid {
 public:
  CenterGrid(const DomainExtent& extent, const Counts4& k, std::span<const ClusterCenter> centers);

  std::size_t bin_count() const { return bin_offsets_.size() - 1; }
  std::size_t bin_of(const Location4& p) const;
  /// Centers whose own location falls in `bin`, ascending id.
  std::span<const ClusterId> bin_members(std::size_t bin) const;
  kernels::CandidateBlock candidates(std::size_t bin, SampleKind kind) const;
  /// Cluster id of position `pos` of the candidate block of `bin`.
  ClusterId candidate_id(std::size_t bin, std::size_t pos) const { return ids_[bin_offsets_[bin] + pos]; }
  const Dims4& half_width() const { return half_width_; }

 private:
  std::array<int, 4> bin_coords(const Location4& p) const;

  DomainExtent extent_;
  Counts4 k_;
  Dims4 half_width_{};
  Dims4 bin_width_{};
  std::vector<std::size_t> member_offsets_;
  std::vector<ClusterId> members_;
  std::vector<std::size_t> bin_offsets_;
  std::vector<ClusterId> ids_;
  std::vector<double> x_, y_, z_, t_, p_, has_p_, f_, has_f_;
};

/// Per-cluster partial sums for one iteration.
struct Accumulator {
  double sum_x = 0, sum_y = 0, sum_z = 0, sum_t = 0;
  double sum_p = 0, sum_f = 0;
  std::int64_t n_points = 0, n_fields = 0;

  void add(SampleKind kind, const Location4& loc, double value);
};

struct EngineOptions {
  /// Number of worker threads (>= 1).
  int workers = 1;
  /// Samples per assignment chunk; 0 processes each kind at once.
  std::size_t chunk_size = 0;
  kernels::Isa isa = kernels::Isa::Auto;
};

struct AssignResult {
  std::vector<ClusterId> point_labels;
  std::vector<ClusterId> field_labels;
  std::vector<Accumulator> accumulators;
  /// Samples that needed the widened search.
  std::size_t fallback_count = 0;
};

/// Nearest seed by S_st (values ignored). `centers` must come from
/// seed_centers(extent, k).
AssignResult initial_assignment(const SampleColumns& points, const SampleColumns& fields,
                                std::span<const ClusterCenter> centers, const DomainExtent& extent,
                                const ClusterParams& params, const EngineOptions& options = {});

/// One windowed assignment pass against `centers` (indexed by id).
AssignResult assign_iteration(const SampleColumns& points, const SampleColumns& fields,
                              std::span<const ClusterCenter> centers, const CenterGrid& grid,
                              const ClusterParams& params, const EngineOptions& options = {});

/// Component-wise member means. Clusters without members keep their previous
/// center and are flagged dormant.
std::vector<ClusterCenter> update_centers(std::span<const ClusterCenter> previous,
                                          std::span<const Accumulator> accumulators);

/// Largest relative change |new - old| / (|old| + 1e-12) over the six values of
/// non-dormant centers; +inf when an average appears or disappears.
double max_relative_change(std::span<const ClusterCenter> old_centers,
                           std::span<const ClusterCenter> new_centers);

bool has_converged(std::span<const ClusterCenter> old_centers, std::span<const ClusterCenter> new_centers,
                   double eps_c);

struct IterationProgress {
  int iteration = 0;
  double max_delta = 0;
  std::size_t fallback_count = 0;
  std::size_t dormant_count = 0;
  double seconds = 0;
};

using ProgressSink = std::function<void(const IterationProgress&)>;

struct RunResult {
  Segmentation segmentation;
  std::vector<IterationProgress> iterations;
  std::vector<std::string> warnings;
  std::size_t dropped_empty_clusters = 0;
};

/// Stepwise driver behind run(). Exposed for benchmarking single iterations.
class Engine {
 public:
  Engine(const SampleColumns& points, const SampleColumns& fields, const DomainExtent& extent,
         const ClusterParams& params, const EngineOptions& options = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Seeds centers and performs the initial nearest-seed assignment.
  void initialize();
  /// Updates centers from the current memberships and checks convergence. When
  /// not converged (or `always_assign`), rebuilds the grid and reassigns.
  /// Returns true on convergence.
  bool step(bool always_assign = false);

  int iterations() const { return iterations_; }
  const std::vector<ClusterCenter>& centers() const { return centers_; }
  const std::vector<IterationProgress>& history() const { return history_; }
  RunResult finish() const;

 private:
  const SampleColumns& points_;
  const SampleColumns& fields_;
  DomainExtent extent_;
  ClusterParams params_;
  EngineOptions options_;
  std::unique_ptr<WorkerPool> pool_;
  std::vector<ClusterCenter> centers_;
  AssignResult current_;
  int iterations_ = 0;
  bool converged_ = false;
  std::vector<IterationProgress> history_;
};

/// seed -> initial assignment -> repeat (update, converge check, reassign).
/// Output is independent of `options.workers`, `options.chunk_size` and the
/// kernel variant.
RunResult run(const SampleColumns& points, const SampleColumns& fields, const DomainExtent& extent,
              const ClusterParams& params, const EngineOptions& options = {},
              const ProgressSink& progress = {});

}  // namespace mfseg
