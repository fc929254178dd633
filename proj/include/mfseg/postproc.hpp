#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfseg/model.hpp"
#include "mfseg/points.hpp"

namespace mfseg {

/// Symmetric percent difference 2|a-b| / (|a| + |b| + 1e-12).
double percent_difference(double a, double b);

/// Both value averages must match within eps_m. A kind present on one side
/// and absent on the other never matches; absent on both sides does.
bool merge_eligible(const ClusterCenter& a, const ClusterCenter& b, double eps_m);

/// merge_map[original id] = merged id, kNoCluster for ids without a center.
using MergeMap = std::vector<ClusterId>;

struct MergeResult {
  MergeMap merge_map;
  /// One center per merged group, ascending id, count-weighted means.
  std::vector<ClusterCenter> centers;
};

/// Transitive closure of merge_eligible over the given centers. A group takes
/// the lowest member id. Locations play no part in eligibility.
MergeResult merge_clusters(std::span<const ClusterCenter> centers, double eps_m);

MergeMap identity_merge_map(std::span<const ClusterCenter> centers);

/// Count-weighted combination of centers (ascending id order).
ClusterCenter combine_centers(std::span<const ClusterCenter> members, ClusterId id);

/// Count, mean and sum of squared deviations of one value kind.
struct ValueStats {
  std::int64_t n = 0;
  double mean = 0;
  double m2 = 0;

  double stddev() const;
  /// Pooled statistics of two disjoint sample sets.
  static ValueStats combine(const ValueStats& a, const ValueStats& b);
  /// Two-pass statistics of a value list.
  static ValueStats of(std::span<const double> values);
};

struct FeatureStats {
  ValueStats point;
  ValueStats field;
  /// 4D bounding box over all member samples (x, y, z, t).
  Dims4 box_min{};
  Dims4 box_max{};

  std::int64_t samples() const { return point.n + field.n; }
  static FeatureStats combine(const FeatureStats& a, const FeatureStats& b);
};

/// A cluster (original or merged) with its statistics; values in original
/// variable units.
struct ClusterSummary {
  ClusterCenter center;
  FeatureStats stats;
  std::vector<ClusterId> members;
};

/// Per-cluster statistics from the labels. `points`/`fields` hold original
/// (un-normalized) values in sample order. Center values p/f are replaced by
/// the original-unit means; locations and counts come from the segmentation.
std::vector<ClusterSummary> summarize_clusters(const Segmentation& seg, const SampleColumns& points,
                                               const SampleColumns& fields);

/// Groups summaries through `map` (ascending merged id).
std::vector<ClusterSummary> merge_summaries(std::span<const ClusterSummary> clusters, const MergeMap& map);

struct Polyline {
  std::int64_t trajectory_id = 0;
  /// Point sample indices, consecutive timesteps.
  std::vector<std::size_t> points;
};

struct Feature {
  ClusterId id = 0;
  std::vector<ClusterId> members;
  std::vector<Polyline> polylines;
  std::vector<std::size_t> isolated_points;
  /// Per field timestep, ascending cell indices.
  std::vector<std::vector<std::uint32_t>> voxels;
  FeatureStats stats;
};

/// Splits a trajectory (indices ordered by time) into runs of the same
/// feature over consecutive timesteps. Runs of one sample become isolated.
void split_trajectory(std::span<const std::size_t> ordered, std::span<const int> step,
                      std::span<const ClusterId> feature_of, std::int64_t trajectory_id,
                      std::vector<Polyline>& polylines, std::vector<std::pair<ClusterId, std::size_t>>& isolated);

/// One feature per merged cluster. `field_values` holds the field samples in
/// sample order (timestep-major) with original values; `cells` is the number
/// of grid cells per timestep (0 without a field).
std::vector<Feature> build_features(const Segmentation& seg, const MergeMap& map, const PointSet& points,
                                    const SampleColumns& field_values, std::size_t cells);

/// Statistics straight from a feature's member samples.
FeatureStats feature_stats(const Feature& feature, const SampleColumns& points, const SampleColumns& field_values,
                           std::size_t cells);

struct Predicate {
  std::string property;
  double min = 0;
  double max = 0;
};

/// Conjunction of inclusive range predicates over center-table properties.
class CenterQuery {
 public:
  CenterQuery() = default;
  explicit CenterQuery(std::vector<Predicate> predicates);

  /// "<property>=<min>:<max>"; throws QueryError.
  static Predicate parse_predicate(std::string_view text);
  static CenterQuery parse(std::span<const std::string> texts);

  const std::vector<Predicate>& predicates() const { return predicates_; }
  bool matches(const ClusterSummary& row) const;

 private:
  std::vector<Predicate> predicates_;
};

/// Queryable property names.
const std::vector<std::string>& center_properties();

/// Value of a named property; std::nullopt for an absent value average.
/// Throws QueryError for unknown names.
std::optional<double> center_property(const ClusterSummary& row, std::string_view name);

/// Ids of matching rows, ascending.
std::vector<ClusterId> query_centers(std::span<const ClusterSummary> table, const CenterQuery& query);

}  // namespace mfseg
