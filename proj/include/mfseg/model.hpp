#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfseg {

using ClusterId = std::int32_t;
inline constexpr ClusterId kNoCluster = -1;

/// Per-dimension quantity ordered x, y, z, t.
using Dims4 = std::array<double, 4>;
using Counts4 = std::array<int, 4>;

struct Location4 {
  double x = 0, y = 0, z = 0, t = 0;
};

/// Axis-aligned space-time box. Spans are strictly positive on every axis.
class DomainExtent {
 public:
  DomainExtent() = default;
  /// Throws ParameterError unless max > min on all four axes.
  DomainExtent(const Dims4& min, const Dims4& max);

  const Dims4& min() const { return min_; }
  const Dims4& max() const { return max_; }
  double span(int axis) const { return max_[axis] - min_[axis]; }
  Dims4 spans() const { return {span(0), span(1), span(2), span(3)}; }
  bool contains(const Location4& p) const;

 private:
  Dims4 min_{0, 0, 0, 0};
  Dims4 max_{1, 1, 1, 1};
};

struct PointSample {
  std::int64_t trajectory_id = 0;
  double t = 0, x = 0, y = 0, z = 0;
  double v = 0;
};

struct FieldSample {
  int i = 0, j = 0, k = 0;
  int timestep = 0;
  double x = 0, y = 0, z = 0, t = 0;
  double v = 0;
};

/// Six-value cluster summary. A value average is empty when the cluster holds
/// no sample of that kind.
struct ClusterCenter {
  ClusterId id = 0;
  double x = 0, y = 0, z = 0, t = 0;
  std::optional<double> p;
  std::optional<double> f;
  std::int64_t n_points = 0;
  std::int64_t n_fields = 0;
  /// Set when the cluster ended the last iteration without members.
  bool dormant = false;

  Location4 location() const { return {x, y, z, t}; }
  std::int64_t size() const { return n_points + n_fields; }
  bool operator==(const ClusterCenter&) const = default;
};

struct ClusterParams {
  Counts4 k{1, 1, 1, 1};
  double cf = 1.0;
  double wd = 1.0;
  double wp = 1.0;
  double wf = 1.0;
  double eps_c = 0.01;
  double eps_m = 0.01;
  int max_iterations = 50;
  bool normalize = true;

  int total_clusters() const { return k[0] * k[1] * k[2] * k[3]; }

  /// Throws ParameterError on the first violated constraint. The weight
  /// constraints only apply to sample kinds that are present.
  void validate(bool has_points = true, bool has_fields = true) const;
};

struct Segmentation {
  std::vector<ClusterId> point_labels;
  std::vector<ClusterId> field_labels;
  /// Live clusters only, ascending id.
  std::vector<ClusterCenter> centers;
  ClusterParams params;
  int iterations_used = 0;
  bool converged = false;
  std::optional<std::vector<ClusterId>> merge_map;

  const ClusterCenter* find_center(ClusterId id) const;
};

/// Structure-of-arrays sample storage used by the engine.
struct SampleColumns {
  std::vector<double> x, y, z, t, v;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
  void reserve(std::size_t n);
  void push(double px, double py, double pz, double pt, double pv);
  Location4 location(std::size_t i) const { return {x[i], y[i], z[i], t[i]}; }
};

/// C_i = E_i / k_i. Throws ParameterError for k_i < 1.
Dims4 interval_distances(const DomainExtent& extent, const Counts4& k);

/// 4D Euclidean distance with time converted to length by `cf`.
double space_time_distance(const Location4& a, const Location4& b, double cf);

}  // namespace mfseg
