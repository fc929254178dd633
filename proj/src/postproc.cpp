#include "mfseg/postproc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "mfseg/error.hpp"

namespace mfseg {

namespace {

constexpr double kDelta = 1e-12;

bool values_match(const std::optional<double>& a, const std::optional<double>& b, double eps_m) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return *a == *b || percent_difference(*a, *b) < eps_m;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  // the smaller root wins, so every root is its group's lowest index
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<ClusterCenter> sorted_by_id(std::span<const ClusterCenter> centers) {
  std::vector<ClusterCenter> v(centers.begin(), centers.end());
  std::sort(v.begin(), v.end(), [](const ClusterCenter& a, const ClusterCenter& b) { return a.id < b.id; });
  return v;
}

std::size_t map_size(std::span<const ClusterCenter> centers) {
  ClusterId hi = -1;
  for (const auto& c : centers) hi = std::max(hi, c.id);
  return static_cast<std::size_t>(hi + 1);
}

const Dims4 kEmptyMin{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
const Dims4 kEmptyMax{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                      -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

void grow(Dims4& lo, Dims4& hi, const Location4& p) {
  const double c[4] = {p.x, p.y, p.z, p.t};
  for (int a = 0; a < 4; ++a) {
    lo[a] = std::min(lo[a], c[a]);
    hi[a] = std::max(hi[a], c[a]);
  }
}

std::vector<std::size_t> index_of_ids(std::span<const ClusterCenter> centers) {
  std::vector<std::size_t> idx(map_size(centers), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < centers.size(); ++i) idx[static_cast<std::size_t>(centers[i].id)] = i;
  return idx;
}

}  // namespace

double percent_difference(double a, double b) { return 2 * std::fabs(a - b) / (std::fabs(a) + std::fabs(b) + kDelta); }

bool merge_eligible(const ClusterCenter& a, const ClusterCenter& b, double eps_m) {
  return values_match(a.p, b.p, eps_m) && values_match(a.f, b.f, eps_m);
}

MergeMap identity_merge_map(std::span<const ClusterCenter> centers) {
  MergeMap map(map_size(centers), kNoCluster);
  for (const auto& c : centers) map[static_cast<std::size_t>(c.id)] = c.id;
  return map;
}

ClusterCenter combine_centers(std::span<const ClusterCenter> members, ClusterId id) {
  ClusterCenter out;
  if (members.size() == 1) {
    out = members.front();
    out.id = id;
    out.dormant = false;
    return out;
  }
  out.id = id;
  double sx = 0, sy = 0, sz = 0, st = 0, sp = 0, sf = 0;
  std::int64_t n = 0;
  for (const auto& c : members) {
    const auto w = static_cast<double>(c.size());
    sx += w * c.x;
    sy += w * c.y;
    sz += w * c.z;
    st += w * c.t;
    n += c.size();
    if (c.p) sp += static_cast<double>(c.n_points) * *c.p;
    if (c.f) sf += static_cast<double>(c.n_fields) * *c.f;
    out.n_points += c.n_points;
    out.n_fields += c.n_fields;
  }
  if (n > 0) {
    const auto nd = static_cast<double>(n);
    out.x = sx / nd;
    out.y = sy / nd;
    out.z = sz / nd;
    out.t = st / nd;
  }
  if (out.n_points > 0) out.p = sp / static_cast<double>(out.n_points);
  if (out.n_fields > 0) out.f = sf / static_cast<double>(out.n_fields);
  return out;
}

MergeResult merge_clusters(std::span<const ClusterCenter> input, double eps_m) {
  const auto centers = sorted_by_id(input);
  DisjointSets sets(centers.size());
  for (std::size_t a = 0; a < centers.size(); ++a) {
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      if (merge_eligible(centers[a], centers[b], eps_m)) sets.unite(a, b);
    }
  }
  MergeResult out;
  out.merge_map.assign(map_size(centers), kNoCluster);
  std::vector<std::vector<ClusterCenter>> groups(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const std::size_t root = sets.find(i);
    out.merge_map[static_cast<std::size_t>(centers[i].id)] = centers[root].id;
    groups[root].push_back(centers[i]);
  }
  for (std::size_t r = 0; r < groups.size(); ++r) {
    if (!groups[r].empty()) out.centers.push_back(combine_centers(groups[r], centers[r].id));
  }
  return out;
}

double ValueStats::stddev() const { return n > 0 ? std::sqrt(m2 / static_cast<double>(n)) : 0.0; }

ValueStats ValueStats::combine(const ValueStats& a, const ValueStats& b) {
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  ValueStats out;
  out.n = a.n + b.n;
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n), n = static_cast<double>(out.n);
  const double delta = b.mean - a.mean;
  out.mean = a.mean + delta * nb / n;
  out.m2 = a.m2 + b.m2 + delta * delta * na * nb / n;
  return out;
}

ValueStats ValueStats::of(std::span<const double> values) {
  ValueStats s;
  s.n = static_cast<std::int64_t>(values.size());
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  for (double v : values) s.m2 += (v - s.mean) * (v - s.mean);
  return s;
}

FeatureStats FeatureStats::combine(const FeatureStats& a, const FeatureStats& b) {
  FeatureStats out;
  out.point = ValueStats::combine(a.point, b.point);
  out.field = ValueStats::combine(a.field, b.field);
  for (int i = 0; i < 4; ++i) {
    out.box_min[i] = std::min(a.box_min[i], b.box_min[i]);
    out.box_max[i] = std::max(a.box_max[i], b.box_max[i]);
  }
  return out;
}

std::vector<ClusterSummary> summarize_clusters(const Segmentation& seg, const SampleColumns& points,
                                               const SampleColumns& fields) {
  const auto idx = index_of_ids(seg.centers);
  const std::size_t n = seg.centers.size();
  std::vector<double> psum(n, 0), fsum(n, 0);
  std::vector<std::int64_t> pn(n, 0), fn(n, 0);
  std::vector<Dims4> lo(n, kEmptyMin), hi(n, kEmptyMax);
  auto row = [&](ClusterId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= idx.size() || idx[static_cast<std::size_t>(id)] >= n) {
      throw Error("label " + std::to_string(id) + " has no live center");
    }
    return idx[static_cast<std::size_t>(id)];
  };
  for (std::size_t i = 0; i < seg.point_labels.size(); ++i) {
    const std::size_t r = row(seg.point_labels[i]);
    psum[r] += points.v[i];
    ++pn[r];
    grow(lo[r], hi[r], points.location(i));
  }
  for (std::size_t i = 0; i < seg.field_labels.size(); ++i) {
    const std::size_t r = row(seg.field_labels[i]);
    fsum[r] += fields.v[i];
    ++fn[r];
    grow(lo[r], hi[r], fields.location(i));
  }
  std::vector<ClusterSummary> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto& s = out[r];
    s.center = seg.centers[r];
    s.center.dormant = false;
    s.members = {s.center.id};
    s.stats.point.n = pn[r];
    s.stats.field.n = fn[r];
    if (pn[r] > 0) s.stats.point.mean = psum[r] / static_cast<double>(pn[r]);
    if (fn[r] > 0) s.stats.field.mean = fsum[r] / static_cast<double>(fn[r]);
    s.stats.box_min = lo[r];
    s.stats.box_max = hi[r];
  }
  for (std::size_t i = 0; i < seg.point_labels.size(); ++i) {
    auto& st = out[row(seg.point_labels[i])].stats.point;
    st.m2 += (points.v[i] - st.mean) * (points.v[i] - st.mean);
  }
  for (std::size_t i = 0; i < seg.field_labels.size(); ++i) {
    auto& st = out[row(seg.field_labels[i])].stats.field;
    st.m2 += (fields.v[i] - st.mean) * (fields.v[i] - st.mean);
  }
  for (auto& s : out) {
    s.center.n_points = s.stats.point.n;
    s.center.n_fields = s.stats.field.n;
    s.center.p = s.stats.point.n > 0 ? std::optional<double>(s.stats.point.mean) : std::nullopt;
    s.center.f = s.stats.field.n > 0 ? std::optional<double>(s.stats.field.mean) : std::nullopt;
  }
  return out;
}

std::vector<ClusterSummary> merge_summaries(std::span<const ClusterSummary> clusters, const MergeMap& map) {
  std::vector<ClusterSummary> sorted(clusters.begin(), clusters.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ClusterSummary& a, const ClusterSummary& b) { return a.center.id < b.center.id; });
  std::vector<ClusterId> targets;
  for (const auto& s : sorted) {
    const auto id = static_cast<std::size_t>(s.center.id);
    if (id >= map.size() || map[id] == kNoCluster) throw Error("merge map lacks cluster " + std::to_string(id));
    targets.push_back(map[id]);
  }
  std::vector<ClusterId> merged_ids = targets;
  std::sort(merged_ids.begin(), merged_ids.end());
  merged_ids.erase(std::unique(merged_ids.begin(), merged_ids.end()), merged_ids.end());
  std::vector<ClusterSummary> out;
  for (ClusterId m : merged_ids) {
    std::vector<ClusterCenter> centers;
    ClusterSummary g;
    bool first = true;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (targets[i] != m) continue;
      centers.push_back(sorted[i].center);
      g.stats = first ? sorted[i].stats : FeatureStats::combine(g.stats, sorted[i].stats);
      g.members.insert(g.members.end(), sorted[i].members.begin(), sorted[i].members.end());
      first = false;
    }
    g.center = combine_centers(centers, m);
    std::sort(g.members.begin(), g.members.end());
    out.push_back(std::move(g));
  }
  return out;
}

void split_trajectory(std::span<const std::size_t> ordered, std::span<const int> step,
                      std::span<const ClusterId> feature_of, std::int64_t trajectory_id,
                      std::vector<Polyline>& polylines, std::vector<std::pair<ClusterId, std::size_t>>& isolated) {
  std::size_t start = 0;
  while (start < ordered.size()) {
    std::size_t end = start + 1;
    while (end < ordered.size() && feature_of[ordered[end]] == feature_of[ordered[start]] &&
           step[ordered[end]] == step[ordered[end - 1]] + 1) {
      ++end;
    }
    if (end - start >= 2) {
      Polyline line;
      line.trajectory_id = trajectory_id;
      line.points.assign(ordered.begin() + static_cast<std::ptrdiff_t>(start),
                         ordered.begin() + static_cast<std::ptrdiff_t>(end));
      polylines.push_back(std::move(line));
    } else {
      isolated.emplace_back(feature_of[ordered[start]], ordered[start]);
    }
    start = end;
  }
}

std::vector<Feature> build_features(const Segmentation& seg, const MergeMap& map, const PointSet& points,
                                    const SampleColumns& field_values, std::size_t cells) {
  const MergeMap m = map.empty() ? identity_merge_map(seg.centers) : map;
  auto merged_of = [&](ClusterId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= m.size() || m[static_cast<std::size_t>(id)] == kNoCluster) {
      throw Error("label " + std::to_string(id) + " is not covered by the merge map");
    }
    return m[static_cast<std::size_t>(id)];
  };

  std::vector<Feature> features;
  std::vector<std::size_t> slot(m.size(), std::numeric_limits<std::size_t>::max());
  for (const auto& c : sorted_by_id(seg.centers)) {
    const ClusterId target = merged_of(c.id);
    if (slot[static_cast<std::size_t>(target)] == std::numeric_limits<std::size_t>::max()) {
      slot[static_cast<std::size_t>(target)] = 0;
      Feature f;
      f.id = target;
      features.push_back(std::move(f));
    }
  }
  std::sort(features.begin(), features.end(), [](const Feature& a, const Feature& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < features.size(); ++i) slot[static_cast<std::size_t>(features[i].id)] = i;
  for (const auto& c : sorted_by_id(seg.centers)) {
    features[slot[static_cast<std::size_t>(merged_of(c.id))]].members.push_back(c.id);
  }
  auto feature_index = [&](ClusterId merged) { return slot[static_cast<std::size_t>(merged)]; };

  // trajectories, each ordered by time
  std::vector<ClusterId> point_feature(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) point_feature[i] = merged_of(seg.point_labels[i]);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points.trajectory[a] != points.trajectory[b]) return points.trajectory[a] < points.trajectory[b];
    return points.cols.t[a] < points.cols.t[b];
  });
  std::vector<Polyline> lines;
  std::vector<std::pair<ClusterId, std::size_t>> isolated;
  for (std::size_t b = 0; b < order.size();) {
    std::size_t e = b + 1;
    while (e < order.size() && points.trajectory[order[e]] == points.trajectory[order[b]]) ++e;
    split_trajectory(std::span<const std::size_t>(order).subspan(b, e - b), points.step, point_feature,
                     points.trajectory[order[b]], lines, isolated);
    b = e;
  }
  for (auto& line : lines) {
    features[feature_index(point_feature[line.points.front()])].polylines.push_back(std::move(line));
  }
  for (const auto& [feature, index] : isolated) features[feature_index(feature)].isolated_points.push_back(index);

  if (cells > 0) {
    const std::size_t steps = seg.field_labels.size() / cells;
    for (auto& f : features) f.voxels.assign(steps, {});
    for (std::size_t s = 0; s < seg.field_labels.size(); ++s) {
      features[feature_index(merged_of(seg.field_labels[s]))].voxels[s / cells].push_back(
          static_cast<std::uint32_t>(s % cells));
    }
  }
  for (auto& f : features) f.stats = feature_stats(f, points.cols, field_values, cells);
  return features;
}

FeatureStats feature_stats(const Feature& feature, const SampleColumns& points, const SampleColumns& field_values,
                           std::size_t cells) {
  std::vector<std::size_t> pidx = feature.isolated_points;
  for (const auto& line : feature.polylines) pidx.insert(pidx.end(), line.points.begin(), line.points.end());
  std::sort(pidx.begin(), pidx.end());
  FeatureStats s;
  s.box_min = kEmptyMin;
  s.box_max = kEmptyMax;
  std::vector<double> values;
  values.reserve(pidx.size());
  for (std::size_t i : pidx) {
    values.push_back(points.v[i]);
    grow(s.box_min, s.box_max, points.location(i));
  }
  s.point = ValueStats::of(values);
  values.clear();
  for (std::size_t step = 0; step < feature.voxels.size(); ++step) {
    for (std::uint32_t cell : feature.voxels[step]) {
      const std::size_t i = step * cells + cell;
      values.push_back(field_values.v[i]);
      grow(s.box_min, s.box_max, field_values.location(i));
    }
  }
  s.field = ValueStats::of(values);
  return s;
}

const std::vector<std::string>& center_properties() {
  static const std::vector<std::string> names{"x_c",     "y_c",      "z_c",      "t_c",      "p_c",
                                              "f_c",     "n_points", "n_fields", "p_std",    "f_std",
                                              "extent_x", "extent_y", "extent_z", "extent_t"};
  return names;
}

std::optional<double> center_property(const ClusterSummary& row, std::string_view name) {
  const auto& c = row.center;
  const auto& s = row.stats;
  if (name == "x_c") return c.x;
  if (name == "y_c") return c.y;
  if (name == "z_c") return c.z;
  if (name == "t_c") return c.t;
  if (name == "p_c") return c.p;
  if (name == "f_c") return c.f;
  if (name == "n_points") return static_cast<double>(c.n_points);
  if (name == "n_fields") return static_cast<double>(c.n_fields);
  if (name == "p_std") return s.point.n > 0 ? std::optional<double>(s.point.stddev()) : std::nullopt;
  if (name == "f_std") return s.field.n > 0 ? std::optional<double>(s.field.stddev()) : std::nullopt;
  const std::string_view axes[4] = {"extent_x", "extent_y", "extent_z", "extent_t"};
  for (int a = 0; a < 4; ++a) {
    if (name == axes[a]) {
      if (s.samples() == 0) return std::nullopt;
      return s.box_max[a] - s.box_min[a];
    }
  }
  throw QueryError("unknown property '" + std::string(name) + "'");
}

CenterQuery::CenterQuery(std::vector<Predicate> predicates) : predicates_(std::move(predicates)) {
  for (const auto& p : predicates_) {
    const auto& names = center_properties();
    if (std::find(names.begin(), names.end(), p.property) == names.end()) {
      throw QueryError("unknown property '" + p.property + "'");
    }
    if (!(p.min <= p.max)) throw QueryError("empty range for '" + p.property + "'");
  }
}

namespace {
double parse_bound(std::string_view text, double fallback, std::string_view whole) {
  if (text.empty()) return fallback;
  double v = 0;
  const char* b = text.data();
  const char* e = text.data() + text.size();
  if (*b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e || std::isnan(v)) {
    throw QueryError("malformed bound '" + std::string(text) + "' in predicate '" + std::string(whole) + "'");
  }
  return v;
}
}  // namespace

Predicate CenterQuery::parse_predicate(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw QueryError("predicate '" + std::string(text) + "' is not of the form property=min:max");
  }
  const auto range = text.substr(eq + 1);
  const auto colon = range.find(':');
  if (colon == std::string_view::npos) {
    throw QueryError("predicate '" + std::string(text) + "' is not of the form property=min:max");
  }
  Predicate p;
  p.property = std::string(text.substr(0, eq));
  p.min = parse_bound(range.substr(0, colon), -std::numeric_limits<double>::infinity(), text);
  p.max = parse_bound(range.substr(colon + 1), std::numeric_limits<double>::infinity(), text);
  return p;
}

CenterQuery CenterQuery::parse(std::span<const std::string> texts) {
  std::vector<Predicate> preds;
  for (const auto& t : texts) preds.push_back(parse_predicate(t));
  return CenterQuery(std::move(preds));
}

bool CenterQuery::matches(const ClusterSummary& row) const {
  for (const auto& p : predicates_) {
    const auto v = center_property(row, p.property);
    if (!v || *v < p.min || *v > p.max) return false;
  }
  return true;
}

std::vector<ClusterId> query_centers(std::span<const ClusterSummary> table, const CenterQuery& query) {
  std::vector<ClusterId> ids;
  for (const auto& row : table) {
    if (query.matches(row)) ids.push_back(row.center.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace mfseg
