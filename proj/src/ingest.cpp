#include "mfseg/ingest.hpp"

#include <algorithm>
#include <numeric>

#include "mfseg/error.hpp"
#include "mfseg/kernels.hpp"
#include "mfseg/parallel.hpp"

namespace mfseg {

LinkIndex::LinkIndex(std::size_t cells, std::size_t intervals, std::vector<std::size_t> keys,
                     std::vector<std::size_t> offsets, std::vector<std::size_t> points)
    : cells_(cells),
      intervals_(intervals),
      keys_(std::move(keys)),
      offsets_(std::move(offsets)),
      points_(std::move(points)) {}

LinkIndex::Bucket LinkIndex::bucket_at(std::size_t n) const {
  Bucket b;
  b.interval = keys_[n] / cells_;
  b.cell = keys_[n] % cells_;
  b.points = {points_.data() + offsets_[n], offsets_[n + 1] - offsets_[n]};
  return b;
}

std::span<const std::size_t> LinkIndex::bucket(std::size_t cell, std::size_t interval) const {
  const std::size_t key = interval * cells_ + cell;
  const auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it == keys_.end() || *it != key) return {};
  const auto n = static_cast<std::size_t>(it - keys_.begin());
  return {points_.data() + offsets_[n], offsets_[n + 1] - offsets_[n]};
}

LinkIndex build_link_index(const FieldGeometry& g, const PointSet& points, int workers) {
  if (g.timesteps() < 2) throw IngestError("link index needs at least two field timesteps");
  const std::size_t cells = g.cells();
  const std::size_t n = points.size();
  std::vector<std::size_t> key(n);
  std::vector<std::size_t> bad(static_cast<std::size_t>(std::max(1, workers)), n);
  WorkerPool pool(workers);
  pool.run([&](int w) {
    const auto [b, e] = split_range(n, w, pool.size());
    for (std::size_t i = b; i < e; ++i) {
      const auto cell = g.locate(points.cols.x[i], points.cols.y[i], points.cols.z[i]);
      const auto interval = g.interval_of(points.cols.t[i]);
      if (!cell || !interval) {
        bad[static_cast<std::size_t>(w)] = std::min(bad[static_cast<std::size_t>(w)], i);
        continue;
      }
      key[i] = *interval * cells + g.cell_index((*cell)[0], (*cell)[1], (*cell)[2]);
    }
  });
  const std::size_t first_bad = *std::min_element(bad.begin(), bad.end());
  if (first_bad < n) throw IngestError("point sample " + std::to_string(first_bad) + " lies outside the field domain");

  // stable order by key keeps point indices ascending inside each bucket
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  std::vector<std::size_t> keys, offsets;
  for (std::size_t r = 0; r < n; ++r) {
    if (r == 0 || key[order[r]] != key[order[r - 1]]) {
      keys.push_back(key[order[r]]);
      offsets.push_back(r);
    }
  }
  offsets.push_back(n);
  return LinkIndex(cells, g.timesteps() - 1, std::move(keys), std::move(offsets), std::move(order));
}

double NormalizationRecord::to_original(bool point_kind, double v) const {
  const auto& r = point_kind ? point : field;
  if (!enabled || !r) return v;
  return r->min + v * (r->max - r->min);
}

double NormalizationRecord::scale(bool point_kind) const {
  const auto& r = point_kind ? point : field;
  if (!enabled || !r) return 1.0;
  return r->max - r->min;
}

NormalizationRecord normalize_variables(SampleColumns* points, SampleColumns* fields, bool enabled,
                                        std::vector<std::string>* warnings) {
  NormalizationRecord rec;
  rec.enabled = enabled;
  if (!enabled) return rec;
  const auto& k = kernels::select();
  for (int kind = 0; kind < 2; ++kind) {
    SampleColumns* cols = kind == 0 ? points : fields;
    if (cols == nullptr || cols->empty()) continue;
    const auto mm = k.minmax(cols->v);
    const ValueRange range{mm.min, mm.max};
    (kind == 0 ? rec.point : rec.field) = range;
    if (!(range.max > range.min)) {
      std::fill(cols->v.begin(), cols->v.end(), 0.0);
      if (warnings) {
        warnings->push_back(std::string(kind == 0 ? "point" : "field") +
                            " variable has a degenerate range; all values mapped to 0");
      }
      continue;
    }
    const double span = range.max - range.min;
    for (double& v : cols->v) v = (v - range.min) / span;
  }
  return rec;
}

DomainExtent field_extent(const FieldGeometry& g) {
  if (g.timesteps() < 2) {
    throw IngestError("field has a single timestep; at least two are needed to span a time extent");
  }
  const auto hi = g.upper();
  return DomainExtent({g.origin[0], g.origin[1], g.origin[2], g.times.front()}, {hi[0], hi[1], hi[2], g.times.back()});
}

DomainExtent point_extent(const PointSet& points) {
  if (points.size() == 0) throw IngestError("no point samples");
  const std::vector<double>* cols[4] = {&points.cols.x, &points.cols.y, &points.cols.z, &points.cols.t};
  Dims4 lo{}, hi{};
  for (int a = 0; a < 4; ++a) {
    const auto [mn, mx] = std::minmax_element(cols[a]->begin(), cols[a]->end());
    lo[a] = *mn;
    hi[a] = *mx;
    if (!(hi[a] > lo[a])) {
      lo[a] -= 0.5;
      hi[a] += 0.5;
    }
  }
  return DomainExtent(lo, hi);
}

Dataset load_dataset(const std::optional<std::filesystem::path>& field_path,
                     const std::optional<std::filesystem::path>& points_path, const std::string& expression) {
  if (!field_path && !points_path) throw IngestError("need a field and/or a point file");
  Dataset ds;
  std::optional<DomainExtent> domain;
  if (field_path) {
    ds.field = load_field(*field_path);
    ds.extent = field_extent(ds.field->geometry);
    domain = ds.extent;
    ds.field_columns = ds.field->columns();
  }
  if (points_path) {
    auto loaded = load_points(*points_path, expression, domain);
    ds.points = std::move(loaded.points);
    ds.point_report = std::move(loaded.report);
    ds.has_points = true;
    if (!field_path) ds.extent = point_extent(ds.points);
  }
  return ds;
}

}  // namespace mfseg
