#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfseg/field.hpp"
#include "mfseg/model.hpp"
#include "mfseg/points.hpp"

namespace mfseg {

/// Point samples bucketed by (field cell, field timestep interval). Buckets
/// are stored sparsely, sorted by key; point indices ascend within a bucket.
class LinkIndex {
 public:
  struct Bucket {
    std::size_t cell = 0;
    std::size_t interval = 0;
    std::span<const std::size_t> points;
  };

  LinkIndex() = default;
  LinkIndex(std::size_t cells, std::size_t intervals, std::vector<std::size_t> keys,
            std::vector<std::size_t> offsets, std::vector<std::size_t> points);

  std::size_t intervals() const { return intervals_; }
  std::size_t bucket_count() const { return keys_.size(); }
  Bucket bucket_at(std::size_t n) const;
  /// Points in (cell, interval); empty when the bucket holds none.
  std::span<const std::size_t> bucket(std::size_t cell, std::size_t interval) const;
  std::size_t indexed_points() const { return points_.size(); }

 private:
  std::size_t cells_ = 0;
  std::size_t intervals_ = 0;
  std::vector<std::size_t> keys_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> points_;
};

/// Half-open cell boxes and time intervals [t_m, t_m+1) (last closed). Every
/// point must lie inside the grid and its time span; throws IngestError
/// otherwise. Requires at least two field timesteps.
LinkIndex build_link_index(const FieldGeometry& geometry, const PointSet& points, int workers = 1);

struct ValueRange {
  double min = 0;
  double max = 0;
};

struct NormalizationRecord {
  bool enabled = false;
  std::optional<ValueRange> point;
  std::optional<ValueRange> field;

  /// Maps an engine-space value back to original units.
  double to_original(bool point_kind, double v) const;
  /// Scale for spreads (standard deviations) in original units.
  double scale(bool point_kind) const;
};

/// Min-max maps each kind's values to [0, 1] independently when enabled. A
/// degenerate range maps every value to 0 and adds a warning.
NormalizationRecord normalize_variables(SampleColumns* points, SampleColumns* fields, bool enabled,
                                        std::vector<std::string>* warnings = nullptr);

/// Both kinds of a dataset as the engine sees them.
struct Dataset {
  std::optional<FieldGrid> field;
  PointSet points;
  DomainExtent extent;
  SampleColumns field_columns;
  PointLoadReport point_report;
  bool has_points = false;
};

/// Domain of the field grid: spatial box x [t_first, t_last]. Throws
/// IngestError when the field has a single timestep.
DomainExtent field_extent(const FieldGeometry& geometry);
/// Bounding box of the points; degenerate axes are widened to +-0.5.
DomainExtent point_extent(const PointSet& points);

/// Loads either or both inputs. With a field, points outside its domain are
/// dropped and counted in `point_report`.
Dataset load_dataset(const std::optional<std::filesystem::path>& field_path,
                     const std::optional<std::filesystem::path>& points_path, const std::string& expression = {});

}  // namespace mfseg
