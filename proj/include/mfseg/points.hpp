#pragma once

// Point/trajectory samples. On disk: comma-separated text, header row first,
// required columns id, t, x, y, z; every other column is a raw variable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfseg/model.hpp"

namespace mfseg {

struct PointSet {
  SampleColumns cols;
  std::vector<std::int64_t> trajectory;
  /// Index of each sample's time in `times`.
  std::vector<int> step;
  /// Distinct point times, ascending.
  std::vector<double> times;

  std::size_t size() const { return cols.size(); }
  PointSample at(std::size_t i) const;
  void push(const PointSample& s);
  /// Rebuilds `times` and `step` from the sample times.
  void index_steps();
};

/// Names usable in a derivation expression besides the raw columns.
/// path_length and displacement are per-trajectory totals broadcast to every
/// sample; speed is per sample (backward difference, forward for the first
/// sample, 0 for single-sample trajectories).
const std::vector<std::string>& derived_variable_names();

struct PointLoadReport {
  std::size_t total_records = 0;
  std::size_t accepted = 0;
  std::size_t rejected_out_of_domain = 0;
  std::vector<std::string> raw_columns;
  std::string expression;
};

struct PointLoadResult {
  PointSet points;
  PointLoadReport report;
};

/// Parses records, evaluates `expression` (empty: the first raw column) into
/// v_p and drops samples outside `domain` when given. Throws IngestError on
/// malformed input, unknown names, non-increasing times within a trajectory
/// and non-finite results.
PointLoadResult load_points(const std::filesystem::path& path, const std::string& expression = {},
                            const std::optional<DomainExtent>& domain = std::nullopt);
PointLoadResult parse_points(std::istream& in, const std::string& source_name, const std::string& expression = {},
                             const std::optional<DomainExtent>& domain = std::nullopt);

/// Writes id,t,x,y,z,<value_column> with round-trip precision.
void write_points(const PointSet& points, const std::filesystem::path& path, const std::string& value_column = "v");

}  // namespace mfseg
