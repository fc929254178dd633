#pragma once

// Time-varying scalar field on a fixed rectilinear grid.
//
// On disk a field is a JSON metadata document plus one raw little-endian array
// per timestep, x varying fastest:
//
//   {
//     "dims": [Nx, Ny, Nz],
//     "origin": [ox, oy, oz],
//     "spacing": [sx, sy, sz],
//     "times": [t0, t1, ...],
//     "variable": "name",
//     "data_files": ["step_0000.raw", ...],   // relative to the metadata file
//     "dtype": "f32" | "f64",
//     "order": "x_fastest"
//   }

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfseg/model.hpp"

namespace mfseg {

enum class Dtype { F32, F64 };

struct FieldGeometry {
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> origin{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::vector<double> times;

  std::size_t cells() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
  std::size_t timesteps() const { return times.size(); }
  std::size_t cell_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
  }
  std::array<int, 3> cell_coords(std::size_t cell) const;
  /// Cell center: origin + (index + 0.5) * spacing.
  std::array<double, 3> cell_center(int i, int j, int k) const;
  /// Upper spatial corner of the grid.
  std::array<double, 3> upper() const;
  /// Cell whose half-open box [origin + i s, origin + (i+1) s) holds `p`; the
  /// upper domain face belongs to the last cell. std::nullopt outside the grid.
  std::optional<std::array<int, 3>> locate(double x, double y, double z) const;
  /// Index m with times[m] <= t < times[m+1] (last interval closed), or
  /// std::nullopt outside [times.front(), times.back()] or with < 2 timesteps.
  std::optional<std::size_t> interval_of(double t) const;
};

struct FieldGrid {
  FieldGeometry geometry;
  std::string variable = "f";
  Dtype dtype = Dtype::F64;
  /// Data file names as listed in the metadata (used when writing).
  std::vector<std::string> data_files;
  /// timesteps * cells values, timestep-major, x fastest within a timestep.
  std::vector<double> values;

  std::size_t sample_count() const { return values.size(); }
  FieldSample sample(std::size_t index) const;
  /// Engine-ready columns in sample order.
  SampleColumns columns() const;
};

/// Throws IngestError on malformed metadata, missing or truncated payloads,
/// non-monotone times or non-finite values. Nothing is returned on error.
FieldGrid load_field(const std::filesystem::path& metadata_path);

/// Writes metadata and data files next to it. Data file names default to
/// "<stem>_NNNN.raw" when `grid.data_files` is empty.
void write_field(const FieldGrid& grid, const std::filesystem::path& metadata_path);

/// Checks dims/spacing/times consistency; throws IngestError.
void validate_geometry(const FieldGeometry& geometry);

}  // namespace mfseg
