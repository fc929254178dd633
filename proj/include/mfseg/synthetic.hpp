#pragma once

// Seeded synthetic multifaceted datasets with known ground truth.
//
// Spec document (JSON):
//   {
//     "extent": {"min": [x, y, z, t], "max": [x, y, z, t]},
//     "grid": [Nx, Ny, Nz],
//     "field_timesteps": 8, "point_timesteps": 16,
//     "background": {"field": 0.0, "point": 0.0, "trajectories": 100, "speed": 0.5},
//     "noise": {"field": 0.0, "point": 0.0},
//     "blobs": [{"center": [x, y, z, t], "radius": [rx, ry, rz, rt],
//                "velocity": [vx, vy, vz], "field": 1.0, "point": 1.0,
//                "trajectories": 20, "shape": "ellipsoid" | "box",
//                "profile": "flat" | "gaussian"}],
//     "seed": 42,
//     "dtype": "f64"
//   }
//
// A sample belongs to the first blob whose region contains it (label = blob
// index + 1), otherwise to the background (label 0). Values are a function of
// location: inside a blob the flat profile yields the blob value exactly, the
// gaussian profile blends from the blob value at the center toward the
// background value at the rim.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfseg/field.hpp"
#include "mfseg/ingest.hpp"
#include "mfseg/model.hpp"
#include "mfseg/points.hpp"

namespace mfseg {

enum class BlobShape { Ellipsoid, Box };
enum class BlobProfile { Flat, Gaussian };

struct BlobSpec {
  Dims4 center{};
  Dims4 radius{1, 1, 1, 1};
  std::array<double, 3> velocity{0, 0, 0};
  double field_value = 1;
  double point_value = 1;
  int trajectories = 0;
  BlobShape shape = BlobShape::Ellipsoid;
  BlobProfile profile = BlobProfile::Flat;

  /// Membership at the location's own time; the region moves with `velocity`.
  bool contains(const Location4& p) const;
  double value_at(const Location4& p, bool point_kind, double background) const;
};

struct SyntheticSpec {
  DomainExtent extent;
  std::array<int, 3> grid{8, 8, 8};
  int field_timesteps = 4;
  int point_timesteps = 8;
  std::vector<BlobSpec> blobs;
  double background_field = 0;
  double background_point = 0;
  int background_trajectories = 0;
  double background_speed = 0;
  double field_noise = 0;
  double point_noise = 0;
  std::uint64_t seed = 42;
  Dtype dtype = Dtype::F64;

  /// Throws SpecError on missing/invalid members or blobs leaving the extent.
  static SyntheticSpec from_json(const nlohmann::json& doc);
  static SyntheticSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

struct SyntheticDataset {
  FieldGrid field;
  PointSet points;
  /// Ground-truth label per field sample (field sample order) and per point.
  std::vector<int> field_truth;
  std::vector<int> point_truth;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Writes field.json (+ raw payloads), points.csv, field_truth.txt and
/// points_truth.txt (one integer per line, sample order) into `dir`.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

/// The dataset load_dataset would return for the written files, built in
/// memory.
Dataset to_dataset(const SyntheticDataset& data);

}  // namespace mfseg
