#pragma once

// Segmentation artifacts and the steps that produce them. The CLI and the
// HTTP service both go through these functions, so equal inputs give equal
// bytes.
//
// Artifact directory:
//   segmentation.json   parameters, extent, normalization, per-cluster table
//   point_labels.bin    int32 little-endian, one per point sample
//   field_labels.bin    int32 little-endian, one per field sample
//   report.json         run report (iterations, warnings, sample counts)
//   timing.json         wall-clock timings (not reproducible by nature)
//   merge.json          merge map and merged center table
//   features.json       features with polylines, voxel sets and statistics

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfseg/engine.hpp"
#include "mfseg/ingest.hpp"
#include "mfseg/model.hpp"
#include "mfseg/postproc.hpp"

namespace mfseg {

struct DatasetSource {
  std::optional<std::filesystem::path> field;
  std::optional<std::filesystem::path> points;
  std::string derive;

  /// Absolute, normalized paths so artifacts do not depend on the caller's
  /// working directory.
  DatasetSource resolved() const;
  Dataset load() const;
};

struct MergeArtifacts {
  double eps_m = 0;
  MergeMap map;
  std::vector<ClusterSummary> table;
};

struct SegmentationArtifacts {
  DatasetSource source;
  DomainExtent extent;
  NormalizationRecord normalization;
  /// Labels, engine-space centers, parameters, iteration count.
  Segmentation segmentation;
  /// Per-cluster statistics in original units, ascending id.
  std::vector<ClusterSummary> clusters;
  std::vector<IterationProgress> iterations;
  std::vector<std::string> warnings;
  std::size_t dropped_empty_clusters = 0;
  PointLoadReport point_report;
  std::size_t field_samples = 0;
  std::array<int, 3> field_dims{0, 0, 0};
  std::size_t field_timesteps = 0;
  EngineOptions options;
  std::string kernel;
  double seconds = 0;
  MergeArtifacts merge;
};

/// Validates `params` for the kinds present, normalizes a copy of the values,
/// runs the engine, summarizes clusters and merges at params.eps_m.
SegmentationArtifacts segment_dataset(const Dataset& data, const DatasetSource& source, const ClusterParams& params,
                                      const EngineOptions& options = {}, const ProgressSink& progress = {});

MergeArtifacts merge_artifacts(const std::vector<ClusterSummary>& clusters, double eps_m);

void write_segmentation(const SegmentationArtifacts& a, const std::filesystem::path& dir);
/// Reads segmentation.json, the label files and merge.json when present.
/// Throws Error on missing or inconsistent artifacts.
SegmentationArtifacts load_segmentation(const std::filesystem::path& dir);
void write_merge(const MergeArtifacts& m, const std::filesystem::path& dir);

/// Documents (also used as HTTP response bodies).
nlohmann::ordered_json params_json(const ClusterParams& p);
/// Throws ParameterError naming the offending field.
ClusterParams params_from_json(const nlohmann::json& doc, const ClusterParams& defaults = {});
nlohmann::ordered_json center_row_json(const ClusterSummary& row);
nlohmann::ordered_json merge_json(const MergeArtifacts& m);
nlohmann::ordered_json report_json(const SegmentationArtifacts& a);
nlohmann::ordered_json stats_json(const FeatureStats& s);
nlohmann::ordered_json features_json(const std::vector<Feature>& features, const MergeArtifacts& m);

/// Features of a saved segmentation; `data` must be the dataset it came from.
std::vector<Feature> features_for(const SegmentationArtifacts& a, const Dataset& data);

/// Writes `doc` as two-space indented text plus a trailing newline.
void write_json(const nlohmann::ordered_json& doc, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace mfseg
