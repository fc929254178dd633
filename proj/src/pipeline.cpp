#include "mfseg/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mfseg/error.hpp"
#include "mfseg/kernels.hpp"

namespace mfseg {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "label files are written as little-endian int32");

namespace {

constexpr const char* kFormat = "mfseg-segmentation";
constexpr int kVersion = 1;

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json dims_json(const Dims4& d) {
  ordered_json a = ordered_json::array();
  for (double v : d) a.push_back(finite_or_null(v));
  return a;
}

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

Dims4 dims_from(const json& j) {
  Dims4 d{};
  if (!j.is_array() || j.size() != 4) throw Error("expected an array of four numbers");
  for (std::size_t i = 0; i < 4; ++i) d[i] = j[i].get<double>();
  return d;
}

ordered_json source_json(const DatasetSource& s) {
  ordered_json j;
  j["field"] = s.field ? ordered_json(s.field->string()) : ordered_json(nullptr);
  j["points"] = s.points ? ordered_json(s.points->string()) : ordered_json(nullptr);
  j["derive"] = s.derive;
  return j;
}

DatasetSource source_from(const json& j) {
  DatasetSource s;
  if (!j.at("field").is_null()) s.field = j["field"].get<std::string>();
  if (!j.at("points").is_null()) s.points = j["points"].get<std::string>();
  s.derive = j.value("derive", std::string());
  return s;
}

ordered_json range_json(const std::optional<ValueRange>& r) {
  if (!r) return nullptr;
  return ordered_json{{"min", r->min}, {"max", r->max}};
}

std::optional<ValueRange> range_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return ValueRange{j.at("min").get<double>(), j.at("max").get<double>()};
}

ordered_json cluster_json(const ClusterSummary& s, const ClusterCenter& engine) {
  ordered_json j;
  j["id"] = s.center.id;
  j["x"] = s.center.x;
  j["y"] = s.center.y;
  j["z"] = s.center.z;
  j["t"] = s.center.t;
  j["p"] = opt(s.center.p);
  j["f"] = opt(s.center.f);
  j["p_engine"] = opt(engine.p);
  j["f_engine"] = opt(engine.f);
  j["n_points"] = s.center.n_points;
  j["n_fields"] = s.center.n_fields;
  j["p_m2"] = s.stats.point.m2;
  j["f_m2"] = s.stats.field.m2;
  j["box_min"] = dims_json(s.stats.box_min);
  j["box_max"] = dims_json(s.stats.box_max);
  return j;
}

void write_labels(const std::vector<ClusterId>& labels, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(ClusterId)));
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<ClusterId> read_labels(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error("missing artifact " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(ClusterId)) {
    throw Error(path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                std::to_string(expected * sizeof(ClusterId)));
  }
  in.seekg(0);
  std::vector<ClusterId> labels(expected);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(bytes));
  return labels;
}

double number_field(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  if (!doc[key].is_number()) throw ParameterError(std::string(key) + " must be a number", key);
  return doc[key].get<double>();
}

}  // namespace

DatasetSource DatasetSource::resolved() const {
  DatasetSource out = *this;
  if (field) out.field = fs::weakly_canonical(fs::absolute(*field));
  if (points) out.points = fs::weakly_canonical(fs::absolute(*points));
  return out;
}

Dataset DatasetSource::load() const { return load_dataset(field, points, derive); }

ordered_json params_json(const ClusterParams& p) {
  ordered_json j;
  j["k"] = p.k;
  j["cf"] = p.cf;
  j["wd"] = p.wd;
  j["wp"] = p.wp;
  j["wf"] = p.wf;
  j["eps_c"] = p.eps_c;
  j["eps_m"] = p.eps_m;
  j["max_iterations"] = p.max_iterations;
  j["normalize"] = p.normalize;
  return j;
}

ClusterParams params_from_json(const json& doc, const ClusterParams& defaults) {
  if (!doc.is_object()) throw ParameterError("parameters must be an object");
  ClusterParams p = defaults;
  static const std::string known[] = {"k", "cf", "wd", "wp", "wf", "eps_c", "eps_m", "max_iterations", "normalize"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
      throw ParameterError("unknown parameter '" + it.key() + "'", it.key());
    }
  }
  if (doc.contains("k")) {
    const auto& k = doc["k"];
    if (!k.is_array() || k.size() != 4) throw ParameterError("k must be an array of four integers", "k");
    for (std::size_t a = 0; a < 4; ++a) {
      if (!k[a].is_number_integer()) throw ParameterError("k must be an array of four integers", "k");
      p.k[a] = k[a].get<int>();
    }
  }
  p.cf = number_field(doc, "cf", p.cf);
  p.wd = number_field(doc, "wd", p.wd);
  p.wp = number_field(doc, "wp", p.wp);
  p.wf = number_field(doc, "wf", p.wf);
  p.eps_c = number_field(doc, "eps_c", p.eps_c);
  p.eps_m = number_field(doc, "eps_m", p.eps_m);
  if (doc.contains("max_iterations")) {
    if (!doc["max_iterations"].is_number_integer()) {
      throw ParameterError("max_iterations must be an integer", "max_iterations");
    }
    p.max_iterations = doc["max_iterations"].get<int>();
  }
  if (doc.contains("normalize")) {
    if (!doc["normalize"].is_boolean()) throw ParameterError("normalize must be true or false", "normalize");
    p.normalize = doc["normalize"].get<bool>();
  }
  return p;
}

MergeArtifacts merge_artifacts(const std::vector<ClusterSummary>& clusters, double eps_m) {
  std::vector<ClusterCenter> centers;
  centers.reserve(clusters.size());
  for (const auto& c : clusters) centers.push_back(c.center);
  MergeArtifacts m;
  m.eps_m = eps_m;
  m.map = merge_clusters(centers, eps_m).merge_map;
  m.table = merge_summaries(clusters, m.map);
  return m;
}

SegmentationArtifacts segment_dataset(const Dataset& data, const DatasetSource& source, const ClusterParams& params,
                                      const EngineOptions& options, const ProgressSink& progress) {
  const bool has_points = data.points.size() > 0;
  const bool has_fields = !data.field_columns.empty();
  params.validate(has_points, has_fields);
  if (!has_points && !has_fields) throw IngestError("the dataset holds no samples");

  SegmentationArtifacts a;
  a.source = source;
  a.extent = data.extent;
  a.point_report = data.point_report;
  a.field_samples = data.field_columns.size();
  if (data.field) {
    a.field_dims = data.field->geometry.dims;
    a.field_timesteps = data.field->geometry.timesteps();
  }
  a.options = options;
  a.kernel = std::string(kernels::select(options.isa).name);

  SampleColumns points = data.points.cols;
  SampleColumns fields = data.field_columns;
  a.normalization = normalize_variables(&points, &fields, params.normalize, &a.warnings);

  const auto t0 = std::chrono::steady_clock::now();
  RunResult r = run(points, fields, data.extent, params, options, progress);
  a.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  a.iterations = std::move(r.iterations);
  a.warnings.insert(a.warnings.end(), r.warnings.begin(), r.warnings.end());
  a.dropped_empty_clusters = r.dropped_empty_clusters;
  a.segmentation = std::move(r.segmentation);
  a.clusters = summarize_clusters(a.segmentation, data.points.cols, data.field_columns);
  a.merge = merge_artifacts(a.clusters, params.eps_m);
  a.segmentation.merge_map = a.merge.map;
  return a;
}

ordered_json center_row_json(const ClusterSummary& row) {
  ordered_json j;
  j["id"] = row.center.id;
  j["members"] = row.members;
  j["x_c"] = row.center.x;
  j["y_c"] = row.center.y;
  j["z_c"] = row.center.z;
  j["t_c"] = row.center.t;
  j["p_c"] = opt(row.center.p);
  j["f_c"] = opt(row.center.f);
  j["n_points"] = row.center.n_points;
  j["n_fields"] = row.center.n_fields;
  for (const char* name : {"p_std", "f_std", "extent_x", "extent_y", "extent_z", "extent_t"}) {
    j[name] = opt(center_property(row, name));
  }
  j["box_min"] = dims_json(row.stats.box_min);
  j["box_max"] = dims_json(row.stats.box_max);
  return j;
}

ordered_json merge_json(const MergeArtifacts& m) {
  ordered_json j;
  j["eps_m"] = m.eps_m;
  j["features"] = m.table.size();
  ordered_json pairs = ordered_json::array();
  for (std::size_t id = 0; id < m.map.size(); ++id) {
    if (m.map[id] != kNoCluster) pairs.push_back({static_cast<ClusterId>(id), m.map[id]});
  }
  j["merge_map"] = std::move(pairs);
  ordered_json rows = ordered_json::array();
  for (const auto& row : m.table) rows.push_back(center_row_json(row));
  j["centers"] = std::move(rows);
  return j;
}

ordered_json report_json(const SegmentationArtifacts& a) {
  ordered_json j;
  j["params"] = params_json(a.segmentation.params);
  j["source"] = source_json(a.source);
  j["converged"] = a.segmentation.converged;
  j["iterations_used"] = a.segmentation.iterations_used;
  ordered_json its = ordered_json::array();
  for (const auto& it : a.iterations) {
    its.push_back({{"iteration", it.iteration},
                   {"max_delta", finite_or_null(it.max_delta)},
                   {"fallback_count", it.fallback_count},
                   {"dormant_count", it.dormant_count}});
  }
  j["iterations"] = std::move(its);
  j["warnings"] = a.warnings;
  j["samples"] = {{"points",
                   {{"total_records", a.point_report.total_records},
                    {"accepted", a.point_report.accepted},
                    {"rejected_out_of_domain", a.point_report.rejected_out_of_domain},
                    {"expression", a.point_report.expression}}},
                  {"fields", a.field_samples},
                  {"field_dims", a.field_dims},
                  {"field_timesteps", a.field_timesteps}};
  j["clusters"] = {{"seeded", a.segmentation.params.total_clusters()},
                   {"live", a.segmentation.centers.size()},
                   {"dropped_empty", a.dropped_empty_clusters},
                   {"merged_features", a.merge.table.size()}};
  return j;
}

ordered_json stats_json(const FeatureStats& s) {
  ordered_json j;
  j["n_points"] = s.point.n;
  j["n_fields"] = s.field.n;
  j["p_mean"] = s.point.n > 0 ? ordered_json(s.point.mean) : ordered_json(nullptr);
  j["p_std"] = s.point.n > 0 ? ordered_json(s.point.stddev()) : ordered_json(nullptr);
  j["f_mean"] = s.field.n > 0 ? ordered_json(s.field.mean) : ordered_json(nullptr);
  j["f_std"] = s.field.n > 0 ? ordered_json(s.field.stddev()) : ordered_json(nullptr);
  j["box_min"] = dims_json(s.box_min);
  j["box_max"] = dims_json(s.box_max);
  return j;
}

ordered_json features_json(const std::vector<Feature>& features, const MergeArtifacts& m) {
  ordered_json j;
  j["eps_m"] = m.eps_m;
  ordered_json pairs = ordered_json::array();
  for (std::size_t id = 0; id < m.map.size(); ++id) {
    if (m.map[id] != kNoCluster) pairs.push_back({static_cast<ClusterId>(id), m.map[id]});
  }
  j["merge_map"] = std::move(pairs);
  ordered_json list = ordered_json::array();
  for (const auto& f : features) {
    ordered_json fj;
    fj["id"] = f.id;
    fj["members"] = f.members;
    fj["stats"] = stats_json(f.stats);
    ordered_json lines = ordered_json::array();
    for (const auto& l : f.polylines) lines.push_back({{"trajectory", l.trajectory_id}, {"points", l.points}});
    fj["polylines"] = std::move(lines);
    fj["isolated_points"] = f.isolated_points;
    ordered_json vox = ordered_json::array();
    for (std::size_t st = 0; st < f.voxels.size(); ++st) {
      if (!f.voxels[st].empty()) vox.push_back({{"timestep", st}, {"cells", f.voxels[st]}});
    }
    fj["voxels"] = std::move(vox);
    list.push_back(std::move(fj));
  }
  j["features"] = std::move(list);
  return j;
}

void write_json(const ordered_json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": malformed document at byte " + std::to_string(e.byte));
  }
}

void write_merge(const MergeArtifacts& m, const fs::path& dir) { write_json(merge_json(m), dir / "merge.json"); }

void write_segmentation(const SegmentationArtifacts& a, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& seg = a.segmentation;
  ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["source"] = source_json(a.source);
  doc["params"] = params_json(seg.params);
  doc["extent"] = {{"min", a.extent.min()}, {"max", a.extent.max()}};
  doc["normalization"] = {{"enabled", a.normalization.enabled},
                          {"point", range_json(a.normalization.point)},
                          {"field", range_json(a.normalization.field)}};
  doc["counts"] = {{"points", seg.point_labels.size()},
                   {"fields", seg.field_labels.size()},
                   {"field_dims", a.field_dims},
                   {"field_timesteps", a.field_timesteps}};
  doc["iterations_used"] = seg.iterations_used;
  doc["converged"] = seg.converged;
  ordered_json clusters = ordered_json::array();
  for (std::size_t i = 0; i < a.clusters.size(); ++i) clusters.push_back(cluster_json(a.clusters[i], seg.centers[i]));
  doc["clusters"] = std::move(clusters);
  write_json(doc, dir / "segmentation.json");
  write_labels(seg.point_labels, dir / "point_labels.bin");
  write_labels(seg.field_labels, dir / "field_labels.bin");
  write_json(report_json(a), dir / "report.json");

  ordered_json timing;
  timing["kernel"] = a.kernel;
  timing["workers"] = a.options.workers;
  timing["chunk_size"] = a.options.chunk_size;
  timing["total_seconds"] = a.seconds;
  ordered_json its = ordered_json::array();
  for (const auto& it : a.iterations) its.push_back({{"iteration", it.iteration}, {"seconds", it.seconds}});
  timing["iterations"] = std::move(its);
  write_json(timing, dir / "timing.json");
  write_merge(a.merge, dir);
}

SegmentationArtifacts load_segmentation(const fs::path& dir) {
  const json doc = read_json(dir / "segmentation.json");
  SegmentationArtifacts a;
  try {
    if (doc.value("format", std::string()) != kFormat) throw Error("not a segmentation document");
    if (doc.value("version", 0) != kVersion) throw Error("unsupported segmentation version");
    a.source = source_from(doc.at("source"));
    a.segmentation.params = params_from_json(doc.at("params"));
    a.extent = DomainExtent(dims_from(doc.at("extent").at("min")), dims_from(doc.at("extent").at("max")));
    const auto& norm = doc.at("normalization");
    a.normalization.enabled = norm.at("enabled").get<bool>();
    a.normalization.point = range_from(norm.at("point"));
    a.normalization.field = range_from(norm.at("field"));
    const auto& counts = doc.at("counts");
    a.field_dims = counts.at("field_dims").get<std::array<int, 3>>();
    a.field_timesteps = counts.at("field_timesteps").get<std::size_t>();
    a.segmentation.iterations_used = doc.at("iterations_used").get<int>();
    a.segmentation.converged = doc.at("converged").get<bool>();
    for (const auto& c : doc.at("clusters")) {
      ClusterSummary s;
      s.center.id = c.at("id").get<ClusterId>();
      s.center.x = c.at("x").get<double>();
      s.center.y = c.at("y").get<double>();
      s.center.z = c.at("z").get<double>();
      s.center.t = c.at("t").get<double>();
      s.center.p = opt_from(c, "p");
      s.center.f = opt_from(c, "f");
      s.center.n_points = c.at("n_points").get<std::int64_t>();
      s.center.n_fields = c.at("n_fields").get<std::int64_t>();
      s.members = {s.center.id};
      s.stats.point = {s.center.n_points, s.center.p.value_or(0), c.at("p_m2").get<double>()};
      s.stats.field = {s.center.n_fields, s.center.f.value_or(0), c.at("f_m2").get<double>()};
      s.stats.box_min = dims_from(c.at("box_min"));
      s.stats.box_max = dims_from(c.at("box_max"));
      ClusterCenter engine = s.center;
      engine.p = opt_from(c, "p_engine");
      engine.f = opt_from(c, "f_engine");
      a.segmentation.centers.push_back(engine);
      a.clusters.push_back(std::move(s));
    }
    a.segmentation.point_labels = read_labels(dir / "point_labels.bin", counts.at("points").get<std::size_t>());
    a.segmentation.field_labels = read_labels(dir / "field_labels.bin", counts.at("fields").get<std::size_t>());
    a.field_samples = a.segmentation.field_labels.size();
  } catch (const json::exception& e) {
    throw Error((dir / "segmentation.json").string() + ": " + e.what());
  }
  const auto live = identity_merge_map(a.segmentation.centers);
  auto check = [&](ClusterId l) {
    if (l < 0 || static_cast<std::size_t>(l) >= live.size() || live[static_cast<std::size_t>(l)] == kNoCluster) {
      throw Error("label " + std::to_string(l) + " in " + dir.string() + " has no cluster");
    }
  };
  for (ClusterId l : a.segmentation.point_labels) check(l);
  for (ClusterId l : a.segmentation.field_labels) check(l);

  if (fs::exists(dir / "merge.json")) {
    const json m = read_json(dir / "merge.json");
    try {
      a.merge.eps_m = m.at("eps_m").get<double>();
      a.merge.map.assign(live.size(), kNoCluster);
      for (const auto& pair : m.at("merge_map")) {
        const auto from = pair.at(0).get<ClusterId>();
        const auto to = pair.at(1).get<ClusterId>();
        if (from < 0 || static_cast<std::size_t>(from) >= live.size() || live[static_cast<std::size_t>(from)] ==
            kNoCluster) {
          throw Error("merge map names unknown cluster " + std::to_string(from));
        }
        a.merge.map[static_cast<std::size_t>(from)] = to;
      }
      for (std::size_t id = 0; id < live.size(); ++id) {
        if ((live[id] == kNoCluster) != (a.merge.map[id] == kNoCluster)) {
          throw Error("merge map does not cover cluster " + std::to_string(id));
        }
      }
      a.merge.table = merge_summaries(a.clusters, a.merge.map);
    } catch (const json::exception& e) {
      throw Error((dir / "merge.json").string() + ": " + e.what());
    }
  } else {
    a.merge = merge_artifacts(a.clusters, a.segmentation.params.eps_m);
  }
  a.segmentation.merge_map = a.merge.map;
  return a;
}

std::vector<Feature> features_for(const SegmentationArtifacts& a, const Dataset& data) {
  if (data.points.size() != a.segmentation.point_labels.size() ||
      data.field_columns.size() != a.segmentation.field_labels.size()) {
    throw Error("dataset does not match the segmentation (sample counts differ)");
  }
  const std::size_t cells = data.field ? data.field->geometry.cells() : 0;
  return build_features(a.segmentation, a.merge.map, data.points, data.field_columns, cells);
}

}  // namespace mfseg
