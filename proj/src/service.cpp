#include "mfseg/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "mfseg/error.hpp"

namespace mfseg {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

Response error(int status, const std::string& message, const std::string& field = {}) {
  Response r{status, {{"error", message}}};
  if (!field.empty()) r.body["field"] = field;
  return r;
}

Response none_available() { return error(404, "no completed segmentation is available"); }

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  return v;
}

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  return json::parse(body);
}

}  // namespace

const char* job_status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Queued:
      return "queued";
    case JobStatus::Running:
      return "running";
    case JobStatus::Done:
      return "done";
    case JobStatus::Failed:
      return "failed";
  }
  return "unknown";
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  config_.source = config_.source.resolved();
  config_.out = fs::weakly_canonical(fs::absolute(config_.out));
  data_ = config_.source.load();
  if (config_.page_size == 0) throw ParameterError("page size must be positive", "page_size");
  if (fs::exists(config_.out / "segmentation.json")) {
    auto seg = std::make_shared<SegmentationArtifacts>(load_segmentation(config_.out));
    if (seg->source.field == config_.source.field && seg->source.points == config_.source.points &&
        seg->source.derive == config_.source.derive) {
      MergeArtifacts m = seg->merge;
      current_ = make_snapshot(std::move(seg), std::move(m), config_.out);
    }
  }
}

Service::~Service() {
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const Service::Snapshot> Service::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

std::shared_ptr<const Service::Snapshot> Service::make_snapshot(std::shared_ptr<const SegmentationArtifacts> seg,
                                                                MergeArtifacts merge, fs::path dir) const {
  auto s = std::make_shared<Snapshot>();
  SegmentationArtifacts view = *seg;
  view.merge = merge;
  s->features = features_for(view, data_);
  s->seg = std::move(seg);
  s->merge = std::move(merge);
  s->dir = std::move(dir);
  return s;
}

void Service::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [&] { return !busy_; });
}

Response Service::segment(const std::string& body) {
  ClusterParams params;
  try {
    params = params_from_json(parse_body(body), config_.defaults);
    params.validate(data_.points.size() > 0, !data_.field_columns.empty());
  } catch (const json::parse_error& e) {
    return error(400, std::string("malformed parameter document: ") + e.what(), "body");
  } catch (const ParameterError& e) {
    return error(400, e.what(), e.field());
  }

  std::lock_guard lock(mutex_);
  if (busy_) {
    Response r = error(409, "a segmentation job is already running");
    r.body["job"] = jobs_.rbegin()->second.id;
    return r;
  }
  if (worker_.joinable()) worker_.join();
  const int n = next_job_++;
  Job& job = jobs_[n];
  job.id = std::to_string(n);
  busy_ = true;
  worker_ = std::thread(&Service::run_job, this, job.id, params);
  return {202, {{"job", job.id}, {"status", job_status_name(JobStatus::Queued)}}};
}

void Service::run_job(std::string id, ClusterParams params) {
  const int n = std::stoi(id);
  {
    std::lock_guard lock(mutex_);
    jobs_[n].status = JobStatus::Running;
  }
  if (config_.on_job_start) config_.on_job_start(id);
  auto sink = [&](const IterationProgress& p) {
    std::lock_guard lock(mutex_);
    jobs_[n].iteration = p.iteration;
    jobs_[n].max_delta = p.max_delta;
  };
  std::shared_ptr<const Snapshot> snap;
  std::string failure;
  const fs::path dir = config_.out / "jobs" / id;
  try {
    auto seg = std::make_shared<SegmentationArtifacts>(
        segment_dataset(data_, config_.source, params, config_.options, sink));
    write_segmentation(*seg, dir);
    MergeArtifacts m = seg->merge;
    snap = make_snapshot(std::move(seg), std::move(m), dir);
  } catch (const std::exception& e) {
    failure = e.what();
  }
  std::lock_guard lock(mutex_);
  Job& job = jobs_[n];
  if (snap) {
    current_ = std::move(snap);
    job.status = JobStatus::Done;
    job.artifacts = dir;
  } else {
    job.status = JobStatus::Failed;
    job.error = failure;
  }
  busy_ = false;
  idle_.notify_all();
}

Response Service::job(const std::string& id) const {
  const auto n = parse_number<int>(id);
  std::lock_guard lock(mutex_);
  const auto it = n ? jobs_.find(*n) : jobs_.end();
  if (it == jobs_.end()) return error(404, "unknown job '" + id + "'");
  const Job& j = it->second;
  ordered_json b;
  b["id"] = j.id;
  b["kind"] = "segment";
  b["status"] = job_status_name(j.status);
  b["progress"] = {{"iteration", j.iteration}, {"max_delta", number_or_null(j.max_delta)}};
  if (j.status == JobStatus::Failed) b["error"] = j.error;
  if (j.status == JobStatus::Done) b["artifacts"] = j.artifacts.string();
  return {200, b};
}

Response Service::centers(const QueryParams& query) const {
  const auto snap = snapshot();
  if (!snap) return none_available();
  std::size_t page = 1, page_size = config_.page_size;
  std::vector<std::string> predicates;
  for (const auto& [key, value] : query) {
    if (key == "page" || key == "page_size") {
      const auto v = parse_number<std::size_t>(value);
      if (!v || *v == 0) return error(400, key + " must be a positive integer", key);
      (key == "page" ? page : page_size) = *v;
    } else {
      predicates.push_back(key + "=" + value);
    }
  }
  std::vector<ClusterId> ids;
  try {
    ids = query_centers(snap->merge.table, CenterQuery::parse(predicates));
  } catch (const QueryError& e) {
    return error(400, e.what(), "query");
  }
  ordered_json rows = ordered_json::array();
  const std::size_t first = page - 1 <= ids.size() / page_size ? (page - 1) * page_size : ids.size();
  for (std::size_t i = first; i < ids.size() && i - first < page_size; ++i) {
    const auto row = std::lower_bound(snap->merge.table.begin(), snap->merge.table.end(), ids[i],
                                      [](const ClusterSummary& s, ClusterId id) { return s.center.id < id; });
    rows.push_back(center_row_json(*row));
  }
  ordered_json b;
  b["eps_m"] = snap->merge.eps_m;
  b["total"] = ids.size();
  b["page"] = page;
  b["page_size"] = page_size;
  b["pages"] = (ids.size() + page_size - 1) / page_size;
  b["rows"] = std::move(rows);
  return {200, b};
}

Response Service::feature(const std::string& id, const QueryParams& query) const {
  const auto snap = snapshot();
  if (!snap) return none_available();
  const auto fid = parse_number<ClusterId>(id);
  const auto it = !fid ? snap->features.end()
                       : std::find_if(snap->features.begin(), snap->features.end(),
                                      [&](const Feature& f) { return f.id == *fid; });
  if (it == snap->features.end()) return error(404, "unknown feature '" + id + "'");
  const Feature& f = *it;

  const std::size_t timesteps = data_.field ? data_.field->geometry.timesteps() : 0;
  std::optional<std::size_t> t;
  std::optional<std::pair<int, int>> slice;
  double t1 = -std::numeric_limits<double>::infinity(), t2 = std::numeric_limits<double>::infinity();
  for (const auto& [key, value] : query) {
    if (key == "t") {
      t = parse_number<std::size_t>(value);
      if (!t || *t >= timesteps) {
        return error(400, "timestep '" + value + "' is out of range [0, " + std::to_string(timesteps) + ")", "t");
      }
    } else if (key == "slice") {
      const auto colon = value.find(':');
      const std::string axis = value.substr(0, colon);
      const int a = axis == "x" ? 0 : axis == "y" ? 1 : axis == "z" ? 2 : -1;
      const auto index = colon == std::string::npos ? std::nullopt : parse_number<int>(value.substr(colon + 1));
      if (a < 0 || !index) return error(400, "slice must look like x:12 (axis x, y or z)", "slice");
      if (!data_.field || *index < 0 || *index >= data_.field->geometry.dims[static_cast<std::size_t>(a)]) {
        return error(400, "slice index " + std::to_string(*index) + " is outside the grid", "slice");
      }
      slice = {a, *index};
    } else if (key == "window") {
      const auto colon = value.find(':');
      if (colon == std::string::npos) return error(400, "window must look like t1:t2", "window");
      const std::string lo = value.substr(0, colon), hi = value.substr(colon + 1);
      const auto a = lo.empty() ? std::optional<double>(t1) : parse_number<double>(lo);
      const auto b = hi.empty() ? std::optional<double>(t2) : parse_number<double>(hi);
      if (!a || !b || *a > *b) return error(400, "window must look like t1:t2 with t1 <= t2", "window");
      t1 = *a;
      t2 = *b;
    } else {
      return error(400, "unknown parameter '" + key + "'", key);
    }
  }
  if (!t && timesteps > 0) t = 0;

  ordered_json b;
  b["id"] = f.id;
  b["members"] = f.members;
  b["stats"] = stats_json(f.stats);
  b["timestep"] = t ? ordered_json(*t) : ordered_json(nullptr);
  b["time"] = t ? ordered_json(data_.field->geometry.times[*t]) : ordered_json(nullptr);
  b["slice"] = slice ? ordered_json{{"axis", std::string(1, "xyz"[slice->first])}, {"index", slice->second}}
                     : ordered_json(nullptr);
  b["window"] = {number_or_null(t1), number_or_null(t2)};

  ordered_json cells = ordered_json::array(), values = ordered_json::array();
  if (t && *t < f.voxels.size()) {
    const auto& geo = data_.field->geometry;
    const std::size_t base = *t * geo.cells();
    for (std::uint32_t cell : f.voxels[*t]) {
      const auto c = geo.cell_coords(cell);
      if (slice && c[static_cast<std::size_t>(slice->first)] != slice->second) continue;
      cells.push_back(c);
      values.push_back(data_.field->values[base + cell]);
    }
  }
  b["voxels"] = {{"cells", std::move(cells)}, {"values", std::move(values)}};

  const auto& pts = data_.points.cols;
  auto vertex = [&](std::size_t i) { return ordered_json{pts.x[i], pts.y[i], pts.z[i], pts.t[i], pts.v[i]}; };
  auto in_window = [&](std::size_t i) { return pts.t[i] >= t1 && pts.t[i] <= t2; };
  ordered_json lines = ordered_json::array();
  for (const auto& line : f.polylines) {
    ordered_json samples = ordered_json::array(), vertices = ordered_json::array();
    for (std::size_t i : line.points) {
      if (!in_window(i)) continue;
      samples.push_back(i);
      vertices.push_back(vertex(i));
    }
    if (samples.empty()) continue;
    lines.push_back({{"trajectory", line.trajectory_id}, {"samples", std::move(samples)}, {"vertices", std::move(vertices)}});
  }
  b["polylines"] = std::move(lines);
  ordered_json isolated = ordered_json::array();
  for (std::size_t i : f.isolated_points) {
    if (in_window(i)) isolated.push_back({{"sample", i}, {"trajectory", data_.points.trajectory[i]}, {"vertex", vertex(i)}});
  }
  b["isolated_points"] = std::move(isolated);
  return {200, b};
}

Response Service::merge(const std::string& body) {
  double eps_m = 0;
  try {
    const json doc = parse_body(body);
    if (!doc.is_object() || !doc.contains("eps_m") || !doc["eps_m"].is_number()) {
      return error(400, "expected {\"eps_m\": <number>}", "eps_m");
    }
    eps_m = doc["eps_m"].get<double>();
  } catch (const json::parse_error& e) {
    return error(400, std::string("malformed merge document: ") + e.what(), "body");
  }
  if (!std::isfinite(eps_m) || eps_m < 0) return error(400, "eps_m must be a finite number >= 0", "eps_m");

  // Merges are serialized among themselves; readers keep the old snapshot
  // until the swap.
  std::lock_guard merging(merge_mutex_);
  const auto snap = snapshot();
  if (!snap) return none_available();
  MergeArtifacts m = merge_artifacts(snap->seg->clusters, eps_m);
  write_merge(m, snap->dir);
  auto next = make_snapshot(snap->seg, m, snap->dir);
  {
    std::lock_guard lock(mutex_);
    if (current_ == snap) current_ = std::move(next);
  }
  return {200, merge_json(m)};
}

Response Service::dataset_meta() const {
  const auto snap = snapshot();
  ordered_json b;
  b["source"] = {{"field", config_.source.field ? ordered_json(config_.source.field->string()) : ordered_json(nullptr)},
                 {"points", config_.source.points ? ordered_json(config_.source.points->string()) : ordered_json(nullptr)},
                 {"derive", config_.source.derive}};
  b["extent"] = {{"min", data_.extent.min()}, {"max", data_.extent.max()}};
  if (data_.field) {
    const auto& g = data_.field->geometry;
    b["field"] = {{"variable", data_.field->variable},
                  {"dims", g.dims},
                  {"origin", g.origin},
                  {"spacing", g.spacing},
                  {"times", g.times},
                  {"samples", data_.field_columns.size()}};
  } else {
    b["field"] = nullptr;
  }
  if (data_.has_points) {
    std::vector<std::int64_t> ids = data_.points.trajectory;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    b["points"] = {{"samples", data_.points.size()},
                   {"trajectories", ids.size()},
                   {"times", data_.points.times},
                   {"expression", data_.point_report.expression},
                   {"rejected_out_of_domain", data_.point_report.rejected_out_of_domain}};
  } else {
    b["points"] = nullptr;
  }
  b["properties"] = center_properties();
  b["defaults"] = params_json(config_.defaults);
  if (snap) {
    b["segmentation"] = {{"available", true},
                         {"artifacts", snap->dir.string()},
                         {"params", params_json(snap->seg->segmentation.params)},
                         {"eps_m", snap->merge.eps_m},
                         {"features", snap->merge.table.size()}};
  } else {
    b["segmentation"] = {{"available", false}};
  }
  return {200, b};
}

}  // namespace mfseg
