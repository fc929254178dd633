#include "mfseg/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "mfseg/error.hpp"

namespace mfseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::array<double, 3> blob_position(const BlobSpec& b, double t) {
  const double dt = t - b.center[3];
  return {b.center[0] + b.velocity[0] * dt, b.center[1] + b.velocity[1] * dt, b.center[2] + b.velocity[2] * dt};
}

// Normalized coordinates of p relative to the (moving) blob center.
std::array<double, 4> normalized(const BlobSpec& b, const Location4& p) {
  const auto c = blob_position(b, p.t);
  return {(p.x - c[0]) / b.radius[0], (p.y - c[1]) / b.radius[1], (p.z - c[2]) / b.radius[2],
          (p.t - b.center[3]) / b.radius[3]};
}

double reflect(double v, double lo, double hi) {
  const double span = hi - lo;
  double u = std::fmod(v - lo, 2 * span);
  if (u < 0) u += 2 * span;
  return u <= span ? lo + u : hi - (u - span);
}

std::vector<double> even_times(double lo, double hi, int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  t.back() = hi;
  return t;
}

template <std::size_t N>
std::array<double, N> array_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) throw SpecError(std::string(what) + " must be an array of " + std::to_string(N));
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw SpecError(std::string(what) + " must hold numbers");
    out[i] = j[i].get<double>();
  }
  return out;
}

}  // namespace

bool BlobSpec::contains(const Location4& p) const {
  const auto n = normalized(*this, p);
  if (shape == BlobShape::Box) {
    for (double v : n)
      if (std::fabs(v) > 1) return false;
    return true;
  }
  return n[0] * n[0] + n[1] * n[1] + n[2] * n[2] + n[3] * n[3] <= 1;
}

double BlobSpec::value_at(const Location4& p, bool point_kind, double background) const {
  const double v = point_kind ? point_value : field_value;
  if (profile == BlobProfile::Flat) return v;
  const auto n = normalized(*this, p);
  const double r2 = n[0] * n[0] + n[1] * n[1] + n[2] * n[2] + n[3] * n[3];
  // sigma = 0.5 in normalized units
  return background + (v - background) * std::exp(-r2 / (2 * 0.25));
}

void SyntheticSpec::validate() const {
  for (int a = 0; a < 3; ++a)
    if (grid[static_cast<std::size_t>(a)] < 1) throw SpecError("grid dims must be >= 1");
  if (field_timesteps < 2) throw SpecError("field_timesteps must be >= 2");
  if (point_timesteps < 2) throw SpecError("point_timesteps must be >= 2");
  if (background_trajectories < 0) throw SpecError("background trajectories must be >= 0");
  if (field_noise < 0 || point_noise < 0) throw SpecError("noise amplitudes must be >= 0");
  const auto& lo = extent.min();
  const auto& hi = extent.max();
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    const auto& blob = blobs[b];
    const std::string tag = "blob " + std::to_string(b);
    for (int a = 0; a < 4; ++a) {
      if (!(blob.radius[a] > 0)) throw SpecError(tag + ": radius must be > 0");
    }
    if (blob.trajectories < 0) throw SpecError(tag + ": trajectories must be >= 0");
    if (blob.center[3] - blob.radius[3] < lo[3] || blob.center[3] + blob.radius[3] > hi[3]) {
      throw SpecError(tag + " leaves the time extent");
    }
    for (double t : {blob.center[3] - blob.radius[3], blob.center[3], blob.center[3] + blob.radius[3]}) {
      const auto c = blob_position(blob, t);
      for (int a = 0; a < 3; ++a) {
        if (c[a] - blob.radius[a] < lo[a] || c[a] + blob.radius[a] > hi[a]) {
          throw SpecError(tag + " leaves the spatial extent");
        }
      }
    }
  }
}

SyntheticSpec SyntheticSpec::from_json(const json& doc) {
  SyntheticSpec s;
  try {
    if (!doc.is_object()) throw SpecError("synthetic spec must be an object");
    if (!doc.contains("extent")) throw SpecError("synthetic spec needs 'extent'");
    s.extent = DomainExtent(array_of<4>(doc["extent"].at("min"), "extent.min"),
                            array_of<4>(doc["extent"].at("max"), "extent.max"));
    if (doc.contains("grid")) {
      const auto g = array_of<3>(doc["grid"], "grid");
      for (int a = 0; a < 3; ++a) s.grid[static_cast<std::size_t>(a)] = static_cast<int>(g[static_cast<std::size_t>(a)]);
    }
    s.field_timesteps = doc.value("field_timesteps", s.field_timesteps);
    s.point_timesteps = doc.value("point_timesteps", s.point_timesteps);
    if (doc.contains("background")) {
      const auto& b = doc["background"];
      s.background_field = b.value("field", 0.0);
      s.background_point = b.value("point", 0.0);
      s.background_trajectories = b.value("trajectories", 0);
      s.background_speed = b.value("speed", 0.0);
    }
    if (doc.contains("noise")) {
      s.field_noise = doc["noise"].value("field", 0.0);
      s.point_noise = doc["noise"].value("point", 0.0);
    }
    s.seed = doc.value("seed", std::uint64_t{42});
    const std::string dtype = doc.value("dtype", std::string("f64"));
    if (dtype != "f32" && dtype != "f64") throw SpecError("dtype must be f32 or f64");
    s.dtype = dtype == "f32" ? Dtype::F32 : Dtype::F64;
    if (doc.contains("blobs")) {
      for (const auto& jb : doc["blobs"]) {
        BlobSpec b;
        b.center = array_of<4>(jb.at("center"), "blob center");
        b.radius = array_of<4>(jb.at("radius"), "blob radius");
        if (jb.contains("velocity")) b.velocity = array_of<3>(jb["velocity"], "blob velocity");
        b.field_value = jb.value("field", 1.0);
        b.point_value = jb.value("point", 1.0);
        b.trajectories = jb.value("trajectories", 0);
        const std::string shape = jb.value("shape", std::string("ellipsoid"));
        if (shape != "ellipsoid" && shape != "box") throw SpecError("blob shape must be ellipsoid or box");
        b.shape = shape == "box" ? BlobShape::Box : BlobShape::Ellipsoid;
        const std::string profile = jb.value("profile", std::string("flat"));
        if (profile != "flat" && profile != "gaussian") throw SpecError("blob profile must be flat or gaussian");
        b.profile = profile == "gaussian" ? BlobProfile::Gaussian : BlobProfile::Flat;
        s.blobs.push_back(b);
      }
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("synthetic spec: ") + e.what());
  } catch (const ParameterError& e) {
    throw SpecError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError(path.string() + ": malformed document at byte " + std::to_string(e.byte));
  }
  return from_json(doc);
}

json SyntheticSpec::to_json() const {
  json doc;
  doc["extent"] = {{"min", extent.min()}, {"max", extent.max()}};
  doc["grid"] = grid;
  doc["field_timesteps"] = field_timesteps;
  doc["point_timesteps"] = point_timesteps;
  doc["background"] = {{"field", background_field},
                       {"point", background_point},
                       {"trajectories", background_trajectories},
                       {"speed", background_speed}};
  doc["noise"] = {{"field", field_noise}, {"point", point_noise}};
  doc["seed"] = seed;
  doc["dtype"] = dtype == Dtype::F32 ? "f32" : "f64";
  doc["blobs"] = json::array();
  for (const auto& b : blobs) {
    doc["blobs"].push_back({{"center", b.center},
                            {"radius", b.radius},
                            {"velocity", b.velocity},
                            {"field", b.field_value},
                            {"point", b.point_value},
                            {"trajectories", b.trajectories},
                            {"shape", b.shape == BlobShape::Box ? "box" : "ellipsoid"},
                            {"profile", b.profile == BlobProfile::Gaussian ? "gaussian" : "flat"}});
  }
  return doc;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& lo = spec.extent.min();
  const auto& hi = spec.extent.max();

  auto classify = [&](const Location4& p, bool point_kind, double background, int& label) {
    for (std::size_t b = 0; b < spec.blobs.size(); ++b) {
      if (spec.blobs[b].contains(p)) {
        label = static_cast<int>(b) + 1;
        return spec.blobs[b].value_at(p, point_kind, background);
      }
    }
    label = 0;
    return background;
  };

  // field
  FieldGrid& f = out.field;
  f.variable = "f";
  f.dtype = spec.dtype;
  f.geometry.dims = spec.grid;
  for (int a = 0; a < 3; ++a) {
    f.geometry.origin[static_cast<std::size_t>(a)] = lo[a];
    f.geometry.spacing[static_cast<std::size_t>(a)] = (hi[a] - lo[a]) / spec.grid[static_cast<std::size_t>(a)];
  }
  f.geometry.times = even_times(lo[3], hi[3], spec.field_timesteps);
  const std::size_t cells = f.geometry.cells();
  f.values.resize(cells * f.geometry.timesteps());
  out.field_truth.resize(f.values.size());
  for (std::size_t step = 0; step < f.geometry.timesteps(); ++step) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const auto [i, j, k] = f.geometry.cell_coords(cell);
      const auto c = f.geometry.cell_center(i, j, k);
      int label = 0;
      double v = classify({c[0], c[1], c[2], f.geometry.times[step]}, false, spec.background_field, label);
      if (spec.field_noise > 0) v += spec.field_noise * gauss(rng);
      if (spec.dtype == Dtype::F32) v = static_cast<double>(static_cast<float>(v));
      f.values[step * cells + cell] = v;
      out.field_truth[step * cells + cell] = label;
    }
  }

  // points
  const auto ptimes = even_times(lo[3], hi[3], spec.point_timesteps);
  std::int64_t next_id = 0;
  auto emit = [&](std::int64_t id, const Location4& p) {
    int label = 0;
    double v = classify(p, true, spec.background_point, label);
    if (spec.point_noise > 0) v += spec.point_noise * gauss(rng);
    out.points.push({id, p.t, p.x, p.y, p.z, v});
    out.point_truth.push_back(label);
  };
  for (const auto& blob : spec.blobs) {
    for (int n = 0; n < blob.trajectories; ++n) {
      std::array<double, 3> offset{};
      for (;;) {
        for (int a = 0; a < 3; ++a) offset[static_cast<std::size_t>(a)] = 2 * u01(rng) - 1;
        if (blob.shape == BlobShape::Box ||
            offset[0] * offset[0] + offset[1] * offset[1] + offset[2] * offset[2] <= 1) {
          break;
        }
      }
      const std::int64_t id = next_id++;
      for (double t : ptimes) {
        if (t < blob.center[3] - blob.radius[3] || t > blob.center[3] + blob.radius[3]) continue;
        const auto c = blob_position(blob, t);
        Location4 p{c[0] + 0.9 * offset[0] * blob.radius[0], c[1] + 0.9 * offset[1] * blob.radius[1],
                    c[2] + 0.9 * offset[2] * blob.radius[2], t};
        p.x = std::clamp(p.x, lo[0], hi[0]);
        p.y = std::clamp(p.y, lo[1], hi[1]);
        p.z = std::clamp(p.z, lo[2], hi[2]);
        emit(id, p);
      }
    }
  }
  for (int n = 0; n < spec.background_trajectories; ++n) {
    std::array<double, 3> start{}, vel{};
    for (int a = 0; a < 3; ++a) {
      start[static_cast<std::size_t>(a)] = lo[a] + u01(rng) * (hi[a] - lo[a]);
      vel[static_cast<std::size_t>(a)] = spec.background_speed * (2 * u01(rng) - 1);
    }
    const std::int64_t id = next_id++;
    for (double t : ptimes) {
      const double dt = t - lo[3];
      emit(id, {reflect(start[0] + vel[0] * dt, lo[0], hi[0]), reflect(start[1] + vel[1] * dt, lo[1], hi[1]),
                reflect(start[2] + vel[2] * dt, lo[2], hi[2]), t});
    }
  }
  out.points.index_steps();
  return out;
}

void write_synthetic(const SyntheticDataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  write_field(data.field, dir / "field.json");
  write_points(data.points, dir / "points.csv");
  for (const auto& [name, labels] :
       {std::pair{"field_truth.txt", &data.field_truth}, std::pair{"points_truth.txt", &data.point_truth}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw SpecError("cannot write " + (dir / name).string());
    for (int l : *labels) out << l << '\n';
  }
}

Dataset to_dataset(const SyntheticDataset& data) {
  Dataset d;
  d.field = data.field;
  d.extent = field_extent(data.field.geometry);
  d.field_columns = data.field.columns();
  d.points = data.points;
  d.has_points = true;
  d.point_report.total_records = data.points.size();
  d.point_report.accepted = data.points.size();
  return d;
}

}  // namespace mfseg
