#include "mfseg/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "mfseg/error.hpp"

namespace mfseg {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "raw field payloads are read as little-endian");

std::array<int, 3> FieldGeometry::cell_coords(std::size_t cell) const {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto ny = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(cell % nx), static_cast<int>((cell / nx) % ny), static_cast<int>(cell / (nx * ny))};
}

std::array<double, 3> FieldGeometry::cell_center(int i, int j, int k) const {
  return {origin[0] + (i + 0.5) * spacing[0], origin[1] + (j + 0.5) * spacing[1], origin[2] + (k + 0.5) * spacing[2]};
}

std::array<double, 3> FieldGeometry::upper() const {
  return {origin[0] + dims[0] * spacing[0], origin[1] + dims[1] * spacing[1], origin[2] + dims[2] * spacing[2]};
}

std::optional<std::array<int, 3>> FieldGeometry::locate(double x, double y, double z) const {
  const double c[3] = {x, y, z};
  const auto hi = upper();
  std::array<int, 3> out{};
  for (int a = 0; a < 3; ++a) {
    if (!(c[a] >= origin[a] && c[a] <= hi[a])) return std::nullopt;
    if (c[a] == hi[a]) {
      out[a] = dims[a] - 1;
      continue;
    }
    auto i = static_cast<long long>(std::floor((c[a] - origin[a]) / spacing[a]));
    i = std::clamp<long long>(i, 0, dims[a] - 1);
    // settle rounding against the exact face test
    while (i > 0 && c[a] < origin[a] + static_cast<double>(i) * spacing[a]) --i;
    while (i + 1 < dims[a] && c[a] >= origin[a] + static_cast<double>(i + 1) * spacing[a]) ++i;
    out[a] = static_cast<int>(i);
  }
  return out;
}

std::optional<std::size_t> FieldGeometry::interval_of(double t) const {
  if (times.size() < 2 || !(t >= times.front() && t <= times.back())) return std::nullopt;
  if (t == times.back()) return times.size() - 2;
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  return static_cast<std::size_t>(it - times.begin()) - 1;
}

FieldSample FieldGrid::sample(std::size_t index) const {
  const std::size_t cells = geometry.cells();
  const std::size_t step = index / cells;
  const auto [i, j, k] = geometry.cell_coords(index % cells);
  const auto c = geometry.cell_center(i, j, k);
  FieldSample s;
  s.i = i;
  s.j = j;
  s.k = k;
  s.timestep = static_cast<int>(step);
  s.x = c[0];
  s.y = c[1];
  s.z = c[2];
  s.t = geometry.times[step];
  s.v = values[index];
  return s;
}

SampleColumns FieldGrid::columns() const {
  SampleColumns out;
  out.reserve(values.size());
  const std::size_t cells = geometry.cells();
  for (std::size_t step = 0; step < geometry.timesteps(); ++step) {
    const double t = geometry.times[step];
    for (int k = 0; k < geometry.dims[2]; ++k)
      for (int j = 0; j < geometry.dims[1]; ++j)
        for (int i = 0; i < geometry.dims[0]; ++i) {
          const auto c = geometry.cell_center(i, j, k);
          out.push(c[0], c[1], c[2], t, values[step * cells + geometry.cell_index(i, j, k)]);
        }
  }
  return out;
}

void validate_geometry(const FieldGeometry& g) {
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 1) throw IngestError("field dims must be >= 1");
    if (!(g.spacing[a] > 0) || !std::isfinite(g.spacing[a])) throw IngestError("field spacing must be > 0");
    if (!std::isfinite(g.origin[a])) throw IngestError("field origin must be finite");
  }
  if (g.times.empty()) throw IngestError("field needs at least one timestep");
  for (std::size_t i = 1; i < g.times.size(); ++i) {
    if (!(g.times[i] > g.times[i - 1])) throw IngestError("field times must be strictly increasing");
  }
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::int64_t key_offset(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  return pos == std::string::npos ? -1 : static_cast<std::int64_t>(pos);
}

template <typename T, std::size_t N>
std::array<T, N> read_array(const ordered_json& doc, const std::string& key, const std::string& text) {
  if (!doc.contains(key) || !doc[key].is_array() || doc[key].size() != N) {
    throw IngestError("field metadata: '" + key + "' must be an array of " + std::to_string(N) + " numbers",
                      key_offset(text, key));
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!doc[key][i].is_number()) {
      throw IngestError("field metadata: '" + key + "' must hold numbers", key_offset(text, key));
    }
    out[i] = doc[key][i].get<T>();
  }
  return out;
}

}  // namespace

FieldGrid load_field(const fs::path& metadata_path) {
  const std::string text = read_text(metadata_path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestError("field metadata " + metadata_path.string() + ": malformed document",
                      static_cast<std::int64_t>(e.byte));
  }
  if (!doc.is_object()) throw IngestError("field metadata must be an object", 0);

  FieldGrid grid;
  auto& g = grid.geometry;
  const auto dims = read_array<double, 3>(doc, "dims", text);
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1 || dims[a] != std::floor(dims[a]) || dims[a] > 1e9) {
      throw IngestError("field metadata: dims must be positive integers", key_offset(text, "dims"));
    }
    g.dims[a] = static_cast<int>(dims[a]);
  }
  g.origin = read_array<double, 3>(doc, "origin", text);
  g.spacing = read_array<double, 3>(doc, "spacing", text);
  if (!doc.contains("times") || !doc["times"].is_array() || doc["times"].empty()) {
    throw IngestError("field metadata: 'times' must be a non-empty array", key_offset(text, "times"));
  }
  for (const auto& t : doc["times"]) {
    if (!t.is_number()) throw IngestError("field metadata: times must be numbers", key_offset(text, "times"));
    g.times.push_back(t.get<double>());
  }
  for (std::size_t i = 1; i < g.times.size(); ++i) {
    if (!(g.times[i] > g.times[i - 1])) {
      throw IngestError("field metadata: times must be strictly increasing (entry " + std::to_string(i) + ")",
                        key_offset(text, "times"));
    }
  }
  try {
    validate_geometry(g);
  } catch (const IngestError& e) {
    throw IngestError(std::string("field metadata: ") + e.what(), 0);
  }
  if (doc.contains("variable")) {
    if (!doc["variable"].is_string()) throw IngestError("field metadata: variable must be a string", key_offset(text, "variable"));
    grid.variable = doc["variable"].get<std::string>();
  }
  const std::string dtype = doc.value("dtype", std::string("f32"));
  if (dtype == "f32") {
    grid.dtype = Dtype::F32;
  } else if (dtype == "f64") {
    grid.dtype = Dtype::F64;
  } else {
    throw IngestError("field metadata: dtype must be f32 or f64", key_offset(text, "dtype"));
  }
  if (doc.value("order", std::string("x_fastest")) != "x_fastest") {
    throw IngestError("field metadata: only order=x_fastest is supported", key_offset(text, "order"));
  }
  if (!doc.contains("data_files") || !doc["data_files"].is_array() || doc["data_files"].size() != g.times.size()) {
    throw IngestError("field metadata: data_files must list one file per timestep", key_offset(text, "data_files"));
  }
  for (const auto& f : doc["data_files"]) {
    if (!f.is_string()) throw IngestError("field metadata: data_files must be strings", key_offset(text, "data_files"));
    grid.data_files.push_back(f.get<std::string>());
  }

  const std::size_t cells = g.cells();
  const std::size_t width = grid.dtype == Dtype::F32 ? 4 : 8;
  const std::size_t expected = cells * width;
  grid.values.resize(cells * g.timesteps());
  const fs::path dir = metadata_path.parent_path();
  for (std::size_t step = 0; step < g.timesteps(); ++step) {
    const fs::path data = dir / grid.data_files[step];
    std::ifstream in(data, std::ios::binary);
    if (!in) throw IngestError("cannot open field data file " + data.string());
    std::vector<char> buf(expected);
    in.read(buf.data(), static_cast<std::streamsize>(expected));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got < expected) {
      throw IngestError("field data file " + data.string() + " is truncated: expected " + std::to_string(expected) +
                            " bytes, found " + std::to_string(got),
                        static_cast<std::int64_t>(got));
    }
    if (in.peek() != std::ifstream::traits_type::eof()) {
      throw IngestError("field data file " + data.string() + " is longer than " + std::to_string(expected) + " bytes",
                        static_cast<std::int64_t>(expected));
    }
    double* out = grid.values.data() + step * cells;
    for (std::size_t i = 0; i < cells; ++i) {
      double v;
      if (grid.dtype == Dtype::F32) {
        float f;
        std::memcpy(&f, buf.data() + i * 4, 4);
        v = f;
      } else {
        std::memcpy(&v, buf.data() + i * 8, 8);
      }
      if (!std::isfinite(v)) {
        throw IngestError("field data file " + data.string() + " holds a non-finite value",
                          static_cast<std::int64_t>(i * width));
      }
      out[i] = v;
    }
  }
  return grid;
}

void write_field(const FieldGrid& grid, const fs::path& metadata_path) {
  const auto& g = grid.geometry;
  validate_geometry(g);
  if (grid.values.size() != g.cells() * g.timesteps()) throw IngestError("field values do not match geometry");
  std::vector<std::string> files = grid.data_files;
  if (files.empty()) {
    for (std::size_t s = 0; s < g.timesteps(); ++s) {
      std::ostringstream os;
      os << metadata_path.stem().string() << "_" << std::setw(4) << std::setfill('0') << s << ".raw";
      files.push_back(os.str());
    }
  }
  if (files.size() != g.timesteps()) throw IngestError("data_files must list one file per timestep");

  ordered_json doc;
  doc["dims"] = g.dims;
  doc["origin"] = g.origin;
  doc["spacing"] = g.spacing;
  doc["times"] = g.times;
  doc["variable"] = grid.variable;
  doc["data_files"] = files;
  doc["dtype"] = grid.dtype == Dtype::F32 ? "f32" : "f64";
  doc["order"] = "x_fastest";
  if (metadata_path.has_parent_path()) fs::create_directories(metadata_path.parent_path());
  {
    std::ofstream out(metadata_path, std::ios::binary);
    if (!out) throw IngestError("cannot write " + metadata_path.string());
    out << doc.dump(2) << '\n';
  }
  const std::size_t cells = g.cells();
  const fs::path dir = metadata_path.parent_path();
  for (std::size_t step = 0; step < g.timesteps(); ++step) {
    std::ofstream out(dir / files[step], std::ios::binary);
    if (!out) throw IngestError("cannot write " + (dir / files[step]).string());
    const double* v = grid.values.data() + step * cells;
    if (grid.dtype == Dtype::F32) {
      std::vector<float> buf(v, v + cells);
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(cells * 4));
    } else {
      out.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(cells * 8));
    }
  }
}

}  // namespace mfseg
