#include "mfseg/points.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "mfseg/error.hpp"
#include "mfseg/expression.hpp"

namespace mfseg {

PointSample PointSet::at(std::size_t i) const {
  PointSample s;
  s.trajectory_id = trajectory[i];
  s.x = cols.x[i];
  s.y = cols.y[i];
  s.z = cols.z[i];
  s.t = cols.t[i];
  s.v = cols.v[i];
  return s;
}

void PointSet::push(const PointSample& s) {
  cols.push(s.x, s.y, s.z, s.t, s.v);
  trajectory.push_back(s.trajectory_id);
}

void PointSet::index_steps() {
  times = cols.t;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  step.resize(size());
  for (std::size_t i = 0; i < size(); ++i) {
    step[i] = static_cast<int>(std::lower_bound(times.begin(), times.end(), cols.t[i]) - times.begin());
  }
}

const std::vector<std::string>& derived_variable_names() {
  static const std::vector<std::string> names{"path_length", "displacement", "speed"};
  return names;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e;
}

struct Record {
  std::int64_t id;
  double t, x, y, z;
  std::vector<double> raw;
  std::int64_t offset;
};

}  // namespace

PointLoadResult parse_points(std::istream& in, const std::string& source_name, const std::string& expression,
                             const std::optional<DomainExtent>& domain) {
  std::string line;
  std::int64_t offset = 0;
  std::int64_t line_offset = 0;
  auto next_line = [&]() -> bool {
    line_offset = offset;
    if (!std::getline(in, line)) return false;
    offset += static_cast<std::int64_t>(line.size()) + 1;
    return true;
  };

  std::vector<std::string> header;
  while (next_line()) {
    if (!trim(line).empty()) {
      header = split(line);
      break;
    }
  }
  if (header.empty()) throw IngestError(source_name + ": missing header row", 0);

  int col_id = -1, col_t = -1, col_x = -1, col_y = -1, col_z = -1;
  std::vector<int> raw_cols;
  std::vector<std::string> raw_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    const int ci = static_cast<int>(c);
    if (h.empty()) throw IngestError(source_name + ": empty column name in header", line_offset);
    if (std::count(header.begin(), header.end(), h) > 1) {
      throw IngestError(source_name + ": duplicate column '" + h + "'", line_offset);
    }
    if (h == "id") {
      col_id = ci;
    } else if (h == "t") {
      col_t = ci;
    } else if (h == "x") {
      col_x = ci;
    } else if (h == "y") {
      col_y = ci;
    } else if (h == "z") {
      col_z = ci;
    } else {
      raw_cols.push_back(ci);
      raw_names.push_back(h);
    }
  }
  for (auto [name, idx] : {std::pair{"id", col_id}, {"t", col_t}, {"x", col_x}, {"y", col_y}, {"z", col_z}}) {
    if (idx < 0) throw IngestError(source_name + ": missing required column '" + std::string(name) + "'", 0);
  }

  // variable slots: raw columns, coordinates, then derived names
  std::vector<std::string> names = raw_names;
  const std::size_t slot_t = names.size();
  for (const char* n : {"t", "x", "y", "z"}) names.emplace_back(n);
  const std::size_t slot_derived = names.size();
  for (const auto& n : derived_variable_names()) names.push_back(n);
  for (const auto& r : raw_names) {
    if (std::count(names.begin(), names.end(), r) > 1) {
      throw IngestError(source_name + ": raw column '" + r + "' shadows a built-in variable", 0);
    }
  }

  std::string source = expression;
  if (source.empty()) {
    if (raw_names.empty()) throw IngestError(source_name + ": no raw variable column and no derivation expression");
    source = raw_names.front();
  }
  const Expression expr = Expression::compile(source, names);

  std::vector<Record> records;
  while (next_line()) {
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw IngestError(source_name + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()),
                        line_offset);
    }
    Record r;
    r.offset = line_offset;
    double id = 0;
    if (!parse_number(fields[static_cast<std::size_t>(col_id)], id) || id != std::floor(id)) {
      throw IngestError(source_name + ": id must be an integer", line_offset);
    }
    r.id = static_cast<std::int64_t>(id);
    double* dst[4] = {&r.t, &r.x, &r.y, &r.z};
    const int src[4] = {col_t, col_x, col_y, col_z};
    for (int a = 0; a < 4; ++a) {
      if (!parse_number(fields[static_cast<std::size_t>(src[a])], *dst[a]) || !std::isfinite(*dst[a])) {
        throw IngestError(source_name + ": bad number '" + fields[static_cast<std::size_t>(src[a])] + "'", line_offset);
      }
    }
    for (int c : raw_cols) {
      double v = 0;
      if (!parse_number(fields[static_cast<std::size_t>(c)], v)) {
        throw IngestError(source_name + ": bad number '" + fields[static_cast<std::size_t>(c)] + "'", line_offset);
      }
      r.raw.push_back(v);
    }
    records.push_back(std::move(r));
  }

  // per-trajectory geometry, records in file order
  std::map<std::int64_t, std::vector<std::size_t>> by_traj;
  for (std::size_t i = 0; i < records.size(); ++i) by_traj[records[i].id].push_back(i);
  std::vector<double> path_length(records.size(), 0), displacement(records.size(), 0), speed(records.size(), 0);
  for (const auto& [id, idx] : by_traj) {
    double length = 0;
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const Record& cur = records[idx[n]];
      if (n > 0) {
        const Record& prev = records[idx[n - 1]];
        if (!(cur.t > prev.t)) {
          throw IngestError(source_name + ": times of trajectory " + std::to_string(id) + " are not strictly increasing",
                            cur.offset);
        }
        length += std::sqrt((cur.x - prev.x) * (cur.x - prev.x) + (cur.y - prev.y) * (cur.y - prev.y) +
                            (cur.z - prev.z) * (cur.z - prev.z));
      }
    }
    const Record& a = records[idx.front()];
    const Record& b = records[idx.back()];
    const double disp =
        std::sqrt((b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y) + (b.z - a.z) * (b.z - a.z));
    for (std::size_t n = 0; n < idx.size(); ++n) {
      path_length[idx[n]] = length;
      displacement[idx[n]] = disp;
      if (idx.size() < 2) continue;
      const std::size_t p = n == 0 ? idx[0] : idx[n - 1];
      const std::size_t q = n == 0 ? idx[1] : idx[n];
      const Record& rp = records[p];
      const Record& rq = records[q];
      const double d = std::sqrt((rq.x - rp.x) * (rq.x - rp.x) + (rq.y - rp.y) * (rq.y - rp.y) +
                                 (rq.z - rp.z) * (rq.z - rp.z));
      speed[idx[n]] = d / (rq.t - rp.t);
    }
  }

  PointLoadResult result;
  result.report.total_records = records.size();
  result.report.raw_columns = raw_names;
  result.report.expression = source;
  std::vector<double> slots(names.size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    std::copy(r.raw.begin(), r.raw.end(), slots.begin());
    slots[slot_t] = r.t;
    slots[slot_t + 1] = r.x;
    slots[slot_t + 2] = r.y;
    slots[slot_t + 3] = r.z;
    slots[slot_derived] = path_length[i];
    slots[slot_derived + 1] = displacement[i];
    slots[slot_derived + 2] = speed[i];
    const double v = expr.evaluate(slots);
    if (!std::isfinite(v)) {
      throw IngestError(source_name + ": expression '" + source + "' is not finite for trajectory " +
                            std::to_string(r.id),
                        r.offset);
    }
    if (domain && !domain->contains({r.x, r.y, r.z, r.t})) {
      ++result.report.rejected_out_of_domain;
      continue;
    }
    result.points.push({r.id, r.t, r.x, r.y, r.z, v});
  }
  result.report.accepted = result.points.size();
  result.points.index_steps();
  return result;
}

PointLoadResult load_points(const std::filesystem::path& path, const std::string& expression,
                            const std::optional<DomainExtent>& domain) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  return parse_points(in, path.string(), expression, domain);
}

namespace {
void put_number(std::ostream& os, double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, r.ptr - buf);
}
}  // namespace

void write_points(const PointSet& points, const std::filesystem::path& path, const std::string& value_column) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "id,t,x,y,z," << value_column << '\n';
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points.trajectory[i] << ',';
    put_number(out, points.cols.t[i]);
    out << ',';
    put_number(out, points.cols.x[i]);
    out << ',';
    put_number(out, points.cols.y[i]);
    out << ',';
    put_number(out, points.cols.z[i]);
    out << ',';
    put_number(out, points.cols.v[i]);
    out << '\n';
  }
}

}  // namespace mfseg
