#include "mfseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfseg/error.hpp"

namespace mfseg {

namespace {
constexpr const char* kAxisNames[4] = {"x", "y", "z", "t"};
}

DomainExtent::DomainExtent(const Dims4& min, const Dims4& max) : min_(min), max_(max) {
  for (int a = 0; a < 4; ++a) {
    if (!std::isfinite(min[a]) || !std::isfinite(max[a]) || !(max[a] > min[a])) {
      std::ostringstream os;
      os << "domain extent on axis " << kAxisNames[a] << " must satisfy max > min (got [" << min[a]
         << ", " << max[a] << "])";
      throw ParameterError(os.str());
    }
  }
}

bool DomainExtent::contains(const Location4& p) const {
  const double c[4] = {p.x, p.y, p.z, p.t};
  for (int a = 0; a < 4; ++a) {
    if (!(c[a] >= min_[a] && c[a] <= max_[a])) return false;
  }
  return true;
}

void ClusterParams::validate(bool has_points, bool has_fields) const {
  for (int a = 0; a < 4; ++a) {
    if (k[a] < 1) {
      throw ParameterError("k_" + std::to_string(a + 1) + " must be >= 1, got " + std::to_string(k[a]), "k");
    }
  }
  if (!(cf > 0) || !std::isfinite(cf)) throw ParameterError("cf must be > 0", "cf");
  if (!(wd >= 0) || !std::isfinite(wd)) throw ParameterError("wd must be >= 0", "wd");
  if (!(wp >= 0) || !std::isfinite(wp)) throw ParameterError("wp must be >= 0", "wp");
  if (!(wf >= 0) || !std::isfinite(wf)) throw ParameterError("wf must be >= 0", "wf");
  if (has_points && !(wd + wp > 0)) throw ParameterError("wd + wp must be > 0 when point data is present", "wp");
  if (has_fields && !(wd + wf > 0)) throw ParameterError("wd + wf must be > 0 when field data is present", "wf");
  if (!(eps_c > 0) || !std::isfinite(eps_c)) throw ParameterError("eps_c must be > 0", "eps_c");
  if (!(eps_m >= 0) || !std::isfinite(eps_m)) throw ParameterError("eps_m must be >= 0", "eps_m");
  if (max_iterations < 1) throw ParameterError("max_iterations must be >= 1", "max_iterations");
}

const ClusterCenter* Segmentation::find_center(ClusterId id) const {
  auto it = std::lower_bound(centers.begin(), centers.end(), id,
                             [](const ClusterCenter& c, ClusterId v) { return c.id < v; });
  if (it == centers.end() || it->id != id) return nullptr;
  return &*it;
}

void SampleColumns::reserve(std::size_t n) {
  x.reserve(n);
  y.reserve(n);
  z.reserve(n);
  t.reserve(n);
  v.reserve(n);
}

void SampleColumns::push(double px, double py, double pz, double pt, double pv) {
  x.push_back(px);
  y.push_back(py);
  z.push_back(pz);
  t.push_back(pt);
  v.push_back(pv);
}

Dims4 interval_distances(const DomainExtent& extent, const Counts4& k) {
  Dims4 c{};
  for (int a = 0; a < 4; ++a) {
    if (k[a] < 1) {
      throw ParameterError("k_" + std::to_string(a + 1) + " must be >= 1, got " + std::to_string(k[a]));
    }
    c[a] = extent.span(a) / k[a];
  }
  return c;
}

double space_time_distance(const Location4& a, const Location4& b, double cf) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  const double dt = cf * (a.t - b.t);
  return std::sqrt(dx * dx + dy * dy + dz * dz + dt * dt);
}

}  // namespace mfseg
