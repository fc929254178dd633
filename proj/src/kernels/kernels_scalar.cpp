#include <cmath>

#include "mfseg/kernels.hpp"

namespace mfseg::kernels {

ArgminHit windowed_argmin_scalar(const Location4& s, double value, const CandidateBlock& b,
                                 const WindowMetric& m) {
  ArgminHit hit;
  for (std::size_t j = 0; j < b.count; ++j) {
    const double dx = s.x - b.x[j];
    const double dy = s.y - b.y[j];
    const double dz = s.z - b.z[j];
    const double dtr = s.t - b.t[j];
    if (!(std::fabs(dx) <= m.half_width[0] && std::fabs(dy) <= m.half_width[1] &&
          std::fabs(dz) <= m.half_width[2] && std::fabs(dtr) <= m.half_width[3])) {
      continue;
    }
    const double dt = dtr * m.cf;
    double sum = dx * dx + dy * dy;
    sum = sum + dz * dz;
    sum = sum + dt * dt;
    const double vterm = (m.wv * std::fabs(value - b.value[j])) * b.has_value[j];
    const double d = vterm + m.wd * std::sqrt(sum);
    if (d < hit.distance) {
      hit.distance = d;
      hit.index = static_cast<std::ptrdiff_t>(j);
    }
  }
  return hit;
}

MinMax minmax_scalar(std::span<const double> values) {
  MinMax r;
  for (double v : values) {
    r.min = v < r.min ? v : r.min;
    r.max = v > r.max ? v : r.max;
  }
  return r;
}

}  // namespace mfseg::kernels
