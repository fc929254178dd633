#pragma once

// Inner-loop arithmetic of the assignment step. Each kernel has a scalar
// reference and an AVX2 variant; the variants are selected at runtime and must
// produce bit-identical results (the build disables FP contraction so both use
// the same rounded operations in the same order).

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>

#include "mfseg/model.hpp"

namespace mfseg::kernels {

/// Candidate counts are padded to a multiple of this.
inline constexpr std::size_t kLanes = 4;

/// Padding entries carry this coordinate so they never pass the window test.
inline constexpr double kPadCoordinate = std::numeric_limits<double>::infinity();

/// Structure-of-arrays view over candidate centers, ordered by ascending
/// cluster id. `has_value` is 1.0 where the center carries an average for the
/// queried sample kind and 0.0 where it is absent (then `value` must be 0).
struct CandidateBlock {
  const double* x = nullptr;
  const double* y = nullptr;
  const double* z = nullptr;
  const double* t = nullptr;
  const double* value = nullptr;
  const double* has_value = nullptr;
  std::size_t count = 0;
};

struct WindowMetric {
  double cf = 1;
  double wd = 1;
  /// w_p for point samples, w_f for field samples.
  double wv = 1;
  /// Per-axis window half-widths; the time entry is in time units.
  Dims4 half_width{};
};

struct ArgminHit {
  /// Position in the candidate block, -1 when no candidate lies in the window.
  std::ptrdiff_t index = -1;
  double distance = std::numeric_limits<double>::infinity();
};

struct MinMax {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
};

/// Minimizes w_v|v - value_c| + w_d S_st over candidates whose location lies
/// within the box |s - c| <= half_width. Ties resolve to the lowest position.
using WindowedArgminFn = ArgminHit (*)(const Location4& sample, double value, const CandidateBlock& block,
                                       const WindowMetric& metric);
using MinMaxFn = MinMax (*)(std::span<const double> values);

ArgminHit windowed_argmin_scalar(const Location4& sample, double value, const CandidateBlock& block,
                                 const WindowMetric& metric);
MinMax minmax_scalar(std::span<const double> values);

#if defined(MFSEG_HAVE_AVX2)
ArgminHit windowed_argmin_avx2(const Location4& sample, double value, const CandidateBlock& block,
                               const WindowMetric& metric);
MinMax minmax_avx2(std::span<const double> values);
#endif

enum class Isa { Auto, Scalar, Avx2 };

struct KernelSet {
  std::string_view name;
  WindowedArgminFn windowed_argmin;
  MinMaxFn minmax;
};

/// True when the variant was compiled in and the running CPU supports it.
bool available(Isa isa);

/// Kernel table for `isa`. Auto picks the widest available variant unless the
/// MFSEG_KERNEL environment variable names one ("scalar" or "avx2").
/// Throws std::invalid_argument when an explicit variant is unavailable.
const KernelSet& select(Isa isa = Isa::Auto);

}  // namespace mfseg::kernels
