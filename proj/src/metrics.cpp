#include "procqrf/metrics.hpp"

#include <cmath>
#include <string>

#include "procqrf/error.hpp"

namespace procqrf {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " actual values vs " + std::to_string(b) + " predictions");
  }
  if (a == 0) throw Error(ErrorCode::EmptyInput, "no instances");
}

}  // namespace

PointMetrics point_metrics(std::span<const double> actual, std::span<const double> predicted) {
  check_lengths(actual.size(), predicted.size());
  double squared = 0;
  double absolute = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double e = actual[i] - predicted[i];
    squared += e * e;
    absolute += std::fabs(e);
  }
  const double n = static_cast<double>(actual.size());
  return {std::sqrt(squared / n), absolute / n, actual.size()};
}

IntervalMetrics interval_metrics(std::span<const double> actual, std::span<const PredictionInterval> intervals,
                                 double epsilon) {
  check_lengths(actual.size(), intervals.size());
  if (!(epsilon > 0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  IntervalMetrics m;
  m.n = actual.size();
  std::size_t covered = 0;
  std::size_t with_rwidth = 0;
  double width_sum = 0;
  double rwidth_sum = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const auto& pi = intervals[i];
    if (pi.lower <= actual[i] && actual[i] <= pi.upper) ++covered;
    width_sum += pi.width();
    if (auto r = pi.rwidth(epsilon)) {
      rwidth_sum += *r;
      ++with_rwidth;
    }
  }
  if (with_rwidth == 0) {
    throw Error(ErrorCode::AllExcluded, "every point prediction is <= epsilon; MRPIW undefined");
  }
  const double n = static_cast<double>(m.n);
  m.picp = static_cast<double>(covered) / n;
  m.mpiw = width_sum / n;
  m.mrpiw = rwidth_sum / static_cast<double>(with_rwidth);
  m.n_excluded_rwidth = m.n - with_rwidth;
  return m;
}

CoverageBreakdown coverage_breakdown(std::span<const double> actual, std::span<const PredictionInterval> intervals) {
  check_lengths(actual.size(), intervals.size());
  std::size_t below = 0;
  std::size_t above = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < intervals[i].lower) {
      ++below;
    } else if (actual[i] > intervals[i].upper) {
      ++above;
    }
  }
  CoverageBreakdown b;
  const double n = static_cast<double>(actual.size());
  b.below_lower = static_cast<double>(below) / n;
  b.above_upper = static_cast<double>(above) / n;
  b.misses = below + above;
  if (b.misses > 0) {
    b.below_given_miss = static_cast<double>(below) / static_cast<double>(b.misses);
    b.above_given_miss = static_cast<double>(above) / static_cast<double>(b.misses);
  }
  return b;
}

}  // namespace procqrf
