#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "procqrf/qrf.hpp"

namespace procqrf {

struct PointMetrics {
  double rmse = 0;  // minutes
  double mae = 0;   // minutes
  std::size_t n = 0;
};

struct IntervalMetrics {
  double picp = 0;
  double mpiw = 0;   // minutes
  double mrpiw = 0;  // averaged over instances with point > epsilon
  std::size_t n = 0;
  std::size_t n_excluded_rwidth = 0;
};

PointMetrics point_metrics(std::span<const double> actual, std::span<const double> predicted);

// Coverage uses the closed interval [lower, upper]. Throws AllExcluded when
// no point prediction exceeds epsilon.
IntervalMetrics interval_metrics(std::span<const double> actual, std::span<const PredictionInterval> intervals,
                                 double epsilon = kDefaultRwidthEpsilon);

struct CoverageBreakdown {
  double below_lower = 0;  // share of all instances
  double above_upper = 0;
  // Shares among misses; empty when every instance is covered.
  std::optional<double> below_given_miss;
  std::optional<double> above_given_miss;
  std::size_t misses = 0;
};

CoverageBreakdown coverage_breakdown(std::span<const double> actual, std::span<const PredictionInterval> intervals);

}  // namespace procqrf
