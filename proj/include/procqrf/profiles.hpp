#pragma once

// Low/medium/high uncertainty profiles from relative interval widths.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "procqrf/metrics.hpp"

namespace procqrf {

struct ProfileThresholds {
  double p_low = 25;
  double p_high = 75;
  double low_cut = 0;
  double high_cut = 0;
  std::size_t n_calibration = 0;

  std::string to_json() const;
  static ProfileThresholds from_json(std::string_view text);
};

enum class UncertaintyProfile { Low = 0, Medium = 1, High = 2 };

inline constexpr std::array<UncertaintyProfile, 3> kProfiles{
    UncertaintyProfile::Low, UncertaintyProfile::Medium, UncertaintyProfile::High};

std::string_view to_string(UncertaintyProfile p);

// Linear-interpolation percentile of sorted data: index p/100 * (n - 1).
double percentile_sorted(std::span<const double> sorted, double percent);

ProfileThresholds calibrate_thresholds(std::span<const double> validation_rwidths, double p_low = 25,
                                       double p_high = 75);

// Low below low_cut, High above high_cut, Medium otherwise (boundaries included).
UncertaintyProfile assign_profile(double rwidth, const ProfileThresholds& thresholds);

struct ScoredInstance {
  double actual = 0;
  PredictionInterval interval;
};

struct ProfileReport {
  UncertaintyProfile profile = UncertaintyProfile::Low;
  std::size_t n = 0;
  double share = 0;
  // Absent when the profile is empty (or, for interval metrics, when no
  // point prediction exceeds epsilon).
  std::optional<PointMetrics> point;
  std::optional<IntervalMetrics> interval;
};

struct ProfileBreakdown {
  std::array<ProfileReport, 3> profiles;
  // Instances whose point prediction is <= epsilon have no rWidth and are
  // left out of every profile.
  std::size_t n_unassigned = 0;
  std::size_t n_total = 0;
};

ProfileBreakdown per_profile_report(std::span<const ScoredInstance> scored, const ProfileThresholds& thresholds,
                                    double epsilon = kDefaultRwidthEpsilon);

}  // namespace procqrf
