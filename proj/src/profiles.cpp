#include "procqrf/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "json.hpp"

#include "procqrf/error.hpp"

namespace procqrf {

std::string_view to_string(UncertaintyProfile p) {
  switch (p) {
    case UncertaintyProfile::Low: return "low";
    case UncertaintyProfile::Medium: return "medium";
    case UncertaintyProfile::High: return "high";
  }
  return "unknown";
}

std::string ProfileThresholds::to_json() const {
  nlohmann::ordered_json doc;
  doc["p_low"] = p_low;
  doc["p_high"] = p_high;
  doc["low_cut"] = low_cut;
  doc["high_cut"] = high_cut;
  doc["n_calibration"] = n_calibration;
  return doc.dump(2) + "\n";
}

ProfileThresholds ProfileThresholds::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    ProfileThresholds t;
    t.p_low = doc.at("p_low").get<double>();
    t.p_high = doc.at("p_high").get<double>();
    t.low_cut = doc.at("low_cut").get<double>();
    t.high_cut = doc.at("high_cut").get<double>();
    t.n_calibration = doc.at("n_calibration").get<std::size_t>();
    if (!(t.low_cut <= t.high_cut) || !(0 < t.p_low && t.p_low < t.p_high && t.p_high < 100)) {
      throw Error(ErrorCode::FormatError, "thresholds violate 0 < p_low < p_high < 100 or low_cut <= high_cut");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("thresholds file: ") + e.what());
  }
}

double percentile_sorted(std::span<const double> sorted, double percent) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "percentile of empty data");
  const double index = percent / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(index));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = index - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ProfileThresholds calibrate_thresholds(std::span<const double> validation_rwidths, double p_low, double p_high) {
  if (!(0 < p_low && p_low < p_high && p_high < 100)) {
    throw Error(ErrorCode::InvalidArgument, "percentiles must satisfy 0 < p_low < p_high < 100");
  }
  if (validation_rwidths.size() < 4) {
    throw Error(ErrorCode::TooFewInstances, "need at least 4 rWidth values, got " +
                                                std::to_string(validation_rwidths.size()));
  }
  std::vector<double> sorted(validation_rwidths.begin(), validation_rwidths.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "rWidth values must be finite");
  }
  std::sort(sorted.begin(), sorted.end());
  ProfileThresholds t;
  t.p_low = p_low;
  t.p_high = p_high;
  t.low_cut = percentile_sorted(sorted, p_low);
  t.high_cut = percentile_sorted(sorted, p_high);
  t.n_calibration = sorted.size();
  return t;
}

UncertaintyProfile assign_profile(double rwidth, const ProfileThresholds& thresholds) {
  if (!std::isfinite(rwidth)) throw Error(ErrorCode::NonFiniteInput, "rWidth must be finite");
  if (rwidth < thresholds.low_cut) return UncertaintyProfile::Low;
  if (rwidth > thresholds.high_cut) return UncertaintyProfile::High;
  return UncertaintyProfile::Medium;
}

ProfileBreakdown per_profile_report(std::span<const ScoredInstance> scored, const ProfileThresholds& thresholds,
                                    double epsilon) {
  if (scored.empty()) throw Error(ErrorCode::EmptyInput, "no scored instances");
  std::array<std::vector<double>, 3> actual;
  std::array<std::vector<double>, 3> point;
  std::array<std::vector<PredictionInterval>, 3> intervals;
  ProfileBreakdown out;
  out.n_total = scored.size();
  for (const auto& s : scored) {
    const auto r = s.interval.rwidth(epsilon);
    if (!r) {
      ++out.n_unassigned;
      continue;
    }
    const auto k = static_cast<std::size_t>(assign_profile(*r, thresholds));
    actual[k].push_back(s.actual);
    point[k].push_back(s.interval.point);
    intervals[k].push_back(s.interval);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    ProfileReport& rep = out.profiles[k];
    rep.profile = kProfiles[k];
    rep.n = actual[k].size();
    rep.share = static_cast<double>(rep.n) / static_cast<double>(out.n_total);
    if (rep.n == 0) continue;
    rep.point = point_metrics(actual[k], point[k]);
    rep.interval = interval_metrics(actual[k], intervals[k], epsilon);
  }
  return out;
}

}  // namespace procqrf
