#pragma once

// Synthetic manufacturing event logs whose event durations follow known
// log-normal distributions, so true conditional quantiles are available.
//
// Per event: log(minutes) ~ N(mu, sigma^2) with
//   mu    = base(activity) + sum_k effect_k * (v_k - min_k) / (max_k - min_k)
//           + article_group_effect
//   sigma = sigma(activity) + material_sigma_offset

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "procqrf/event_log.hpp"

namespace procqrf {

struct NumericAttributeRange {
  std::string name;
  double min = 0;
  double max = 1;
  // Log-space duration effect at the top of the range.
  double effect = 0;
  bool integral = true;
};

struct GeneratorConfig {
  std::size_t n_cases = 1000;
  std::size_t n_activities = 30;
  std::uint64_t seed = 7;

  std::vector<NumericAttributeRange> numeric{
      {"Quantity", 1, 50, 0.6, true},
      {"Weight", 0.5, 200, 0.2, false},
      {"Sheet_Width", 2, 30, 0.0, true},
      {"Bend_Radius_S", 100, 1000, 0.4, true},
      {"Diam_Base", 200, 3000, 0.1, true},
  };
  std::vector<std::string> materials{"Stainless_Steel", "Aluminum", "Carbon_Steel"};
  std::vector<double> material_sigma_offset{0.15, 0.0, 0.05};
  std::size_t article_groups = 6;
  std::vector<double> article_group_effect{0.0, 0.1, -0.1, 0.2, -0.05, 0.05};
  std::size_t resources = 8;

  // Activity base medians spread geometrically over [low, high] minutes.
  double base_median_low = 8;
  double base_median_high = 85;
  double sigma_low = 0.5;
  double sigma_high = 1.0;

  // Trace length 2 + Binomial(length_trials, length_p).
  std::size_t length_trials = 6;
  double length_p = 2.6 / 6.0;

  double mean_case_interarrival_minutes = 30;
  double mean_event_gap_minutes = 20;
  std::int64_t start_epoch = 1577836800;  // 2020-01-01T00:00:00Z

  void validate() const;  // throws InvalidConfig
};

struct DurationParameters {
  std::string activity;
  double mu = 0;
  double sigma = 1;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  // Keyed by (case_id, 0-based event index in the trace).
  std::map<std::pair<std::string, std::size_t>, DurationParameters> events;

  const DurationParameters& at(const std::string& case_id, std::size_t event_index) const;  // throws UnknownEvent
  std::string to_json() const;
  static GroundTruth from_json(std::string_view text);
};

struct GeneratedLog {
  EventLog log;
  GroundTruth truth;
};

AttributeSchema synthetic_schema(const GeneratorConfig& config);
std::vector<std::string> synthetic_activities(std::size_t n);

GeneratedLog generate_log(const GeneratorConfig& config);

// exp(mu + sigma * Phi^-1(alpha)), minutes.
double lognormal_quantile(double mu, double sigma, double alpha);
double true_quantile(const GroundTruth& truth, const std::string& case_id, std::size_t event_index, double alpha);

}  // namespace procqrf
