#pragma once

// Supervised datasets built from event logs: per-event feature extraction,
// training-fitted encoding, and the chronological case-level split.

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "procqrf/event_log.hpp"

namespace procqrf {

struct ActivityStat {
  double mean = 0;  // minutes
  double std = 0;   // population standard deviation, minutes
  std::size_t count = 0;
};

struct ActivityStats {
  std::map<std::string, ActivityStat> per_activity;
  double global_mean = 0;
  std::size_t global_count = 0;

  // Mean processing time for an activity; global training mean when unseen.
  double mean_or_global(const std::string& activity) const;
};

// Statistics over (activity, minutes) observations.
struct LabeledEvent {
  std::string activity;
  double minutes = 0;
};
ActivityStats compute_activity_stats(std::span<const LabeledEvent> observations);

enum class FeatureKind { Numeric, Categorical };

// One original (pre-encoding) feature and the encoded columns it owns.
struct FeatureGroup {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  std::vector<std::size_t> columns;
  // Category label of each column, for categorical groups.
  std::vector<std::string> categories;
};

inline constexpr std::string_view kActivityFeature = "activity";
inline constexpr std::string_view kPositionFeature = "event_position";
inline constexpr std::string_view kTraceLengthFeature = "trace_length";
inline constexpr std::string_view kPreviousActivityFeature = "prev_activity";
inline constexpr std::string_view kMeanStatFeature = "MEAN_stat_Processing_Time";
inline constexpr std::string_view kNoPreviousActivity = "null";

// Encoding fitted on training traces. Column layout:
//   activity one-hot | numeric attributes | categorical attribute one-hots |
//   event_position | trace_length | prev_activity one-hot (incl. "null") |
//   MEAN_stat_Processing_Time
// Categories never seen in training encode as an all-zero group.
class FeatureEncoder {
 public:
  static FeatureEncoder fit(std::span<const Trace> training_traces, const AttributeSchema& schema);

  std::vector<double> encode(const Trace& trace, std::size_t event_index) const;

  std::size_t column_count() const noexcept { return column_names_.size(); }
  const std::vector<std::string>& column_names() const noexcept { return column_names_; }
  const std::vector<FeatureGroup>& groups() const noexcept { return groups_; }
  const ActivityStats& stats() const noexcept { return stats_; }
  const AttributeSchema& attribute_schema() const noexcept { return schema_; }

  std::size_t group_index(std::string_view name) const;  // throws UnknownFeature
  // Human-readable value of an original feature in an encoded row: category
  // label (or "<unseen>") for categorical groups, the number otherwise.
  std::string describe(std::size_t group, std::span<const double> row) const;
  // Numeric value of an original feature: the column value for numeric
  // groups, the category index (or -1 when unseen) for categorical groups.
  double numeric_value(std::size_t group, std::span<const double> row) const;

  std::string canonical_json() const;
  std::string hash() const;

 private:
  AttributeSchema schema_;
  ActivityStats stats_;
  std::vector<std::string> activities_;
  // Fill value for missing optional numeric attributes (training mean).
  std::map<std::string, double> numeric_fill_;
  std::vector<std::string> column_names_;
  std::vector<FeatureGroup> groups_;
};

struct Instance {
  std::vector<double> x;
  double target = 0;  // minutes
  std::string case_id;
  std::string activity;
  std::size_t event_index = 0;  // 0-based position within the trace
};

struct Dataset {
  std::shared_ptr<const FeatureEncoder> encoder;
  std::vector<Instance> instances;

  std::size_t size() const noexcept { return instances.size(); }
  bool empty() const noexcept { return instances.empty(); }
  std::vector<double> targets() const;
};

// One instance per event of each trace.
Dataset build_dataset(std::span<const Trace> traces, std::shared_ptr<const FeatureEncoder> encoder);

ActivityStats compute_activity_stats(const Dataset& train);

struct SplitRatios {
  double train = 0.85;
  double validation = 0.075;
  double test = 0.075;
};

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::shared_ptr<const FeatureEncoder> encoder;
  std::vector<std::string> train_cases;
  std::vector<std::string> validation_cases;
  std::vector<std::string> test_cases;
};

// Case counts per subset: ceil for train, nearest (half up) for validation,
// remainder to test; each subset keeps at least one case.
std::array<std::size_t, 3> split_sizes(std::size_t cases, const SplitRatios& ratios);

// Cases ordered by earliest t_start (ties by case_id) and cut into
// train/validation/test blocks. Encoding and activity statistics are fitted
// on the training block only.
DatasetSplit chronological_split(const EventLog& log, const SplitRatios& ratios = {});

// Encoded columns followed by `target`.
void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace procqrf
