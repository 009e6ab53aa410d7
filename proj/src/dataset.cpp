#include "procqrf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

double ActivityStats::mean_or_global(const std::string& activity) const {
  auto it = per_activity.find(activity);
  return it == per_activity.end() ? global_mean : it->second.mean;
}

ActivityStats compute_activity_stats(std::span<const LabeledEvent> observations) {
  if (observations.empty()) throw Error(ErrorCode::EmptyDataset, "no training observations");
  ActivityStats stats;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  double total = 0;
  for (const auto& o : observations) {
    auto& [sum, count] = sums[o.activity];
    sum += o.minutes;
    ++count;
    total += o.minutes;
  }
  for (const auto& [activity, sc] : sums) {
    ActivityStat s;
    s.count = sc.second;
    s.mean = sc.first / static_cast<double>(sc.second);
    stats.per_activity.emplace(activity, s);
  }
  // Second pass for a numerically stable spread.
  std::map<std::string, double> squares;
  for (const auto& o : observations) {
    const double d = o.minutes - stats.per_activity[o.activity].mean;
    squares[o.activity] += d * d;
  }
  for (auto& [activity, s] : stats.per_activity) {
    s.std = std::sqrt(squares[activity] / static_cast<double>(s.count));
  }
  stats.global_count = observations.size();
  stats.global_mean = total / static_cast<double>(observations.size());
  return stats;
}

ActivityStats compute_activity_stats(const Dataset& train) {
  std::vector<LabeledEvent> obs;
  obs.reserve(train.size());
  for (const auto& inst : train.instances) obs.push_back({inst.activity, inst.target});
  return compute_activity_stats(obs);
}

FeatureEncoder FeatureEncoder::fit(std::span<const Trace> training_traces, const AttributeSchema& schema) {
  FeatureEncoder enc;
  enc.schema_ = schema;

  std::vector<LabeledEvent> labeled;
  std::set<std::string> activities;
  std::map<std::string, std::set<std::string>> categories;
  std::map<std::string, std::pair<double, std::size_t>> numeric_sums;
  for (const auto& trace : training_traces) {
    for (const auto& e : trace.events) {
      labeled.push_back({e.activity, event_processing_time(e)});
      activities.insert(e.activity);
      for (const auto& spec : schema.attributes()) {
        auto it = e.attributes.find(spec.name);
        if (it == e.attributes.end()) continue;
        if (spec.kind == AttributeKind::Categorical) {
          if (const auto* s = std::get_if<std::string>(&it->second)) {
            categories[spec.name].insert(*s);
          } else {
            categories[spec.name].insert(format_double(std::get<double>(it->second)));
          }
        } else if (const auto* d = std::get_if<double>(&it->second)) {
          auto& [sum, count] = numeric_sums[spec.name];
          sum += *d;
          ++count;
        }
      }
    }
  }
  enc.stats_ = compute_activity_stats(labeled);
  enc.activities_.assign(activities.begin(), activities.end());
  for (const auto& spec : schema.attributes()) {
    if (spec.kind != AttributeKind::Numeric) continue;
    auto it = numeric_sums.find(spec.name);
    enc.numeric_fill_[spec.name] =
        it == numeric_sums.end() ? 0.0 : it->second.first / static_cast<double>(it->second.second);
  }

  auto add_numeric = [&enc](std::string name) {
    FeatureGroup g;
    g.name = name;
    g.kind = FeatureKind::Numeric;
    g.columns.push_back(enc.column_names_.size());
    enc.column_names_.push_back(std::move(name));
    enc.groups_.push_back(std::move(g));
  };
  auto add_categorical = [&enc](std::string name, const std::vector<std::string>& labels) {
    FeatureGroup g;
    g.name = name;
    g.kind = FeatureKind::Categorical;
    for (const auto& label : labels) {
      g.columns.push_back(enc.column_names_.size());
      g.categories.push_back(label);
      enc.column_names_.push_back(name + "=" + label);
    }
    enc.groups_.push_back(std::move(g));
  };

  add_categorical(std::string(kActivityFeature), enc.activities_);
  for (const auto& spec : schema.attributes()) {
    if (spec.kind == AttributeKind::Numeric) add_numeric(spec.name);
  }
  for (const auto& spec : schema.attributes()) {
    if (spec.kind != AttributeKind::Categorical) continue;
    const auto& cats = categories[spec.name];
    add_categorical(spec.name, std::vector<std::string>(cats.begin(), cats.end()));
  }
  add_numeric(std::string(kPositionFeature));
  add_numeric(std::string(kTraceLengthFeature));
  std::vector<std::string> previous{std::string(kNoPreviousActivity)};
  previous.insert(previous.end(), enc.activities_.begin(), enc.activities_.end());
  add_categorical(std::string(kPreviousActivityFeature), previous);
  add_numeric(std::string(kMeanStatFeature));
  return enc;
}

namespace {

void set_category(const FeatureGroup& g, std::string_view label, std::vector<double>& row) {
  auto it = std::lower_bound(g.categories.begin(), g.categories.end(), label);
  if (it != g.categories.end() && *it == label) {
    row[g.columns[static_cast<std::size_t>(it - g.categories.begin())]] = 1.0;
  }
}

void set_previous_activity(const FeatureGroup& g, std::string_view label, std::vector<double>& row) {
  // categories[0] is the "null" marker; the rest are sorted activities.
  if (label == kNoPreviousActivity) {
    row[g.columns[0]] = 1.0;
    return;
  }
  auto it = std::lower_bound(g.categories.begin() + 1, g.categories.end(), label);
  if (it != g.categories.end() && *it == label) {
    row[g.columns[static_cast<std::size_t>(it - g.categories.begin())]] = 1.0;
  }
}

}  // namespace

std::vector<double> FeatureEncoder::encode(const Trace& trace, std::size_t event_index) const {
  if (event_index >= trace.size()) {
    throw Error(ErrorCode::InvalidArgument, "event index " + std::to_string(event_index) +
                                                " outside trace '" + trace.case_id + "'");
  }
  const Event& e = trace.events[event_index];
  std::vector<double> row(column_names_.size(), 0.0);

  std::size_t g = 0;
  set_category(groups_[g++], e.activity, row);
  for (const auto& spec : schema_.attributes()) {
    if (spec.kind != AttributeKind::Numeric) continue;
    const FeatureGroup& group = groups_[g++];
    auto it = e.attributes.find(spec.name);
    if (it == e.attributes.end()) {
      if (!spec.optional) {
        throw Error(ErrorCode::SchemaMismatch,
                    "case '" + e.case_id + "': required attribute '" + spec.name + "' missing");
      }
      row[group.columns[0]] = numeric_fill_.at(spec.name);
    } else if (const auto* d = std::get_if<double>(&it->second)) {
      row[group.columns[0]] = *d;
    } else {
      throw Error(ErrorCode::SchemaMismatch,
                  "case '" + e.case_id + "': attribute '" + spec.name + "' is not numeric");
    }
  }
  for (const auto& spec : schema_.attributes()) {
    if (spec.kind != AttributeKind::Categorical) continue;
    const FeatureGroup& group = groups_[g++];
    auto it = e.attributes.find(spec.name);
    if (it == e.attributes.end()) {
      if (!spec.optional) {
        throw Error(ErrorCode::SchemaMismatch,
                    "case '" + e.case_id + "': required attribute '" + spec.name + "' missing");
      }
      continue;
    }
    if (const auto* s = std::get_if<std::string>(&it->second)) {
      set_category(group, *s, row);
    } else {
      set_category(group, format_double(std::get<double>(it->second)), row);
    }
  }
  row[groups_[g++].columns[0]] = static_cast<double>(event_index + 1);
  row[groups_[g++].columns[0]] = static_cast<double>(trace.size());
  set_previous_activity(groups_[g++],
                        event_index == 0 ? kNoPreviousActivity
                                         : std::string_view(trace.events[event_index - 1].activity),
                        row);
  row[groups_[g++].columns[0]] = stats_.mean_or_global(e.activity);
  return row;
}

std::size_t FeatureEncoder::group_index(std::string_view name) const {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].name == name) return i;
  }
  throw Error(ErrorCode::UnknownFeature, "no feature named '" + std::string(name) + "'");
}

std::string FeatureEncoder::describe(std::size_t group, std::span<const double> row) const {
  const FeatureGroup& g = groups_.at(group);
  if (g.kind == FeatureKind::Numeric) return format_double(row[g.columns[0]]);
  for (std::size_t k = 0; k < g.columns.size(); ++k) {
    if (row[g.columns[k]] != 0.0) return g.categories[k];
  }
  return "<unseen>";
}

double FeatureEncoder::numeric_value(std::size_t group, std::span<const double> row) const {
  const FeatureGroup& g = groups_.at(group);
  if (g.kind == FeatureKind::Numeric) return row[g.columns[0]];
  for (std::size_t k = 0; k < g.columns.size(); ++k) {
    if (row[g.columns[k]] != 0.0) return static_cast<double>(k);
  }
  return -1.0;
}

std::string FeatureEncoder::canonical_json() const {
  nlohmann::ordered_json doc;
  doc["attributes"] = nlohmann::ordered_json::parse(schema_.to_json());
  doc["columns"] = column_names_;
  nlohmann::ordered_json stats = nlohmann::ordered_json::object();
  for (const auto& [activity, s] : stats_.per_activity) {
    stats[activity] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
  }
  doc["activity_stats"] = std::move(stats);
  doc["global_mean"] = stats_.global_mean;
  doc["numeric_fill"] = numeric_fill_;
  return doc.dump();
}

std::string FeatureEncoder::hash() const { return hex64(fnv1a(canonical_json())); }

std::vector<double> Dataset::targets() const {
  std::vector<double> y;
  y.reserve(instances.size());
  for (const auto& inst : instances) y.push_back(inst.target);
  return y;
}

Dataset build_dataset(std::span<const Trace> traces, std::shared_ptr<const FeatureEncoder> encoder) {
  Dataset data;
  data.encoder = std::move(encoder);
  for (const auto& trace : traces) {
    for (std::size_t i = 0; i < trace.size(); ++i) {
      Instance inst;
      inst.x = data.encoder->encode(trace, i);
      inst.target = event_processing_time(trace.events[i]);
      inst.case_id = trace.case_id;
      inst.activity = trace.events[i].activity;
      inst.event_index = i;
      data.instances.push_back(std::move(inst));
    }
  }
  return data;
}

std::array<std::size_t, 3> split_sizes(std::size_t cases, const SplitRatios& ratios) {
  if (!(ratios.train > 0) || !(ratios.validation > 0) || !(ratios.test > 0) ||
      std::fabs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must be positive and sum to 1");
  }
  if (cases < 3) {
    throw Error(ErrorCode::TooFewCases, "need at least 3 cases, got " + std::to_string(cases));
  }
  const double n = static_cast<double>(cases);
  // The 1e-9 slack keeps products like 0.85 * 100 from rounding up to 86.
  auto train = static_cast<std::size_t>(std::ceil(ratios.train * n - 1e-9));
  train = std::clamp<std::size_t>(train, 1, cases - 2);
  auto validation = static_cast<std::size_t>(std::floor(ratios.validation * n + 0.5 + 1e-9));
  validation = std::clamp<std::size_t>(validation, 1, cases - train - 1);
  return {train, validation, cases - train - validation};
}

DatasetSplit chronological_split(const EventLog& log, const SplitRatios& ratios) {
  const auto sizes = split_sizes(log.traces.size(), ratios);

  std::vector<const Trace*> order;
  order.reserve(log.traces.size());
  for (const auto& t : log.traces) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](const Trace* a, const Trace* b) {
    if (a->first_start() != b->first_start()) return a->first_start() < b->first_start();
    return a->case_id < b->case_id;
  });

  std::array<std::vector<Trace>, 3> parts;
  std::size_t k = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < sizes[p]; ++i) parts[p].push_back(*order[k++]);
  }

  DatasetSplit split;
  split.encoder = std::make_shared<const FeatureEncoder>(FeatureEncoder::fit(parts[0], log.schema));
  split.train = build_dataset(parts[0], split.encoder);
  split.validation = build_dataset(parts[1], split.encoder);
  split.test = build_dataset(parts[2], split.encoder);
  for (const auto& t : parts[0]) split.train_cases.push_back(t.case_id);
  for (const auto& t : parts[1]) split.validation_cases.push_back(t.case_id);
  for (const auto& t : parts[2]) split.test_cases.push_back(t.case_id);
  return split;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  csv::Row row = data.encoder->column_names();
  row.push_back("target");
  csv::write_row(out, row);
  for (const auto& inst : data.instances) {
    row.clear();
    for (double v : inst.x) row.push_back(format_double(v));
    row.push_back(format_double(inst.target));
    csv::write_row(out, row);
  }
}

}  // namespace procqrf
