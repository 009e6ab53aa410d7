#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "procqrf/dataset.hpp"
#include "procqrf/error.hpp"
#include "test_support.hpp"

using namespace procqrf;
using namespace procqrf::testing;

namespace {

const AttributeSchema kSchema({{"Quantity", AttributeKind::Numeric, false},
                               {"Sheet_Width", AttributeKind::Numeric, true},
                               {"Material", AttributeKind::Categorical, false}});

EventLog small_log() {
  return parse_csv(
      "case_id,activity,t_start,t_complete,Quantity,Sheet_Width,Material\n"
      "C1,Cut,0,600,3,15,Steel\n"
      "C1,Weld,1000,2200,3,15,Steel\n"
      "C2,Cut,50,1250,5,,Aluminum\n",
      kSchema);
}

std::size_t column_of(const FeatureEncoder& enc, const std::string& name) {
  const auto& names = enc.column_names();
  auto it = std::find(names.begin(), names.end(), name);
  REQUIRE(it != names.end());
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

TEST_CASE("activity statistics use the population standard deviation") {
  const std::vector<LabeledEvent> obs{{"A", 10}, {"A", 20}, {"B", 7}};
  const ActivityStats s = compute_activity_stats(obs);
  CHECK(s.per_activity.at("A").mean == 15.0);
  CHECK(s.per_activity.at("A").std == 5.0);
  CHECK(s.per_activity.at("A").count == 2);
  CHECK(s.per_activity.at("B").mean == 7.0);
  CHECK(s.per_activity.at("B").std == 0.0);
  CHECK(s.per_activity.at("B").count == 1);
  CHECK(s.global_mean == doctest::Approx(37.0 / 3.0));
  CHECK(s.mean_or_global("unseen") == s.global_mean);
  CHECK_THROWS_AS(compute_activity_stats(std::vector<LabeledEvent>{}), Error);
}

TEST_CASE("encoded layout and pass-through numeric values") {
  const EventLog log = small_log();
  const FeatureEncoder enc = FeatureEncoder::fit(log.traces, log.schema);
  const auto& g = enc.groups();
  REQUIRE(g.size() == 8);
  CHECK(g[0].name == "activity");
  CHECK(g[1].name == "Quantity");
  CHECK(g[2].name == "Sheet_Width");
  CHECK(g[3].name == "Material");
  CHECK(g[4].name == "event_position");
  CHECK(g[5].name == "trace_length");
  CHECK(g[6].name == "prev_activity");
  CHECK(g[7].name == "MEAN_stat_Processing_Time");
  CHECK(g[6].categories.front() == "null");

  // Every column belongs to exactly one group.
  std::vector<int> owners(enc.column_count(), 0);
  for (const auto& grp : g) {
    for (auto c : grp.columns) ++owners[c];
  }
  CHECK(std::all_of(owners.begin(), owners.end(), [](int k) { return k == 1; }));

  const auto x = enc.encode(log.traces[0], 0);
  CHECK(x.size() == enc.column_count());
  CHECK(x[column_of(enc, "Quantity")] == 3.0);
  CHECK(x[column_of(enc, "Sheet_Width")] == 15.0);
  CHECK(x[column_of(enc, "activity=Cut")] == 1.0);
  CHECK(x[column_of(enc, "activity=Weld")] == 0.0);
  CHECK(x[column_of(enc, "Material=Steel")] == 1.0);
  CHECK(x[column_of(enc, "event_position")] == 1.0);
  CHECK(x[column_of(enc, "trace_length")] == 2.0);
  // Cut: (10 + 20) / 2 minutes.
  CHECK(x[column_of(enc, "MEAN_stat_Processing_Time")] == 15.0);

  // First event: only the "null" previous-activity column is set.
  for (std::size_t k = 0; k < g[6].columns.size(); ++k) {
    CHECK(x[g[6].columns[k]] == (g[6].categories[k] == "null" ? 1.0 : 0.0));
  }
  const auto x2 = enc.encode(log.traces[0], 1);
  CHECK(x2[column_of(enc, "prev_activity=Cut")] == 1.0);
  CHECK(x2[column_of(enc, "prev_activity=null")] == 0.0);
  CHECK(x2[column_of(enc, "event_position")] == 2.0);

  CHECK(enc.describe(3, x) == "Steel");
  CHECK(enc.describe(1, x) == "3");
  CHECK(enc.group_index("Material") == 3);
  CHECK_THROWS_AS(enc.group_index("Nope"), Error);
}

TEST_CASE("missing optional numeric attribute takes the training mean") {
  const EventLog log = small_log();
  const FeatureEncoder enc = FeatureEncoder::fit(log.traces, log.schema);
  const auto x = enc.encode(log.traces[1], 0);
  CHECK(x[column_of(enc, "Sheet_Width")] == 15.0);
}

TEST_CASE("unseen categories encode as zeros and unseen activities use the global mean") {
  const EventLog log = small_log();
  const FeatureEncoder enc = FeatureEncoder::fit(log.traces, log.schema);
  Trace t;
  t.case_id = "C9";
  Event e = make_event("C9", "Polish", 0, 60);
  e.attributes["Quantity"] = 1.0;
  e.attributes["Material"] = std::string("Titanium");
  t.events.push_back(e);
  const auto x = enc.encode(t, 0);
  for (auto c : enc.groups()[0].columns) CHECK(x[c] == 0.0);
  for (auto c : enc.groups()[3].columns) CHECK(x[c] == 0.0);
  CHECK(x.size() == enc.column_count());
  // Training targets: 10, 20, 20 minutes.
  CHECK(x[column_of(enc, "MEAN_stat_Processing_Time")] == doctest::Approx(50.0 / 3.0));
  CHECK(enc.describe(0, x) == "<unseen>");
  CHECK(enc.numeric_value(0, x) == -1.0);
}

TEST_CASE("missing required attribute is a schema mismatch") {
  const EventLog log = small_log();
  const FeatureEncoder enc = FeatureEncoder::fit(log.traces, log.schema);
  Trace t;
  t.case_id = "C9";
  t.events.push_back(make_event("C9", "Cut", 0, 60));
  try {
    enc.encode(t, 0);
    FAIL("expected SchemaMismatch");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::SchemaMismatch);
  }
}

TEST_CASE("split sizes follow ceiling, nearest, remainder") {
  CHECK(split_sizes(100, {}) == std::array<std::size_t, 3>{85, 8, 7});
  CHECK(split_sizes(3, {}) == std::array<std::size_t, 3>{1, 1, 1});
  CHECK(split_sizes(12077, {}) == std::array<std::size_t, 3>{10266, 906, 905});
  for (std::size_t n = 3; n < 400; ++n) {
    const auto s = split_sizes(n, {});
    CHECK(s[0] + s[1] + s[2] == n);
    CHECK(s[0] >= 1);
    CHECK(s[1] >= 1);
    CHECK(s[2] >= 1);
  }
  try {
    split_sizes(2, {});
    FAIL("expected TooFewCases");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewCases);
  }
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.5}), Error);
}

TEST_CASE("chronological split is disjoint, complete and ordered") {
  const GeneratedLog g = synthetic(100);
  const DatasetSplit s = chronological_split(g.log);
  CHECK(s.train_cases.size() == 85);
  CHECK(s.validation_cases.size() == 8);
  CHECK(s.test_cases.size() == 7);

  std::map<std::string, double> first;
  for (const auto& t : g.log.traces) first[t.case_id] = t.first_start();
  std::set<std::string> all;
  for (const auto* part : {&s.train_cases, &s.validation_cases, &s.test_cases}) {
    for (const auto& id : *part) CHECK(all.insert(id).second);
  }
  CHECK(all.size() == g.log.traces.size());

  auto key = [&](const std::string& id) { return std::make_pair(first[id], id); };
  for (const auto& a : s.train_cases) {
    for (const auto& b : s.validation_cases) CHECK(key(a) < key(b));
    for (const auto& b : s.test_cases) CHECK(key(a) < key(b));
  }
  for (const auto& a : s.validation_cases) {
    for (const auto& b : s.test_cases) CHECK(key(a) < key(b));
  }

  // Every instance target equals the processing time of its source event.
  std::map<std::string, const Trace*> by_id;
  for (const auto& t : g.log.traces) by_id[t.case_id] = &t;
  for (const Dataset* d : {&s.train, &s.validation, &s.test}) {
    for (const auto& inst : d->instances) {
      CHECK(inst.target == event_processing_time(by_id[inst.case_id]->events[inst.event_index]));
      CHECK(inst.x.size() == s.encoder->column_count());
    }
  }
  CHECK(s.train.size() + s.validation.size() + s.test.size() == g.log.event_count());
}

TEST_CASE("identical start times fall back to case id order") {
  EventLog log = parse_csv(
      "case_id,activity,t_start,t_complete\n"
      "C3,A,0,60\nC1,A,0,60\nC2,A,0,60\nC5,A,0,60\nC4,A,0,60\n");
  const DatasetSplit s = chronological_split(log, {0.6, 0.2, 0.2});
  CHECK(s.train_cases == std::vector<std::string>{"C1", "C2", "C3"});
  CHECK(s.validation_cases == std::vector<std::string>{"C4"});
  CHECK(s.test_cases == std::vector<std::string>{"C5"});
}

TEST_CASE("statistics and encoding are fitted on the training block only") {
  const GeneratedLog g = synthetic(100);
  const DatasetSplit s = chronological_split(g.log);
  const ActivityStats from_train = compute_activity_stats(s.train);
  CHECK(s.encoder->stats().global_mean == doctest::Approx(from_train.global_mean).epsilon(1e-12));
  CHECK(s.encoder->stats().per_activity.size() == from_train.per_activity.size());
}
