#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <set>

#include "procqrf/error.hpp"
#include "procqrf/event_log.hpp"
#include "procqrf/util.hpp"
#include "test_support.hpp"

using namespace procqrf;
using namespace procqrf::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("rows group into traces by case id") {
  const EventLog log = parse_csv(
      "case_id,activity,t_start,t_complete\n"
      "C1,A,0,50\n"
      "C2,B,10,20\n"
      "C1,B,100,160\n");
  REQUIRE(log.traces.size() == 2);
  CHECK(log.traces[0].case_id == "C1");
  CHECK(log.traces[0].size() == 2);
  CHECK(log.traces[1].size() == 1);
  CHECK(log.event_count() == 3);
}

TEST_CASE("events are sorted by start, then completion, then file order") {
  const EventLog log = parse_csv(
      "case_id,activity,t_start,t_complete\n"
      "C1,late,200,300\n"
      "C1,second,100,180\n"
      "C1,first,100,150\n"
      "C1,tie_a,50,60\n"
      "C1,tie_b,50,60\n");
  const auto& ev = log.traces[0].events;
  REQUIRE(ev.size() == 5);
  CHECK(ev[0].activity == "tie_a");
  CHECK(ev[1].activity == "tie_b");
  CHECK(ev[2].activity == "first");
  CHECK(ev[3].activity == "second");
  CHECK(ev[4].activity == "late");
}

TEST_CASE("parse errors") {
  SUBCASE("completion before start") {
    CHECK(code_of([] { parse_csv("case_id,activity,t_start,t_complete\nC1,A,100,40\n"); }) ==
          ErrorCode::BadTimestamp);
  }
  SUBCASE("unparseable timestamp") {
    CHECK(code_of([] { parse_csv("case_id,activity,t_start,t_complete\nC1,A,yesterday,40\n"); }) ==
          ErrorCode::BadTimestamp);
  }
  SUBCASE("schema column absent from the header") {
    const AttributeSchema schema({{"Quantity", AttributeKind::Numeric, false}});
    CHECK(code_of([&] { parse_csv("case_id,activity,t_start,t_complete\nC1,A,0,1\n", schema); }) ==
          ErrorCode::MissingColumn);
  }
  SUBCASE("required column absent") {
    CHECK(code_of([] { parse_csv("case_id,activity,t_start\nC1,A,0\n"); }) == ErrorCode::MissingColumn);
  }
  SUBCASE("header only or empty input") {
    CHECK(code_of([] { parse_csv("case_id,activity,t_start,t_complete\n"); }) == ErrorCode::EmptyLog);
    CHECK(code_of([] { parse_csv(""); }) == ErrorCode::EmptyLog);
  }
  SUBCASE("wrong field count") {
    CHECK(code_of([] { parse_csv("case_id,activity,t_start,t_complete\nC1,A,0\n"); }) == ErrorCode::MalformedRow);
  }
  SUBCASE("empty activity") {
    CHECK(code_of([] { parse_csv("case_id,activity,t_start,t_complete\nC1,,0,1\n"); }) == ErrorCode::MalformedRow);
  }
  SUBCASE("non-numeric value in a numeric attribute") {
    const AttributeSchema schema({{"Quantity", AttributeKind::Numeric, false}});
    CHECK(code_of([&] { parse_csv("case_id,activity,t_start,t_complete,Quantity\nC1,A,0,1,many\n", schema); }) ==
          ErrorCode::MalformedRow);
  }
  SUBCASE("empty required attribute") {
    const AttributeSchema schema({{"Quantity", AttributeKind::Numeric, false}});
    CHECK(code_of([&] { parse_csv("case_id,activity,t_start,t_complete,Quantity\nC1,A,0,1,\n", schema); }) ==
          ErrorCode::MalformedRow);
  }
}

TEST_CASE("attributes follow the schema; optional ones may be empty; extra columns are ignored") {
  const AttributeSchema schema({{"Quantity", AttributeKind::Numeric, false},
                                {"Material", AttributeKind::Categorical, false},
                                {"Note", AttributeKind::Categorical, true}});
  const EventLog log = parse_csv(
      "case_id,activity,t_start,t_complete,Quantity,Material,Note,Extra\n"
      "C1,A,0,60,3,Steel,,zzz\n",
      schema);
  const Event& e = log.traces[0].events[0];
  CHECK(std::get<double>(e.attributes.at("Quantity")) == 3.0);
  CHECK(std::get<std::string>(e.attributes.at("Material")) == "Steel");
  CHECK(e.attributes.count("Note") == 0);
  CHECK(e.attributes.count("Extra") == 0);
}

TEST_CASE("timestamps: epoch seconds and ISO-8601") {
  CHECK(parse_timestamp("0") == 0.0);
  CHECK(parse_timestamp("1577836800") == 1577836800.0);
  CHECK(parse_timestamp("12.5") == 12.5);
  CHECK(parse_timestamp("2020-01-01T00:00:00Z") == 1577836800.0);
  CHECK(parse_timestamp("2020-01-01 00:00:00") == 1577836800.0);
  CHECK(parse_timestamp("2020-01-01T01:00:00+01:00") == 1577836800.0);
  CHECK(parse_timestamp("2019-12-31T19:00:00-0500") == 1577836800.0);
  CHECK(parse_timestamp("2020-01-01T00:00:00.250Z") == 1577836800.25);
  CHECK(parse_timestamp("2024-02-29T12:00:00Z") == 1709208000.0);
  CHECK(code_of([] { parse_timestamp("2020-13-01T00:00:00Z"); }) == ErrorCode::BadTimestamp);
  CHECK(code_of([] { parse_timestamp(""); }) == ErrorCode::BadTimestamp);
}

TEST_CASE("schema JSON keeps column order and round-trips") {
  const AttributeSchema schema = AttributeSchema::from_json(
      R"({"Zeta": {"kind": "numeric"}, "Alpha": {"kind": "categorical", "optional": true}})");
  REQUIRE(schema.size() == 2);
  CHECK(schema.attributes()[0].name == "Zeta");
  CHECK(schema.attributes()[1].optional);
  CHECK(AttributeSchema::from_json(schema.to_json()) == schema);
  CHECK(code_of([] { AttributeSchema::from_json(R"({"X": {"kind": "text"}})"); }) == ErrorCode::FormatError);
  CHECK(code_of([] { AttributeSchema::from_json(R"({"case_id": {"kind": "numeric"}})"); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("prefix_of and suffix_of examples") {
  const Trace t4 = make_trace("C", 4);
  const Trace p2 = prefix_of(t4, 2);
  REQUIRE(p2.size() == 2);
  CHECK(p2.events[0] == t4.events[0]);
  CHECK(p2.events[1] == t4.events[1]);
  CHECK(prefix_of(t4, 9) == t4);
  const Trace t1 = make_trace("C", 1);
  CHECK(prefix_of(t1, 1) == t1);

  const Trace s2 = suffix_of(t4, 2);
  REQUIRE(s2.size() == 2);
  CHECK(s2.events[0] == t4.events[2]);
  CHECK(s2.events[1] == t4.events[3]);
  // i = 9 on four events: w = max(4 - 9 + 1, 1) = 1, the whole trace.
  CHECK(suffix_of(t4, 9) == t4);
  const Trace t3 = make_trace("C", 3);
  CHECK(suffix_of(t3, 3) == t3);

  CHECK(code_of([&] { prefix_of(t4, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { suffix_of(t4, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("prefix and suffix lengths saturate at the trace length") {
  for (std::size_t n = 1; n <= 8; ++n) {
    const Trace t = make_trace("C", n);
    for (std::size_t i = 1; i <= 12; ++i) {
      const std::size_t expect = std::min(i, n);
      const Trace p = prefix_of(t, i);
      const Trace s = suffix_of(t, i);
      CHECK(p.size() == expect);
      CHECK(s.size() == expect);
      CHECK(p.events.front() == t.events.front());
      CHECK(s.events.back() == t.events.back());
    }
    CHECK(prefix_of(t, n) == t);
    CHECK(suffix_of(t, n) == t);
    const auto all = suffix_partial_traces(t);
    REQUIRE(all.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i].size() == i + 1);
  }
}

TEST_CASE("event processing time in minutes") {
  CHECK(event_processing_time(make_event("C", "A", 0, 3600)) == 60.0);
  CHECK(event_processing_time(make_event("C", "A", 500, 500)) == 0.0);
  CHECK(event_processing_time(make_event("C", "A", 120, 5913)) == doctest::Approx(96.55).epsilon(1e-12));
}

TEST_CASE("write then parse reproduces a synthetic log exactly") {
  for (std::uint64_t seed : {1, 7, 99}) {
    const GeneratedLog g = synthetic(50, seed);
    const EventLog back = parse_csv(to_csv(g.log), g.log.schema);
    CHECK(back.event_count() == g.log.event_count());
    CHECK(back == g.log);
  }
}

TEST_CASE("parsed traces satisfy the log invariants") {
  const GeneratedLog g = synthetic(200, 3);
  const EventLog log = parse_csv(to_csv(g.log), g.log.schema);
  std::set<std::string> ids;
  for (const auto& t : log.traces) {
    CHECK(ids.insert(t.case_id).second);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t.events[i].case_id == t.case_id);
      CHECK(t.events[i].t_complete >= t.events[i].t_start);
      CHECK_FALSE(t.events[i].activity.empty());
      if (i > 0) CHECK(t.events[i - 1].t_start <= t.events[i].t_start);
    }
  }
}

TEST_CASE("a UTF-8 byte order mark and blank lines are tolerated") {
  const EventLog log = parse_csv("\xEF\xBB\xBF" "case_id,activity,t_start,t_complete\n\nC1,A,0,60\n\n");
  CHECK(log.event_count() == 1);
}
