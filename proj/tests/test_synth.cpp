#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "procqrf/error.hpp"
#include "procqrf/synth.hpp"
#include "test_support.hpp"

using namespace procqrf;
using procqrf::testing::synthetic;
using procqrf::testing::to_csv;

TEST_CASE("a 500-case log has a plausible number of events") {
  const auto g = synthetic(500);
  CHECK(g.log.traces.size() == 500);
  CHECK(g.log.event_count() >= 1000);
  CHECK(g.log.event_count() <= 4000);
  CHECK(g.truth.events.size() == g.log.event_count());
}

TEST_CASE("mean trace length is about 4.6") {
  const auto g = synthetic(10000, 11);
  const double mean = static_cast<double>(g.log.event_count()) / 10000.0;
  CHECK(mean == doctest::Approx(4.6).epsilon(0.1 / 4.6));
  for (const auto& t : g.log.traces) {
    CHECK(t.events.size() >= 2);
    CHECK(t.events.size() <= 8);
  }
}

TEST_CASE("realized durations fall inside the true 5-95% interval about 90% of the time") {
  const auto g = synthetic(5000, 21);
  REQUIRE(g.log.event_count() >= 20000);
  std::size_t inside = 0, total = 0;
  for (const auto& t : g.log.traces) {
    for (std::size_t k = 0; k < t.events.size(); ++k) {
      const double d = event_processing_time(t.events[k]);
      const double lo = true_quantile(g.truth, t.case_id, k, 0.05);
      const double hi = true_quantile(g.truth, t.case_id, k, 0.95);
      inside += (d >= lo && d <= hi) ? 1 : 0;
      ++total;
    }
  }
  const double coverage = static_cast<double>(inside) / static_cast<double>(total);
  CHECK(coverage >= 0.89);
  CHECK(coverage <= 0.91);
}

TEST_CASE("log-normal quantiles") {
  CHECK(lognormal_quantile(2.0, 0.5, 0.5) == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
  CHECK(std::fabs(lognormal_quantile(1.3, 1e-12, 0.95) - std::exp(1.3)) <= 1e-9);
  // Phi^-1(0.975) = 1.959963984540054.
  CHECK(lognormal_quantile(0.0, 1.0, 0.975) == doctest::Approx(std::exp(1.959963984540054)).epsilon(1e-12));
  CHECK(lognormal_quantile(0.0, 1.0, 0.05) < lognormal_quantile(0.0, 1.0, 0.95));
  CHECK(lognormal_quantile(0.0, 1.0, 0.05) * lognormal_quantile(0.0, 1.0, 0.95) == doctest::Approx(1.0));
  CHECK_THROWS_AS(lognormal_quantile(0, 1, 0), Error);
  CHECK_THROWS_AS(lognormal_quantile(0, 0, 0.5), Error);
}

TEST_CASE("same seed gives identical logs, different seeds differ") {
  const std::string a = to_csv(synthetic(200, 3).log);
  CHECK(a == to_csv(synthetic(200, 3).log));
  CHECK(a != to_csv(synthetic(200, 4).log));
  CHECK(synthetic(50, 3).truth.to_json() == synthetic(50, 3).truth.to_json());
}

TEST_CASE("generated logs satisfy the event-log invariants after a CSV round trip") {
  const auto g = synthetic(300, 5);
  const EventLog back = procqrf::testing::parse_csv(to_csv(g.log), g.log.schema);
  REQUIRE(back.traces.size() == g.log.traces.size());
  std::set<std::string> ids;
  for (std::size_t c = 0; c < back.traces.size(); ++c) {
    const auto& t = back.traces[c];
    ids.insert(t.case_id);
    CHECK(t.case_id == g.log.traces[c].case_id);
    for (std::size_t k = 0; k < t.events.size(); ++k) {
      const auto& e = t.events[k];
      CHECK(e.t_complete >= e.t_start);
      if (k > 0) CHECK(e.t_start >= t.events[k - 1].t_complete);
      CHECK(e.activity == g.truth.at(t.case_id, k).activity);
      CHECK(e.attributes.size() == g.log.schema.attributes().size());
      CHECK(event_processing_time(e) == event_processing_time(g.log.traces[c].events[k]));
    }
  }
  CHECK(ids.size() == 300);
  CHECK(g.log.traces.front().case_id == "C00001");
  CHECK(g.log.traces.front().events.front().t_start >= 1577836800.0);
}

TEST_CASE("schema and activity names") {
  const GeneratorConfig cfg;
  const auto schema = synthetic_schema(cfg);
  CHECK(schema.attributes().size() == cfg.numeric.size() + 3);
  const auto names = synthetic_activities(40);
  CHECK(names.size() == 40);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 40);
}

TEST_CASE("ground truth lookup and serialization") {
  const auto g = synthetic(20, 9);
  CHECK_THROWS_AS(g.truth.at("C99999", 0), Error);
  try {
    g.truth.at("C00001", 99);
    FAIL("expected UnknownEvent");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownEvent);
  }
  const GroundTruth back = GroundTruth::from_json(g.truth.to_json());
  CHECK(back.seed == 9);
  REQUIRE(back.events.size() == g.truth.events.size());
  for (const auto& [key, p] : g.truth.events) {
    const auto& q = back.at(key.first, key.second);
    CHECK(q.activity == p.activity);
    CHECK(q.mu == p.mu);
    CHECK(q.sigma == p.sigma);
  }
  CHECK_THROWS_AS(GroundTruth::from_json("{"), Error);
}

TEST_CASE("invalid generator configs are rejected") {
  auto code = [](GeneratorConfig cfg) {
    try {
      generate_log(cfg);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  GeneratorConfig c;
  c.n_cases = 0;
  CHECK(code(c) == ErrorCode::InvalidConfig);
  c = {};
  c.material_sigma_offset.pop_back();
  CHECK(code(c) == ErrorCode::InvalidConfig);
  c = {};
  c.sigma_low = 0;
  CHECK(code(c) == ErrorCode::InvalidConfig);
  c = {};
  c.numeric[0].max = c.numeric[0].min;
  CHECK(code(c) == ErrorCode::InvalidConfig);
  c = {};
  c.length_p = 1.5;
  CHECK(code(c) == ErrorCode::InvalidConfig);
}
