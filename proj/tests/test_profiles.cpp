#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "procqrf/error.hpp"
#include "procqrf/profiles.hpp"
#include "procqrf/util.hpp"

using namespace procqrf;

namespace {

ProfileThresholds cuts(double low, double high) {
  ProfileThresholds t;
  t.low_cut = low;
  t.high_cut = high;
  return t;
}

}  // namespace

TEST_CASE("percentile thresholds use linear interpolation") {
  const auto a = calibrate_thresholds(std::vector<double>{1, 2, 3, 4, 5});
  CHECK(a.low_cut == 2.0);
  CHECK(a.high_cut == 4.0);
  CHECK(a.n_calibration == 5);
  const auto b = calibrate_thresholds(std::vector<double>{4, 1, 3, 2});
  CHECK(b.low_cut == 1.75);
  CHECK(b.high_cut == 3.25);
}

TEST_CASE("calibration errors") {
  CHECK_THROWS_AS(calibrate_thresholds(std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(calibrate_thresholds(std::vector<double>{1, 2, 3, NAN}), Error);
  CHECK_THROWS_AS(calibrate_thresholds(std::vector<double>{1, 2, 3, 4}, 75, 25), Error);
  try {
    calibrate_thresholds(std::vector<double>{1});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewInstances);
  }
}

TEST_CASE("assign_profile examples and boundaries") {
  const auto t = cuts(1.1847, 1.7973);
  CHECK(assign_profile(1.0, t) == UncertaintyProfile::Low);
  CHECK(assign_profile(2.5, t) == UncertaintyProfile::High);
  CHECK(assign_profile(1.1847, t) == UncertaintyProfile::Medium);
  CHECK(assign_profile(1.7973, t) == UncertaintyProfile::Medium);
  CHECK(assign_profile(1.5, t) == UncertaintyProfile::Medium);
  CHECK_THROWS_AS(assign_profile(NAN, t), Error);
  CHECK(to_string(UncertaintyProfile::Medium) == "medium");
}

TEST_CASE("reassigning the calibration vector reproduces the quartile shares") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 4 + rng.below(400);
    std::vector<double> r(n);
    for (auto& v : r) v = 0.2 + rng.uniform() * 3.0;
    const auto t = calibrate_thresholds(r);
    std::array<std::size_t, 3> count{};
    for (double v : r) ++count[static_cast<std::size_t>(assign_profile(v, t))];
    const double nn = static_cast<double>(n);
    CHECK(std::fabs(static_cast<double>(count[0]) - 0.25 * nn) <= 1.0);
    CHECK(std::fabs(static_cast<double>(count[1]) - 0.50 * nn) <= 1.0);
    CHECK(std::fabs(static_cast<double>(count[2]) - 0.25 * nn) <= 1.0);

    std::sort(r.begin(), r.end());
    for (std::size_t i = 1; i < n; ++i) CHECK(assign_profile(r[i - 1], t) <= assign_profile(r[i], t));
  }
}

TEST_CASE("per-profile report") {
  const auto t = cuts(1.0, 2.0);
  std::vector<ScoredInstance> scored{
      {10, {5, 9, 10, 0.9}},    // rwidth 0.4: low, not covered
      {10, {0, 15, 10, 0.9}},   // rwidth 1.5: medium, covered
      {10, {0, 30, 10, 0.9}},   // rwidth 3.0: high, covered
      {10, {0, 35, 10, 0.9}},   // rwidth 3.5: high, covered
      {1, {0, 1, 0, 0.9}},      // no rwidth
  };
  const auto b = per_profile_report(scored, t);
  CHECK(b.n_total == 5);
  CHECK(b.n_unassigned == 1);
  CHECK(b.profiles[0].n == 1);
  CHECK(b.profiles[1].n == 1);
  CHECK(b.profiles[2].n == 2);
  CHECK(b.profiles[0].share == 0.2);
  CHECK(b.profiles[0].interval->picp == 0.0);
  CHECK(b.profiles[2].interval->mpiw == 32.5);
  CHECK(b.profiles[2].interval->mrpiw == 3.25);
  CHECK(b.profiles[1].point->mae == 0.0);
}

TEST_CASE("a test set entirely below the low cut is all low") {
  const auto t = cuts(5.0, 6.0);
  std::vector<ScoredInstance> scored{{1, {0, 2, 1, 0.9}}, {2, {1, 3, 2, 0.9}}};
  const auto b = per_profile_report(scored, t);
  CHECK(b.profiles[0].n == 2);
  CHECK(b.profiles[0].share == 1.0);
  CHECK(b.profiles[1].n == 0);
  CHECK_FALSE(b.profiles[1].point.has_value());
  CHECK_FALSE(b.profiles[2].interval.has_value());
}

TEST_CASE("thresholds JSON round-trips") {
  const auto t = calibrate_thresholds(std::vector<double>{1, 2, 3, 4, 5}, 20, 80);
  const auto back = ProfileThresholds::from_json(t.to_json());
  CHECK(back.low_cut == t.low_cut);
  CHECK(back.high_cut == t.high_cut);
  CHECK(back.p_low == 20);
  CHECK(back.n_calibration == 5);
  CHECK_THROWS_AS(ProfileThresholds::from_json("{}"), Error);
}
