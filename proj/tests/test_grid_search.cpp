#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <sstream>

#include "procqrf/error.hpp"
#include "procqrf/grid_search.hpp"
#include "test_support.hpp"

using namespace procqrf;

TEST_CASE("default grid has six values per axis") {
  const HyperparameterGrid g;
  CHECK(g.mtry.size() == 6);
  CHECK(g.trees.size() == 6);
  CHECK(g.min_n.size() == 6);
  CHECK(g.size() == 216);
}

TEST_CASE("grid search enumerates every candidate and sorts by validation rmse") {
  const auto gen = procqrf::testing::synthetic(60);
  const DatasetSplit s = chronological_split(gen.log);
  HyperparameterGrid grid;
  grid.mtry = {2, 5, 80};
  grid.trees = {3, 6};
  grid.min_n = {5, 10};
  const auto result = grid_search(s.train, s.validation, grid);
  REQUIRE(result.leaderboard.size() == 12);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < result.leaderboard.size(); ++i) {
    const auto& hp = result.leaderboard[i].hyperparameters;
    seen.insert({hp.mtry, hp.trees, hp.min_n});
    if (i > 0) CHECK(result.leaderboard[i - 1].point.rmse <= result.leaderboard[i].point.rmse);
    CHECK(result.leaderboard[i].point.n == s.validation.size());
  }
  CHECK(seen.size() == 12);
  CHECK(result.best == result.leaderboard.front().hyperparameters);

  std::ostringstream csv;
  write_leaderboard_csv(csv, result.leaderboard);
  const std::string text = csv.str();
  CHECK(text.rfind("mtry,trees,min_n,rmse,mae,picp,mpiw,mrpiw\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 13);
}

TEST_CASE("an empty axis is rejected") {
  const auto gen = procqrf::testing::synthetic(20);
  const DatasetSplit s = chronological_split(gen.log);
  HyperparameterGrid grid;
  grid.trees.clear();
  try {
    grid_search(s.train, s.validation, grid);
    FAIL("expected EmptyGrid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyGrid);
  }
}

TEST_CASE("grid JSON keeps defaults for missing axes") {
  const auto g = HyperparameterGrid::from_json(R"({"mtry": [3, 4]})");
  CHECK(g.mtry == std::vector<std::size_t>{3, 4});
  CHECK(g.trees.size() == 6);
  CHECK_THROWS_AS(HyperparameterGrid::from_json("[1"), Error);
}
