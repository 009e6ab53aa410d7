#pragma once

#include <cstdint>
#include <ostream>
#include <string_view>
#include <vector>

#include "procqrf/dataset.hpp"
#include "procqrf/metrics.hpp"
#include "procqrf/qrf.hpp"

namespace procqrf {

struct HyperparameterGrid {
  // Six equidistant values per axis.
  std::vector<std::size_t> mtry{10, 22, 34, 46, 58, 70};
  std::vector<std::size_t> trees{50, 100, 150, 200, 250, 300};
  std::vector<std::size_t> min_n{5, 10, 15, 20, 25, 30};

  std::size_t size() const noexcept { return mtry.size() * trees.size() * min_n.size(); }

  // {"mtry": [...], "trees": [...], "min_n": [...]}; missing axes keep defaults.
  static HyperparameterGrid from_json(std::string_view text);
};

struct LeaderboardEntry {
  Hyperparameters hyperparameters;
  PointMetrics point;
  IntervalMetrics interval;
};

struct GridSearchResult {
  Hyperparameters best;
  // Ascending validation RMSE; ties keep enumeration order (mtry, trees, min_n).
  std::vector<LeaderboardEntry> leaderboard;
};

struct GridSearchOptions {
  double level = 0.90;
  std::uint64_t seed = 7;
  LeafBasis leaf_basis = LeafBasis::FullTraining;
  double epsilon = kDefaultRwidthEpsilon;
  unsigned workers = 1;
};

GridSearchResult grid_search(const Dataset& train, const Dataset& validation, const HyperparameterGrid& grid,
                             const GridSearchOptions& options = {});

// `mtry,trees,min_n,rmse,mae,picp,mpiw,mrpiw`
void write_leaderboard_csv(std::ostream& out, const std::vector<LeaderboardEntry>& leaderboard);

}  // namespace procqrf
