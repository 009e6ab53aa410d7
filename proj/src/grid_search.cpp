#include "procqrf/grid_search.hpp"

#include <algorithm>

#include "json.hpp"

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

HyperparameterGrid HyperparameterGrid::from_json(std::string_view text) {
  HyperparameterGrid grid;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.contains("mtry")) grid.mtry = doc["mtry"].get<std::vector<std::size_t>>();
    if (doc.contains("trees")) grid.trees = doc["trees"].get<std::vector<std::size_t>>();
    if (doc.contains("min_n")) grid.min_n = doc["min_n"].get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("grid file: ") + e.what());
  }
  return grid;
}

GridSearchResult grid_search(const Dataset& train, const Dataset& validation, const HyperparameterGrid& grid,
                             const GridSearchOptions& options) {
  if (grid.mtry.empty() || grid.trees.empty() || grid.min_n.empty()) {
    throw Error(ErrorCode::EmptyGrid, "every grid axis needs at least one value");
  }
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training dataset is empty");
  if (validation.empty()) throw Error(ErrorCode::EmptyDataset, "validation dataset is empty");

  const FeatureMatrix x = FeatureMatrix::from_dataset(train);
  const std::vector<double> y = train.targets();
  const std::vector<double> actual = validation.targets();
  const std::string schema = train.encoder ? train.encoder->hash() : std::string();

  GridSearchResult result;
  for (std::size_t mtry : grid.mtry) {
    for (std::size_t trees : grid.trees) {
      for (std::size_t min_n : grid.min_n) {
        Hyperparameters hp{mtry, trees, min_n, options.seed, options.leaf_basis};
        hp.validate();
        hp.mtry = std::min(hp.mtry, x.cols());
        const QrfModel model = QrfModel::train(x, y, hp, options.workers, schema);
        std::vector<double> point;
        std::vector<PredictionInterval> intervals;
        for (const auto& inst : validation.instances) {
          intervals.push_back(model.predict_interval(inst.x, options.level));
          point.push_back(intervals.back().point);
        }
        LeaderboardEntry entry;
        entry.hyperparameters = Hyperparameters{mtry, trees, min_n, options.seed, options.leaf_basis};
        entry.point = point_metrics(actual, point);
        entry.interval = interval_metrics(actual, intervals, options.epsilon);
        result.leaderboard.push_back(entry);
      }
    }
  }
  std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                   [](const LeaderboardEntry& a, const LeaderboardEntry& b) { return a.point.rmse < b.point.rmse; });
  result.best = result.leaderboard.front().hyperparameters;
  return result;
}

void write_leaderboard_csv(std::ostream& out, const std::vector<LeaderboardEntry>& leaderboard) {
  csv::write_row(out, {"mtry", "trees", "min_n", "rmse", "mae", "picp", "mpiw", "mrpiw"});
  for (const auto& e : leaderboard) {
    csv::write_row(out, {std::to_string(e.hyperparameters.mtry), std::to_string(e.hyperparameters.trees),
                         std::to_string(e.hyperparameters.min_n), format_double(e.point.rmse),
                         format_double(e.point.mae), format_double(e.interval.picp),
                         format_double(e.interval.mpiw), format_double(e.interval.mrpiw)});
  }
}

}  // namespace procqrf
