#pragma once

// End-to-end pipeline: split, tune, train, predict, evaluate, profile,
// explain, report. Each stage writes its artifacts into the output directory
// and records them in MANIFEST.json together with the config hash and seed.
// Stages run on their own recompute the (deterministic) split from the log
// and read earlier artifacts such as model.json and thresholds.json from disk.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "procqrf/dataset.hpp"
#include "procqrf/grid_search.hpp"
#include "procqrf/profiles.hpp"
#include "procqrf/qrf.hpp"
#include "procqrf/shap.hpp"

namespace procqrf {

struct ShapSettings {
  std::size_t background = 100;
  std::size_t budget = 0;  // 0: default_budget(M)
  std::size_t explain_sample = 25;  // 0: every test instance
  std::vector<ExplanationTarget> targets{kAllTargets.begin(), kAllTargets.end()};
};

struct PipelineConfig {
  std::string log;
  std::string schema;  // empty: schema.json next to the log
  std::string output_dir = ".";
  std::string model;   // empty: <output_dir>/model.json

  SplitRatios ratios;
  double level = 0.90;
  bool tune = false;
  HyperparameterGrid grid;
  // mtry = 0 selects floor(sqrt(features)).
  Hyperparameters hyperparameters{0, 100, 20, 7, LeafBasis::FullTraining};
  double p_low = 25;
  double p_high = 75;
  ShapSettings shap;
  std::uint64_t seed = 7;
  double epsilon = kDefaultRwidthEpsilon;
  unsigned workers = 1;

  // Value checks only; throws InvalidConfig.
  void validate() const;
  // Also checks that input files and the output directory exist.
  void validate_paths() const;

  std::string schema_path() const;
  std::string model_path() const;

  // Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(std::string_view text);
  std::string to_json() const;
  // FNV-1a over the canonical JSON without paths and workers, so it depends
  // only on settings that can change results.
  std::string hash() const;
};

inline constexpr std::string_view kConfigEnvVar = "PROCQRF_CONFIG";

inline constexpr std::array<std::string_view, 8> kStages{"split",   "tune",    "train",   "predict",
                                                         "evaluate", "profile", "explain", "report"};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();

  // Runs one stage by name, recording it in the manifest. Failures are
  // rethrown as StageError after the manifest marks the stage failed.
  void run_stage(std::string_view stage);
  // All stages in order; tune is skipped unless config.tune is set.
  void run_all();

  const PipelineConfig& config() const noexcept { return config_; }

 private:
  struct State;

  void split();
  void tune();
  void train();
  void predict();
  void evaluate();
  void profile();
  void explain();
  void report();

  const DatasetSplit& data();
  const QrfModel& model();
  const ProfileThresholds& thresholds();
  void write_artifact(const std::string& name, const std::string& content, std::string_view stage);
  void load_manifest();
  void save_manifest() const;

  PipelineConfig config_;
  std::unique_ptr<State> state_;
};

}  // namespace procqrf
