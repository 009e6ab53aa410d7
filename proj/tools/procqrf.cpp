// procqrf: event-log processing-time prediction with quantile regression
// forests, uncertainty profiles and SHAP explanations.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "procqrf/error.hpp"
#include "procqrf/event_log.hpp"
#include "procqrf/pipeline.hpp"
#include "procqrf/synth.hpp"

namespace fs = std::filesystem;
using namespace procqrf;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Flags that override config-file fields; only options given on the command
// line are applied.
struct Overrides {
  std::string config;
  std::string log, schema, out, model;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  double level = 0;
  bool tune = false;
  std::size_t mtry = 0, trees = 0, min_n = 0;
  std::string leaf_basis;
  std::size_t explain_sample = 0, background = 0, budget = 0;
  std::vector<std::string> targets;
  std::vector<CLI::Option*> options;

  void attach(CLI::App* app) {
    auto add = [&](CLI::Option* o) { options.push_back(o); };
    app->add_option("-c,--config", config, "JSON config file (default: $PROCQRF_CONFIG)");
    add(app->add_option("--log", log, "event-log CSV"));
    add(app->add_option("--schema", schema, "attribute schema JSON (default: schema.json next to the log)"));
    add(app->add_option("-o,--out", out, "existing output directory"));
    add(app->add_option("--model", model, "model path (default: <out>/model.json)"));
    add(app->add_option("--seed", seed, "random seed"));
    add(app->add_option("--workers", workers, "worker threads; results do not depend on it")->check(CLI::PositiveNumber));
    add(app->add_option("--level", level, "prediction interval level"));
    add(app->add_flag("--tune", tune, "run the hyperparameter grid search"));
    add(app->add_option("--mtry", mtry, "features tried per split (0: floor(sqrt(p)))"));
    add(app->add_option("--trees", trees, "number of trees"));
    add(app->add_option("--min-n", min_n, "minimum node size to split"));
    add(app->add_option("--leaf-basis", leaf_basis, "leaf members: full | bootstrap")->check(CLI::IsMember({"full", "bootstrap"})));
    add(app->add_option("--explain-sample", explain_sample, "test instances to explain (0: all)"));
    add(app->add_option("--background", background, "SHAP background rows"));
    add(app->add_option("--budget", budget, "SHAP coalition budget (0: default)"));
    add(app->add_option("--targets", targets, "SHAP targets: point lower upper width"));
  }

  bool given(const std::string& name) const {
    for (auto* o : options) {
      if (o->check_name(name) && o->count() > 0) return true;
    }
    return false;
  }

  PipelineConfig resolve() const {
    PipelineConfig c;
    std::string path = config;
    if (path.empty()) {
      if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str())) path = env;
    }
    if (!path.empty()) {
      if (!fs::is_regular_file(path)) throw Error(ErrorCode::InvalidConfig, "config file not found: " + path);
      c = PipelineConfig::from_json(read_file(path));
    }
    if (given("--log")) c.log = log;
    if (given("--schema")) c.schema = schema;
    if (given("--out")) c.output_dir = out;
    if (given("--model")) c.model = model;
    if (given("--seed")) c.seed = seed;
    if (given("--workers")) c.workers = workers;
    if (given("--level")) c.level = level;
    if (given("--tune")) c.tune = tune;
    if (given("--mtry")) c.hyperparameters.mtry = mtry;
    if (given("--trees")) c.hyperparameters.trees = trees;
    if (given("--min-n")) c.hyperparameters.min_n = min_n;
    if (given("--leaf-basis")) {
      c.hyperparameters.leaf_basis = leaf_basis == "bootstrap" ? LeafBasis::Bootstrap : LeafBasis::FullTraining;
    }
    if (given("--explain-sample")) c.shap.explain_sample = explain_sample;
    if (given("--background")) c.shap.background = background;
    if (given("--budget")) c.shap.budget = budget;
    if (given("--targets")) {
      c.shap.targets.clear();
      for (const auto& t : targets) {
        try {
          c.shap.targets.push_back(parse_explanation_target(t));
        } catch (const Error& e) {
          throw Error(ErrorCode::InvalidConfig, e.what());
        }
      }
    }
    return c;
  }
};

struct GenerateOptions {
  std::size_t cases = 1000;
  std::size_t activities = 30;
  std::uint64_t seed = 7;
  std::string out = ".";
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

int generate(const GenerateOptions& o) {
  if (!fs::is_directory(o.out)) throw Error(ErrorCode::InvalidConfig, "output directory does not exist: " + o.out);
  GeneratorConfig cfg;
  cfg.n_cases = o.cases;
  cfg.n_activities = o.activities;
  cfg.seed = o.seed;
  const GeneratedLog g = generate_log(cfg);
  std::ostringstream log;
  write_event_log(log, g.log);
  write_text(fs::path(o.out) / "log.csv", log.str());
  write_text(fs::path(o.out) / "schema.json", g.log.schema.to_json());
  write_text(fs::path(o.out) / "truth.json", g.truth.to_json());
  std::cout << "wrote " << g.log.traces.size() << " cases, " << g.log.event_count() << " events to " << o.out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Processing-time prediction intervals with quantile regression forests"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* generate_cmd = app.add_subcommand("generate", "write a synthetic event log, schema and ground truth");
  generate_cmd->add_option("--cases", gen.cases, "number of cases")->check(CLI::PositiveNumber);
  generate_cmd->add_option("--activities", gen.activities, "number of activities")->check(CLI::PositiveNumber);
  generate_cmd->add_option("--seed", gen.seed, "random seed");
  generate_cmd->add_option("-o,--out", gen.out, "existing output directory");

  Overrides overrides;
  std::vector<std::pair<std::string, CLI::App*>> stage_cmds;
  const std::vector<std::pair<std::string, std::string>> stage_help{
      {"split", "chronological case split summary"},
      {"tune", "grid search over mtry, trees and min_n"},
      {"train", "fit the forest and save the model"},
      {"predict", "prediction intervals for the test split"},
      {"evaluate", "point and interval metrics"},
      {"profile", "calibrate profile thresholds and assign test instances"},
      {"explain", "SHAP explanations for a sample of test instances"},
      {"report", "SVG charts with CSV twins"},
      {"run", "every stage in order"},
  };
  for (const auto& [name, help] : stage_help) {
    auto* cmd = app.add_subcommand(name, help);
    overrides.attach(cmd);
    stage_cmds.emplace_back(name, cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  std::string stage_name;
  try {
    if (generate_cmd->parsed()) return generate(gen);
    for (const auto& [name, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      stage_name = name;
      Pipeline pipeline(overrides.resolve());
      if (name == "run") pipeline.run_all();
      else pipeline.run_stage(name);
      std::cout << name << ": done, outputs in " << pipeline.config().output_dir << "\n";
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
