#include "procqrf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "procqrf/error.hpp"
#include "procqrf/event_log.hpp"
#include "procqrf/metrics.hpp"
#include "procqrf/svg.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kManifest = "MANIFEST.json";
constexpr std::string_view kBestHyperparameters = "best_hyperparameters.json";
constexpr std::uint64_t kBackgroundStream = 0xB6;
constexpr std::uint64_t kSampleStream = 0x5A;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

std::string_view leaf_basis_name(LeafBasis b) { return b == LeafBasis::Bootstrap ? "bootstrap" : "full"; }

LeafBasis parse_leaf_basis(std::string_view s) {
  if (s == "full") return LeafBasis::FullTraining;
  if (s == "bootstrap") return LeafBasis::Bootstrap;
  config_error("leaf_basis must be 'full' or 'bootstrap', got '" + std::string(s) + "'");
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!obj.is_object()) config_error(std::string(where) + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      config_error("unknown config key '" + std::string(where) + (where.empty() ? "" : ".") + it.key() + "'");
    }
  }
}

ojson point_json(const PointMetrics& m) {
  ojson j;
  j["n"] = m.n;
  j["rmse"] = m.rmse;
  j["mae"] = m.mae;
  return j;
}

ojson interval_json(const IntervalMetrics& m) {
  ojson j;
  j["n"] = m.n;
  j["picp"] = m.picp;
  j["mpiw"] = m.mpiw;
  j["mrpiw"] = m.mrpiw;
  j["n_excluded_rwidth"] = m.n_excluded_rwidth;
  return j;
}

// Point and interval metrics; interval metrics are null when no point
// prediction exceeds epsilon.
ojson scored_json(std::span<const double> actual, std::span<const PredictionInterval> intervals, double epsilon) {
  std::vector<double> point;
  for (const auto& pi : intervals) point.push_back(pi.point);
  ojson j;
  j["point"] = point_json(point_metrics(actual, point));
  try {
    j["interval"] = interval_json(interval_metrics(actual, intervals, epsilon));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AllExcluded) throw;
    j["interval"] = nullptr;
  }
  return j;
}

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::string read_text(const fs::path& path) { return read_file(path.string()); }

std::vector<csv::Row> read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  csv::Reader reader(in);
  std::vector<csv::Row> rows;
  csv::Row row;
  while (reader.next(row)) rows.push_back(row);
  return rows;
}

std::size_t column(const csv::Row& header, std::string_view name, const fs::path& path) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::MissingColumn, path.string() + " lacks column " + std::string(name));
  return static_cast<std::size_t>(it - header.begin());
}

double cell_number(const std::string& s) {
  auto v = parse_double(s);
  if (!v) throw Error(ErrorCode::FormatError, "expected a number, got '" + s + "'");
  return *v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (!(level > 0 && level < 1)) config_error("level must lie in (0, 1)");
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0)) config_error("split ratios must be positive");
  if (std::fabs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) config_error("split ratios must sum to 1");
  if (!(0 < p_low && p_low < p_high && p_high < 100)) config_error("profile percentiles need 0 < p_low < p_high < 100");
  if (hyperparameters.trees < 1) config_error("trees must be >= 1");
  if (hyperparameters.min_n < 2) config_error("min_n must be >= 2");
  if (tune && (grid.mtry.empty() || grid.trees.empty() || grid.min_n.empty())) config_error("grid axes must be non-empty");
  for (auto v : grid.mtry) if (v < 1) config_error("grid mtry values must be >= 1");
  for (auto v : grid.trees) if (v < 1) config_error("grid trees values must be >= 1");
  for (auto v : grid.min_n) if (v < 2) config_error("grid min_n values must be >= 2");
  if (shap.background < 1) config_error("shap.background must be >= 1");
  if (shap.targets.empty()) config_error("shap.targets must name at least one target");
  if (!(epsilon > 0) || !std::isfinite(epsilon)) config_error("epsilon must be finite and > 0");
  if (workers < 1) config_error("workers must be >= 1");
}

void PipelineConfig::validate_paths() const {
  if (log.empty()) config_error("no event log given (--log or \"log\" in the config)");
  if (!fs::is_regular_file(log)) config_error("event log not found: " + log);
  if (!fs::is_regular_file(schema_path())) config_error("schema file not found: " + schema_path());
  if (!fs::is_directory(output_dir)) config_error("output directory does not exist: " + output_dir);
  if (!model.empty()) {
    const fs::path parent = fs::path(model).parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) config_error("model directory does not exist: " + parent.string());
  }
}

std::string PipelineConfig::schema_path() const {
  if (!schema.empty()) return schema;
  return (fs::path(log).parent_path() / "schema.json").string();
}

std::string PipelineConfig::model_path() const {
  if (!model.empty()) return model;
  return (fs::path(output_dir) / "model.json").string();
}

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  PipelineConfig c;
  try {
    const auto doc = nlohmann::json::parse(text);
    reject_unknown(doc,
                   {"log", "schema", "output_dir", "model", "split", "level", "tune", "grid", "hyperparameters",
                    "profiles", "shap", "seed", "epsilon", "workers"},
                   "");
    if (doc.contains("log")) c.log = doc["log"].get<std::string>();
    if (doc.contains("schema")) c.schema = doc["schema"].get<std::string>();
    if (doc.contains("output_dir")) c.output_dir = doc["output_dir"].get<std::string>();
    if (doc.contains("model")) c.model = doc["model"].get<std::string>();
    if (doc.contains("split")) {
      const auto& s = doc["split"];
      reject_unknown(s, {"train", "validation", "test"}, "split");
      c.ratios.train = s.value("train", c.ratios.train);
      c.ratios.validation = s.value("validation", c.ratios.validation);
      c.ratios.test = s.value("test", c.ratios.test);
    }
    if (doc.contains("level")) c.level = doc["level"].get<double>();
    if (doc.contains("tune")) c.tune = doc["tune"].get<bool>();
    if (doc.contains("grid")) {
      reject_unknown(doc["grid"], {"mtry", "trees", "min_n"}, "grid");
      c.grid = HyperparameterGrid::from_json(doc["grid"].dump());
    }
    if (doc.contains("hyperparameters")) {
      const auto& h = doc["hyperparameters"];
      reject_unknown(h, {"mtry", "trees", "min_n", "leaf_basis"}, "hyperparameters");
      c.hyperparameters.mtry = h.value("mtry", c.hyperparameters.mtry);
      c.hyperparameters.trees = h.value("trees", c.hyperparameters.trees);
      c.hyperparameters.min_n = h.value("min_n", c.hyperparameters.min_n);
      if (h.contains("leaf_basis")) c.hyperparameters.leaf_basis = parse_leaf_basis(h["leaf_basis"].get<std::string>());
    }
    if (doc.contains("profiles")) {
      const auto& p = doc["profiles"];
      reject_unknown(p, {"p_low", "p_high"}, "profiles");
      c.p_low = p.value("p_low", c.p_low);
      c.p_high = p.value("p_high", c.p_high);
    }
    if (doc.contains("shap")) {
      const auto& s = doc["shap"];
      reject_unknown(s, {"background", "budget", "explain_sample", "targets"}, "shap");
      c.shap.background = s.value("background", c.shap.background);
      c.shap.budget = s.value("budget", c.shap.budget);
      c.shap.explain_sample = s.value("explain_sample", c.shap.explain_sample);
      if (s.contains("targets")) {
        c.shap.targets.clear();
        for (const auto& t : s["targets"]) c.shap.targets.push_back(parse_explanation_target(t.get<std::string>()));
      }
    }
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("epsilon")) c.epsilon = doc["epsilon"].get<double>();
    if (doc.contains("workers")) c.workers = doc["workers"].get<unsigned>();
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    config_error(std::string("config: ") + e.what());
  }
  return c;
}

namespace {

ojson settings_json(const PipelineConfig& c) {
  ojson j;
  j["split"] = {{"train", c.ratios.train}, {"validation", c.ratios.validation}, {"test", c.ratios.test}};
  j["level"] = c.level;
  j["tune"] = c.tune;
  j["grid"] = {{"mtry", c.grid.mtry}, {"trees", c.grid.trees}, {"min_n", c.grid.min_n}};
  j["hyperparameters"] = {{"mtry", c.hyperparameters.mtry},
                          {"trees", c.hyperparameters.trees},
                          {"min_n", c.hyperparameters.min_n},
                          {"leaf_basis", leaf_basis_name(c.hyperparameters.leaf_basis)}};
  j["profiles"] = {{"p_low", c.p_low}, {"p_high", c.p_high}};
  std::vector<std::string> targets;
  for (auto t : c.shap.targets) targets.emplace_back(to_string(t));
  j["shap"] = {{"background", c.shap.background},
               {"budget", c.shap.budget},
               {"explain_sample", c.shap.explain_sample},
               {"targets", targets}};
  j["seed"] = c.seed;
  j["epsilon"] = c.epsilon;
  return j;
}

}  // namespace

std::string PipelineConfig::to_json() const {
  ojson j;
  j["log"] = log;
  j["schema"] = schema;
  j["output_dir"] = output_dir;
  j["model"] = model;
  const ojson settings = settings_json(*this);
  for (const auto& [k, v] : settings.items()) j[k] = v;
  j["workers"] = workers;
  return j.dump(2) + "\n";
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(settings_json(*this).dump())); }

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::State {
  std::optional<DatasetSplit> split;
  std::string input_hash;
  std::optional<QrfModel> model;
  std::optional<Hyperparameters> tuned;
  std::optional<ProfileThresholds> thresholds;
  std::optional<std::vector<PredictionInterval>> test_intervals;
  ojson manifest;
};

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)), state_(std::make_unique<State>()) {
  config_.validate();
  config_.validate_paths();
}

Pipeline::~Pipeline() = default;

const DatasetSplit& Pipeline::data() {
  if (!state_->split) {
    const std::string schema_text = read_file(config_.schema_path());
    const std::string log_text = read_file(config_.log);
    const AttributeSchema schema = AttributeSchema::from_json(schema_text);
    std::istringstream in(log_text);
    const EventLog log = parse_event_log(in, schema);
    state_->input_hash = hex64(fnv1a(log_text, fnv1a(schema_text)));
    state_->split = chronological_split(log, config_.ratios);
  }
  return *state_->split;
}

const QrfModel& Pipeline::model() {
  if (!state_->model) {
    const std::string path = config_.model_path();
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::Io, "model not found at " + path + "; run train first");
    state_->model = QrfModel::from_json(read_file(path), data().encoder->hash());
  }
  return *state_->model;
}

const ProfileThresholds& Pipeline::thresholds() {
  if (!state_->thresholds) {
    const fs::path path = fs::path(config_.output_dir) / "thresholds.json";
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::Io, "thresholds not found at " + path.string() + "; run profile first");
    state_->thresholds = ProfileThresholds::from_json(read_text(path));
  }
  return *state_->thresholds;
}

void Pipeline::load_manifest() {
  std::exception_ptr failure;
  try {
    data();
  } catch (...) {
    failure = std::current_exception();
  }
  const fs::path path = fs::path(config_.output_dir) / kManifest;
  if (!failure && fs::is_regular_file(path)) {
    try {
      auto doc = ojson::parse(read_text(path));
      if (doc.value("config_hash", "") == config_.hash() && doc.value("input_hash", "") == state_->input_hash &&
          doc.value("seed", std::uint64_t{0}) == config_.seed) {
        state_->manifest = std::move(doc);
        return;
      }
    } catch (const nlohmann::json::exception&) {
      // Unreadable manifests are replaced.
    }
  }
  ojson m;
  m["config_hash"] = config_.hash();
  m["seed"] = config_.seed;
  m["input_hash"] = state_->input_hash;
  ojson stages;
  for (auto s : kStages) stages[std::string(s)] = "pending";
  m["stages"] = stages;
  m["artifacts"] = ojson::object();
  m["complete"] = false;
  state_->manifest = std::move(m);
  if (failure) std::rethrow_exception(failure);
}

void Pipeline::save_manifest() const {
  auto& m = state_->manifest;
  bool complete = true;
  for (auto s : kStages) {
    const std::string status = m["stages"][std::string(s)].is_string() ? m["stages"][std::string(s)].get<std::string>()
                                                                        : m["stages"][std::string(s)].value("status", "");
    if (status != "complete" && status != "skipped") complete = false;
  }
  m["complete"] = complete;
  std::ofstream out(fs::path(config_.output_dir) / kManifest, std::ios::binary);
  out << m.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::Io, "cannot write " + std::string(kManifest));
}

void Pipeline::write_artifact(const std::string& name, const std::string& content, std::string_view stage) {
  const fs::path path = fs::path(name).is_absolute() || name.find('/') != std::string::npos
                            ? fs::path(name)
                            : fs::path(config_.output_dir) / name;
  {
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  }
  ojson a;
  a["stage"] = stage;
  a["config_hash"] = config_.hash();
  a["seed"] = config_.seed;
  a["fnv1a"] = hex64(fnv1a(content));
  a["bytes"] = content.size();
  state_->manifest["artifacts"][name] = a;
}

void Pipeline::run_stage(std::string_view stage) {
  if (std::find(kStages.begin(), kStages.end(), stage) == kStages.end()) {
    throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(stage) + "'");
  }
  const std::string name(stage);
  try {
    if (state_->manifest.is_null()) load_manifest();
    if (stage == "split") split();
    else if (stage == "tune") tune();
    else if (stage == "train") train();
    else if (stage == "predict") predict();
    else if (stage == "evaluate") evaluate();
    else if (stage == "profile") profile();
    else if (stage == "explain") explain();
    else report();
    state_->manifest["stages"][name] = "complete";
    save_manifest();
  } catch (const std::exception& e) {
    if (!state_->manifest.is_null()) {
      state_->manifest["stages"][name] = {{"status", "failed"}, {"error", e.what()}};
      try {
        save_manifest();
      } catch (const std::exception&) {
        // The stage error is the one worth reporting.
      }
    }
    throw StageError(name, e.what());
  }
}

void Pipeline::run_all() {
  state_->manifest = nullptr;
  fs::remove(fs::path(config_.output_dir) / kManifest);
  for (auto stage : kStages) {
    if (stage == "tune" && !config_.tune) {
      state_->manifest["stages"]["tune"] = "skipped";
      save_manifest();
      continue;
    }
    run_stage(stage);
  }
}

// ---------------------------------------------------------------------------
// Stages

void Pipeline::split() {
  const DatasetSplit& s = data();
  ojson j;
  j["config_hash"] = config_.hash();
  j["seed"] = config_.seed;
  j["input_hash"] = state_->input_hash;
  j["ratios"] = {{"train", config_.ratios.train}, {"validation", config_.ratios.validation}, {"test", config_.ratios.test}};
  const std::size_t cases = s.train_cases.size() + s.validation_cases.size() + s.test_cases.size();
  const std::size_t instances = s.train.size() + s.validation.size() + s.test.size();
  auto part = [&](const std::vector<std::string>& ids, const Dataset& d) {
    ojson p;
    p["cases"] = ids.size();
    p["instances"] = d.size();
    p["instance_share"] = static_cast<double>(d.size()) / static_cast<double>(instances);
    p["case_ids"] = ids;
    return p;
  };
  j["n_cases"] = cases;
  j["n_instances"] = instances;
  j["n_features"] = s.encoder->column_count();
  j["feature_hash"] = s.encoder->hash();
  j["train"] = part(s.train_cases, s.train);
  j["validation"] = part(s.validation_cases, s.validation);
  j["test"] = part(s.test_cases, s.test);
  write_artifact("split_summary.json", j.dump(2) + "\n", "split");
}

void Pipeline::tune() {
  const DatasetSplit& s = data();
  GridSearchOptions opts;
  opts.level = config_.level;
  opts.seed = config_.seed;
  opts.leaf_basis = config_.hyperparameters.leaf_basis;
  opts.epsilon = config_.epsilon;
  opts.workers = config_.workers;
  const std::size_t p = s.encoder->column_count();
  for (auto m : config_.grid.mtry) {
    if (m > p) {
      std::cerr << "warning: grid mtry " << m << " exceeds " << p << " features; clamped when training\n";
      break;
    }
  }
  const GridSearchResult result = grid_search(s.train, s.validation, config_.grid, opts);
  std::ostringstream lb;
  write_leaderboard_csv(lb, result.leaderboard);
  write_artifact("leaderboard.csv", lb.str(), "tune");
  ojson best;
  best["mtry"] = result.best.mtry;
  best["trees"] = result.best.trees;
  best["min_n"] = result.best.min_n;
  best["candidates"] = result.leaderboard.size();
  best["validation_rmse"] = result.leaderboard.front().point.rmse;
  write_artifact(std::string(kBestHyperparameters), best.dump(2) + "\n", "tune");
  state_->tuned = result.best;
}

void Pipeline::train() {
  const DatasetSplit& s = data();
  Hyperparameters hp = config_.hyperparameters;
  if (config_.tune) {
    if (!state_->tuned) {
      const fs::path path = fs::path(config_.output_dir) / kBestHyperparameters;
      if (!fs::is_regular_file(path)) throw Error(ErrorCode::Io, "tuning is enabled but " + path.string() + " is missing; run tune first");
      const auto best = nlohmann::json::parse(read_text(path));
      Hyperparameters t = hp;
      t.mtry = best.at("mtry").get<std::size_t>();
      t.trees = best.at("trees").get<std::size_t>();
      t.min_n = best.at("min_n").get<std::size_t>();
      state_->tuned = t;
    }
    hp.mtry = state_->tuned->mtry;
    hp.trees = state_->tuned->trees;
    hp.min_n = state_->tuned->min_n;
  }
  hp.seed = config_.seed;
  const std::size_t p = s.encoder->column_count();
  if (hp.mtry == 0) hp.mtry = default_mtry(p);
  if (hp.mtry > p) {
    std::cerr << "warning: mtry " << hp.mtry << " exceeds " << p << " features; using " << p << "\n";
    hp.mtry = p;
  }
  state_->model = QrfModel::train(s.train, hp, config_.workers);
  state_->test_intervals.reset();
  const std::string path = config_.model_path();
  const std::string key = config_.model.empty() ? "model.json" : path;
  write_artifact(key, state_->model->to_json(), "train");
}

void Pipeline::predict() {
  const DatasetSplit& s = data();
  const QrfModel& m = model();
  std::vector<PredictionInterval> intervals;
  intervals.reserve(s.test.size());
  for (const auto& inst : s.test.instances) intervals.push_back(m.predict_interval(inst.x, config_.level));
  std::ostringstream out;
  csv::write_row(out, {"instance_id", "case_id", "activity", "event_index", "actual", "point", "lower", "upper", "rwidth"});
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& inst = s.test.instances[i];
    const auto r = intervals[i].rwidth(config_.epsilon);
    csv::write_row(out, {std::to_string(i), inst.case_id, inst.activity, std::to_string(inst.event_index),
                         format_double(inst.target), format_double(intervals[i].point),
                         format_double(intervals[i].lower), format_double(intervals[i].upper),
                         r ? format_double(*r) : std::string()});
  }
  write_artifact("predictions.csv", out.str(), "predict");
  state_->test_intervals = std::move(intervals);
}

void Pipeline::evaluate() {
  const DatasetSplit& s = data();
  const QrfModel& m = model();
  if (!state_->test_intervals) predict();
  const auto& test_iv = *state_->test_intervals;
  const std::vector<double> actual = s.test.targets();

  std::vector<PredictionInterval> val_iv;
  for (const auto& inst : s.validation.instances) val_iv.push_back(m.predict_interval(inst.x, config_.level));
  const std::vector<double> val_actual = s.validation.targets();

  ojson j;
  j["config_hash"] = config_.hash();
  j["seed"] = config_.seed;
  j["level"] = config_.level;
  j["epsilon"] = config_.epsilon;
  const Hyperparameters& hp = m.hyperparameters();
  j["hyperparameters"] = {{"mtry", hp.mtry}, {"trees", hp.trees}, {"min_n", hp.min_n},
                          {"leaf_basis", leaf_basis_name(hp.leaf_basis)}};
  j["overall"] = scored_json(actual, test_iv, config_.epsilon);
  j["validation"] = scored_json(val_actual, val_iv, config_.epsilon);

  const CoverageBreakdown cb = coverage_breakdown(actual, test_iv);
  j["coverage"] = {{"below_lower", cb.below_lower},
                   {"above_upper", cb.above_upper},
                   {"below_given_miss", optional_json(cb.below_given_miss)},
                   {"above_given_miss", optional_json(cb.above_given_miss)},
                   {"misses", cb.misses}};

  std::map<std::string, std::vector<std::size_t>> by_activity;
  for (std::size_t i = 0; i < s.test.size(); ++i) by_activity[s.test.instances[i].activity].push_back(i);
  ojson per_activity = ojson::object();
  for (const auto& [activity, idx] : by_activity) {
    std::vector<double> a;
    std::vector<PredictionInterval> iv;
    for (auto i : idx) {
      a.push_back(actual[i]);
      iv.push_back(test_iv[i]);
    }
    per_activity[activity] = scored_json(a, iv, config_.epsilon);
  }
  j["per_activity"] = per_activity;
  write_artifact("metrics.json", j.dump(2) + "\n", "evaluate");
}

void Pipeline::profile() {
  const DatasetSplit& s = data();
  const QrfModel& m = model();
  std::vector<double> val_rwidths;
  std::size_t val_excluded = 0;
  for (const auto& inst : s.validation.instances) {
    const auto r = m.predict_interval(inst.x, config_.level).rwidth(config_.epsilon);
    if (r) val_rwidths.push_back(*r);
    else ++val_excluded;
  }
  const ProfileThresholds t = calibrate_thresholds(val_rwidths, config_.p_low, config_.p_high);
  state_->thresholds = t;
  write_artifact("thresholds.json", t.to_json(), "profile");

  if (!state_->test_intervals) predict();
  const auto& test_iv = *state_->test_intervals;
  std::vector<ScoredInstance> scored;
  for (std::size_t i = 0; i < s.test.size(); ++i) scored.push_back({s.test.instances[i].target, test_iv[i]});
  const ProfileBreakdown breakdown = per_profile_report(scored, t, config_.epsilon);

  std::ostringstream assignments;
  csv::write_row(assignments, {"instance_id", "rwidth", "profile"});
  for (std::size_t i = 0; i < test_iv.size(); ++i) {
    const auto r = test_iv[i].rwidth(config_.epsilon);
    csv::write_row(assignments, {std::to_string(i), r ? format_double(*r) : std::string(),
                                 r ? std::string(to_string(assign_profile(*r, t))) : std::string("unassigned")});
  }
  write_artifact("profile_assignments.csv", assignments.str(), "profile");

  ojson per_profile;
  for (const auto& rep : breakdown.profiles) {
    ojson p;
    p["n"] = rep.n;
    p["share"] = rep.share;
    p["point"] = rep.point ? point_json(*rep.point) : ojson(nullptr);
    p["interval"] = rep.interval ? interval_json(*rep.interval) : ojson(nullptr);
    per_profile[std::string(to_string(rep.profile))] = p;
  }
  per_profile["n_unassigned"] = breakdown.n_unassigned;
  per_profile["n_total"] = breakdown.n_total;
  per_profile["validation_excluded"] = val_excluded;

  const fs::path metrics_path = fs::path(config_.output_dir) / "metrics.json";
  if (!fs::is_regular_file(metrics_path)) evaluate();
  ojson metrics = ojson::parse(read_text(metrics_path));
  metrics["per_profile"] = per_profile;
  write_artifact("metrics.json", metrics.dump(2) + "\n", "profile");
}

void Pipeline::explain() {
  const DatasetSplit& s = data();
  const QrfModel& m = model();
  if (s.test.empty()) throw Error(ErrorCode::EmptyDataset, "test dataset is empty");
  if (!state_->test_intervals) predict();

  // Seeded sample of test instances, reported in ascending index order.
  std::vector<std::size_t> sample(s.test.size());
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  const std::size_t n = config_.shap.explain_sample == 0 ? sample.size()
                                                         : std::min(config_.shap.explain_sample, sample.size());
  Rng rng(derive_seed(config_.seed, kSampleStream));
  for (std::size_t j = 0; j < n; ++j) std::swap(sample[j], sample[j + rng.below(sample.size() - j)]);
  sample.resize(n);
  std::sort(sample.begin(), sample.end());

  std::vector<std::vector<double>> rows;
  for (auto i : sample) rows.push_back(s.test.instances[i].x);
  const BackgroundSet background =
      sample_background(s.train, config_.shap.background, derive_seed(config_.seed, kBackgroundStream));
  const FeatureGroups groups = feature_groups(*s.encoder);
  std::vector<std::string> names;
  for (const auto& g : s.encoder->groups()) names.push_back(g.name);
  KernelOptions opts;
  opts.budget = config_.shap.budget;
  opts.seed = config_.seed;
  const auto results = explain_instances(m, rows, config_.shap.targets, background, groups, config_.level, opts,
                                         config_.workers);
  const FeatureValueTable values = describe_rows(*s.encoder, rows);

  std::optional<ProfileThresholds> thresholds = state_->thresholds;
  if (!thresholds && fs::is_regular_file(fs::path(config_.output_dir) / "thresholds.json")) thresholds = this->thresholds();
  std::vector<std::optional<UncertaintyProfile>> profiles(sample.size());
  if (thresholds) {
    for (std::size_t k = 0; k < sample.size(); ++k) {
      const auto r = (*state_->test_intervals)[sample[k]].rwidth(config_.epsilon);
      if (r) profiles[k] = assign_profile(*r, *thresholds);
    }
  }

  std::ostringstream expl;
  csv::write_row(expl, {"instance_id", "target", "feature", "feature_value", "phi", "intercept", "fx"});
  double max_gap = 0;
  double max_width_discrepancy = 0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    max_width_discrepancy = std::max(max_width_discrepancy, results[k].width_identity_discrepancy);
    for (auto t : config_.shap.targets) {
      const Explanation& e = results[k].by_target.at(t);
      max_gap = std::max(max_gap, e.local_accuracy_gap());
      for (std::size_t i = 0; i < names.size(); ++i) {
        csv::write_row(expl, {std::to_string(sample[k]), std::string(to_string(t)), names[i], values[k][i].label,
                              format_double(e.phi[i]), format_double(e.intercept), format_double(e.fx)});
      }
    }
  }
  write_artifact("explanations.csv", expl.str(), "explain");

  for (auto t : config_.shap.targets) {
    const std::string tn(to_string(t));
    std::vector<Explanation> list;
    for (const auto& r : results) list.push_back(r.by_target.at(t));
    const auto importance = global_importance(list, names);

    std::ostringstream gi;
    csv::write_row(gi, {"feature", "mean_abs_phi"});
    for (const auto& fi : importance) csv::write_row(gi, {fi.name, format_double(fi.mean_abs_phi)});
    write_artifact("global_importance_" + tn + ".csv", gi.str(), "explain");

    std::ostringstream sm;
    csv::write_row(sm, {"instance_id", "feature", "feature_value", "feature_numeric", "phi"});
    for (const auto& row : summary_data(list, values, names)) {
      csv::write_row(sm, {std::to_string(sample[row.instance]), row.feature, row.value.label,
                          format_double(row.value.numeric), format_double(row.phi)});
    }
    write_artifact("summary_" + tn + ".csv", sm.str(), "explain");

    const std::string& primary = importance[0].name;
    const std::string& color = importance.size() > 1 ? importance[1].name : importance[0].name;
    std::ostringstream dp;
    csv::write_row(dp, {"instance_id", "feature", "feature_value", "phi", "color_feature", "color_value", "profile"});
    for (const auto& row : dependence_data(list, values, names, primary, color, profiles)) {
      const auto& prof = profiles[row.instance];
      csv::write_row(dp, {std::to_string(sample[row.instance]), primary, row.primary.label, format_double(row.phi),
                          color, row.color.label, prof ? std::string(to_string(*prof)) : std::string()});
    }
    write_artifact("dependence_" + tn + ".csv", dp.str(), "explain");
  }

  ojson summary;
  summary["config_hash"] = config_.hash();
  summary["seed"] = config_.seed;
  summary["n_explained"] = sample.size();
  summary["n_test"] = s.test.size();
  summary["background_size"] = background.size();
  summary["features"] = names.size();
  summary["budget"] = config_.shap.budget == 0 ? default_budget(names.size()) : config_.shap.budget;
  std::vector<std::string> targets;
  for (auto t : config_.shap.targets) targets.emplace_back(to_string(t));
  summary["targets"] = targets;
  summary["max_local_accuracy_gap"] = max_gap;
  summary["max_width_identity_discrepancy"] = max_width_discrepancy;
  summary["instances"] = sample;
  write_artifact("explain_summary.json", summary.dump(2) + "\n", "explain");
}

void Pipeline::report() {
  const DatasetSplit& s = data();
  if (!state_->test_intervals) predict();
  const auto& iv = *state_->test_intervals;
  const fs::path out_dir(config_.output_dir);

  // Interval coverage: actual against point prediction with interval whiskers.
  std::ostringstream cov;
  csv::write_row(cov, {"instance_id", "actual", "point", "lower", "upper", "covered"});
  svg::Series inside{"covered", "#1f77b4", {}, {}, {}, {}};
  svg::Series outside{"not covered", "#d62728", {}, {}, {}, {}};
  for (std::size_t i = 0; i < iv.size(); ++i) {
    const double a = s.test.instances[i].target;
    const bool covered = iv[i].lower <= a && a <= iv[i].upper;
    csv::write_row(cov, {std::to_string(i), format_double(a), format_double(iv[i].point), format_double(iv[i].lower),
                         format_double(iv[i].upper), covered ? "1" : "0"});
    svg::Series& target = covered ? inside : outside;
    target.x.push_back(a);
    target.y.push_back(iv[i].point);
    target.low.push_back(iv[i].lower);
    target.high.push_back(iv[i].upper);
  }
  write_artifact("coverage.csv", cov.str(), "report");
  write_artifact("coverage.svg",
                 svg::scatter({"Test intervals", "actual (min)", "predicted (min)", true}, {inside, outside}),
                 "report");

  // Profiles: interval width against point prediction, colored by profile.
  const ProfileThresholds& t = thresholds();
  std::ostringstream prof;
  csv::write_row(prof, {"instance_id", "point", "width", "rwidth", "profile"});
  std::array<svg::Series, 3> series{svg::Series{"low", "#2ca02c", {}, {}, {}, {}},
                                    svg::Series{"medium", "#ff7f0e", {}, {}, {}, {}},
                                    svg::Series{"high", "#d62728", {}, {}, {}, {}}};
  for (std::size_t i = 0; i < iv.size(); ++i) {
    const auto r = iv[i].rwidth(config_.epsilon);
    std::string label = "unassigned";
    if (r) {
      const auto p = assign_profile(*r, t);
      label = std::string(to_string(p));
      series[static_cast<std::size_t>(p)].x.push_back(iv[i].point);
      series[static_cast<std::size_t>(p)].y.push_back(iv[i].width());
    }
    csv::write_row(prof, {std::to_string(i), format_double(iv[i].point), format_double(iv[i].width()),
                          r ? format_double(*r) : std::string(), label});
  }
  write_artifact("profiles.csv", prof.str(), "report");
  write_artifact("profiles.svg",
                 svg::scatter({"Uncertainty profiles", "point prediction (min)", "interval width (min)", false},
                              {series.begin(), series.end()}),
                 "report");

  // Explanation charts are drawn from the CSVs written by the explain stage.
  for (auto target : config_.shap.targets) {
    const std::string tn(to_string(target));
    const fs::path gi_path = out_dir / ("global_importance_" + tn + ".csv");
    const fs::path sm_path = out_dir / ("summary_" + tn + ".csv");
    if (!fs::is_regular_file(gi_path) || !fs::is_regular_file(sm_path)) {
      throw Error(ErrorCode::Io, "missing " + gi_path.string() + "; run explain first");
    }
    const auto gi = read_csv(gi_path);
    std::vector<std::string> labels;
    std::vector<double> values;
    const std::size_t fcol = column(gi.at(0), "feature", gi_path);
    const std::size_t vcol = column(gi.at(0), "mean_abs_phi", gi_path);
    for (std::size_t r = 1; r < gi.size() && labels.size() < 15; ++r) {
      labels.push_back(gi[r].at(fcol));
      values.push_back(cell_number(gi[r].at(vcol)));
    }
    write_artifact("importance_" + tn + ".svg",
                   svg::bars({"Global importance (" + tn + ")", "mean |phi| (min)", "", false}, labels, values),
                   "report");

    const auto sm = read_csv(sm_path);
    const std::size_t feat = column(sm.at(0), "feature", sm_path);
    const std::size_t phi = column(sm.at(0), "phi", sm_path);
    std::map<std::string, std::size_t> rank;
    for (std::size_t r = 0; r < labels.size(); ++r) rank[labels[r]] = labels.size() - r;
    svg::Series dots{"phi per instance (row = feature, top is most important)", "#9467bd", {}, {}, {}, {}};
    for (std::size_t r = 1; r < sm.size(); ++r) {
      auto it = rank.find(sm[r].at(feat));
      if (it == rank.end()) continue;
      // Deterministic vertical jitter keeps overlapping dots visible.
      const double jitter = (static_cast<double>(fnv1a(std::to_string(r)) % 1000) / 1000.0 - 0.5) * 0.5;
      dots.x.push_back(cell_number(sm[r].at(phi)));
      dots.y.push_back(static_cast<double>(it->second) + jitter);
    }
    write_artifact("summary_" + tn + ".svg",
                   svg::scatter({"SHAP summary (" + tn + ")", "phi (min)", "feature rank", false}, {dots}), "report");
  }
}

}  // namespace procqrf
