#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "procqrf/error.hpp"
#include "procqrf/pipeline.hpp"
#include "procqrf/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace procqrf;

namespace {

const std::string kCli = PROCQRF_CLI_PATH;

// Fresh directory per call, removed by the destructor.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("procqrf_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int exit_code = -1;
  std::string err;
};

Result cli(const std::string& args, const TempDir& dir) {
  const std::string err_file = dir / "stderr.txt";
  const std::string cmd = "'" + kCli + "' " + args + " > /dev/null 2> '" + err_file + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_file(err_file);
  return r;
}

json load(const std::string& path) { return json::parse(read_file(path)); }

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  csv::Reader reader(in);
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  std::vector<std::string> fields;
  if (!reader.next(header)) return rows;
  while (reader.next(fields)) {
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i) row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

// Small SHAP settings keep the end-to-end runs short.
const std::string kFast = " --trees 40 --background 4 --budget 120";

}  // namespace

TEST_CASE("generate writes a log, schema and ground truth deterministically") {
  TempDir a("gen_a"), b("gen_b");
  REQUIRE(cli("generate --cases 120 --seed 5 -o '" + a.path.string() + "'", a).exit_code == 0);
  REQUIRE(cli("generate --cases 120 --seed 5 -o '" + b.path.string() + "'", b).exit_code == 0);
  for (const char* f : {"log.csv", "schema.json", "truth.json"}) {
    CHECK(fs::is_regular_file(a / f));
    CHECK(read_file(a / f) == read_file(b / f));
  }
}

TEST_CASE("usage errors exit with code 2 and name the problem") {
  TempDir d("usage");
  const std::string missing = (d.path / "does_not_exist").string();
  const Result r = cli("generate --cases 10 -o '" + missing + "'", d);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find(missing) != std::string::npos);

  CHECK(cli("no-such-command", d).exit_code == 2);
  CHECK(cli("run --no-such-flag", d).exit_code == 2);

  std::ofstream(d / "bad.json") << R"({"log": "x.csv", "trees_typo": 3})";
  const Result bad = cli("run -c '" + (d / "bad.json") + "'", d);
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("trees_typo") != std::string::npos);

  CHECK(cli("run --log '" + (d / "missing.csv") + "' -o '" + d.path.string() + "'", d).exit_code == 2);
}

TEST_CASE("a failing stage exits nonzero, names the stage and marks the manifest") {
  TempDir d("fail");
  REQUIRE(cli("generate --cases 100 -o '" + d.path.string() + "'", d).exit_code == 0);
  const Result r = cli("predict --log '" + (d / "log.csv") + "' -o '" + d.path.string() + "'", d);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("predict") != std::string::npos);
  const json m = load(d / "MANIFEST.json");
  CHECK(m["stages"]["predict"]["status"] == "failed");
  CHECK(m["complete"] == false);
}

TEST_CASE("a full run produces every artifact and a complete manifest") {
  TempDir d("run");
  REQUIRE(cli("generate --cases 500 --seed 7 -o '" + d.path.string() + "'", d).exit_code == 0);
  const Result r = cli("run --log '" + (d / "log.csv") + "' -o '" + d.path.string() + "' --explain-sample 25" + kFast, d);
  INFO(r.err);
  REQUIRE(r.exit_code == 0);

  const json m = load(d / "MANIFEST.json");
  CHECK(m["complete"] == true);
  CHECK(m["stages"]["tune"] == "skipped");
  for (auto s : kStages) {
    if (s != "tune") CHECK(m["stages"][std::string(s)] == "complete");
  }
  for (const char* f : {"split_summary.json", "model.json", "predictions.csv", "metrics.json", "thresholds.json",
                        "profile_assignments.csv", "explanations.csv", "explain_summary.json", "coverage.csv",
                        "coverage.svg", "profiles.csv", "profiles.svg", "global_importance_point.csv",
                        "global_importance_width.csv", "summary_width.csv", "dependence_lower.csv",
                        "importance_upper.svg", "summary_point.svg"}) {
    INFO(f);
    CHECK(fs::is_regular_file(d / f));
    REQUIRE(m["artifacts"].contains(f));
    const json& a = m["artifacts"][f];
    CHECK(a["config_hash"] == m["config_hash"]);
    CHECK(a["seed"] == 7);
    CHECK(a["fnv1a"] == hex64(fnv1a(read_file(d / f))));
  }

  // Exactly 25 explained instances for every target.
  std::map<std::string, std::set<std::string>> per_target;
  for (const auto& row : read_csv(d / "explanations.csv")) per_target[row.at("target")].insert(row.at("instance_id"));
  REQUIRE(per_target.size() == 4);
  for (const auto& [t, ids] : per_target) CHECK(ids.size() == 25);

  const json s = load(d / "explain_summary.json");
  CHECK(s["n_explained"] == 25);
  CHECK(s["max_local_accuracy_gap"].get<double>() <= 1e-6);
  CHECK(s["max_width_identity_discrepancy"].get<double>() <= 1e-6);

  // Per-profile counts agree with the assignment file.
  const json metrics = load(d / "metrics.json");
  std::map<std::string, std::size_t> counts;
  const auto assignments = read_csv(d / "profile_assignments.csv");
  for (const auto& row : assignments) ++counts[row.at("profile")];
  for (const char* p : {"low", "medium", "high"}) CHECK(metrics["per_profile"][p]["n"] == counts[p]);
  CHECK(metrics["per_profile"]["n_unassigned"] == counts["unassigned"]);
  CHECK(assignments.size() == read_csv(d / "predictions.csv").size());
  CHECK(metrics["config_hash"] == m["config_hash"]);
}

TEST_CASE("results do not depend on the number of workers") {
  TempDir a("w1"), b("w3");
  REQUIRE(cli("generate --cases 300 --seed 2 -o '" + a.path.string() + "'", a).exit_code == 0);
  const std::string common = " --log '" + (a / "log.csv") + "' --explain-sample 6 --targets point width" + kFast;
  REQUIRE(cli("run -o '" + a.path.string() + "' --workers 1" + common, a).exit_code == 0);
  REQUIRE(cli("run -o '" + b.path.string() + "' --workers 3" + common, b).exit_code == 0);
  for (const char* f : {"metrics.json", "predictions.csv", "model.json", "explanations.csv", "thresholds.json"}) {
    INFO(f);
    CHECK(read_file(a / f) == read_file(b / f));
  }
}

TEST_CASE("stages can run one at a time and the config file sets defaults") {
  TempDir d("stages");
  REQUIRE(cli("generate --cases 200 --seed 4 -o '" + d.path.string() + "'", d).exit_code == 0);
  json cfg;
  cfg["log"] = d / "log.csv";
  cfg["output_dir"] = d.path.string();
  cfg["hyperparameters"] = {{"trees", 20}};
  std::ofstream(d / "cfg.json") << cfg.dump();
  const std::string c = " -c '" + (d / "cfg.json") + "'";
  for (const char* s : {"split", "train", "predict", "evaluate", "profile"}) {
    INFO(s);
    CHECK(cli(std::string(s) + c, d).exit_code == 0);
  }
  const json m = load(d / "MANIFEST.json");
  CHECK(m["stages"]["profile"] == "complete");
  CHECK(m["complete"] == false);
  CHECK(load(d / "model.json")["hyperparameters"]["trees"] == 20);
  CHECK(load(d / "metrics.json").contains("per_profile"));
}

TEST_CASE("config JSON round trip and hash") {
  PipelineConfig c;
  c.log = "a.csv";
  c.hyperparameters.trees = 33;
  const PipelineConfig back = PipelineConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  PipelineConfig moved = c;
  moved.log = "elsewhere/a.csv";
  moved.workers = 8;
  CHECK(moved.hash() == c.hash());
  moved.seed = 8;
  CHECK(moved.hash() != c.hash());
  PipelineConfig bad;
  bad.level = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"unknown": 1})"), Error);
}
