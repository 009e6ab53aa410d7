#include "procqrf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/special_functions/erf.hpp>

#include "json.hpp"

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

namespace {

constexpr const char* kActivityNames[] = {
    "Edge_Bead",     "Dishing_Press_1", "Dishing_Press_2",  "Plasma_Welding", "Laser_Cutting",  "Sawing",
    "Deburring",     "Rolling",         "Flanging",         "Bending",        "Drilling",       "Grinding",
    "Polishing",     "Pickling",        "Passivation",      "TIG_Welding",    "MIG_Welding",    "Spot_Welding",
    "Heat_Treatment", "Annealing",      "Straightening",    "Punching",       "Embossing",      "Leak_Test",
    "X_Ray_Inspection", "Quality_Check", "Packaging",       "Marking",        "Cleaning",       "Assembly",
};
constexpr std::size_t kNamedActivities = std::size(kActivityNames);

std::string padded(std::string_view prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, value);
  return std::string(prefix) + buf;
}

int digits(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

// Spreads activity i over [0, 1] in a fixed scrambled order.
double spread(std::size_t i, std::size_t n, std::size_t stride) {
  if (n <= 1) return 0.5;
  return static_cast<double>((i * stride) % n) / static_cast<double>(n - 1);
}

std::size_t binomial_draw(Rng& rng, std::size_t trials, double p) {
  std::size_t k = 0;
  for (std::size_t t = 0; t < trials; ++t) k += rng.uniform() < p ? 1 : 0;
  return k;
}

}  // namespace

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (n_cases < 1) fail("n_cases must be >= 1");
  if (n_activities < 1) fail("n_activities must be >= 1");
  if (materials.empty()) fail("at least one material is required");
  if (material_sigma_offset.size() != materials.size()) fail("one sigma offset per material is required");
  if (article_groups < 1) fail("article_groups must be >= 1");
  if (article_group_effect.size() < article_groups) fail("one effect per article group is required");
  if (resources < 1) fail("resources must be >= 1");
  for (const auto& r : numeric) {
    if (!(r.min < r.max)) fail("numeric range for " + r.name + " must satisfy min < max");
    if (!std::isfinite(r.effect)) fail("effect for " + r.name + " must be finite");
  }
  if (!(base_median_low > 0 && base_median_low <= base_median_high)) fail("base medians must be 0 < low <= high");
  if (!(sigma_low > 0 && sigma_low <= sigma_high)) fail("sigma range must be 0 < low <= high");
  for (double s : material_sigma_offset) {
    if (!(sigma_low + s > 0)) fail("material sigma offsets must keep sigma positive");
  }
  if (!(length_p >= 0 && length_p <= 1)) fail("length_p must lie in [0, 1]");
  if (!(mean_case_interarrival_minutes >= 0 && mean_event_gap_minutes >= 0)) fail("gap means must be >= 0");
}

const DurationParameters& GroundTruth::at(const std::string& case_id, std::size_t event_index) const {
  auto it = events.find({case_id, event_index});
  if (it == events.end()) {
    throw Error(ErrorCode::UnknownEvent,
                "no ground truth for case " + case_id + " event " + std::to_string(event_index));
  }
  return it->second;
}

std::string GroundTruth::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [key, p] : events) {
    nlohmann::ordered_json e;
    e["case_id"] = key.first;
    e["event_index"] = key.second;
    e["activity"] = p.activity;
    e["mu"] = p.mu;
    e["sigma"] = p.sigma;
    arr.push_back(std::move(e));
  }
  doc["events"] = std::move(arr);
  return doc.dump(1) + "\n";
}

GroundTruth GroundTruth::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    GroundTruth truth;
    truth.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& e : doc.at("events")) {
      DurationParameters p{e.at("activity").get<std::string>(), e.at("mu").get<double>(),
                           e.at("sigma").get<double>()};
      if (!(p.sigma > 0)) throw Error(ErrorCode::FormatError, "ground truth sigma must be positive");
      truth.events[{e.at("case_id").get<std::string>(), e.at("event_index").get<std::size_t>()}] = std::move(p);
    }
    return truth;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("ground truth file: ") + e.what());
  }
}

std::vector<std::string> synthetic_activities(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(i < kNamedActivities ? std::string(kActivityNames[i]) : padded("Activity_", i + 1, 2));
  }
  return out;
}

AttributeSchema synthetic_schema(const GeneratorConfig& config) {
  std::vector<AttributeSpec> specs;
  for (const auto& r : config.numeric) specs.push_back({r.name, AttributeKind::Numeric, false});
  specs.push_back({"Material", AttributeKind::Categorical, false});
  specs.push_back({"Article_Group", AttributeKind::Categorical, false});
  specs.push_back({"Resource", AttributeKind::Categorical, false});
  return AttributeSchema(std::move(specs));
}

GeneratedLog generate_log(const GeneratorConfig& config) {
  config.validate();
  const std::vector<std::string> activities = synthetic_activities(config.n_activities);
  const std::size_t n_act = activities.size();
  std::vector<double> base_mu(n_act), base_sigma(n_act);
  const double lo = std::log(config.base_median_low);
  const double hi = std::log(config.base_median_high);
  for (std::size_t i = 0; i < n_act; ++i) {
    base_mu[i] = lo + (hi - lo) * spread(i, n_act, 17);
    base_sigma[i] = config.sigma_low + (config.sigma_high - config.sigma_low) * spread(i, n_act, 11);
  }

  GeneratedLog out;
  out.log.schema = synthetic_schema(config);
  out.truth.seed = config.seed;
  Rng rng(config.seed);
  const int id_width = std::max(5, digits(config.n_cases));
  double case_start = static_cast<double>(config.start_epoch);

  for (std::size_t c = 0; c < config.n_cases; ++c) {
    Trace trace;
    trace.case_id = padded("C", c + 1, id_width);
    if (c > 0) case_start += std::round(rng.exponential(config.mean_case_interarrival_minutes) * 60.0);

    std::map<std::string, AttributeValue> case_attrs;
    double mu_case = 0;
    for (const auto& r : config.numeric) {
      double v = r.integral ? r.min + static_cast<double>(rng.below(static_cast<std::uint64_t>(r.max - r.min) + 1))
                            : std::round((r.min + (r.max - r.min) * rng.uniform()) * 10.0) / 10.0;
      v = std::clamp(v, r.min, r.max);
      case_attrs[r.name] = v;
      mu_case += r.effect * (v - r.min) / (r.max - r.min);
    }
    const std::size_t material = rng.below(config.materials.size());
    const std::size_t group = rng.below(config.article_groups);
    case_attrs["Material"] = config.materials[material];
    case_attrs["Article_Group"] = padded("AG", group + 1, 2);
    mu_case += config.article_group_effect[group];

    const std::size_t length = 2 + binomial_draw(rng, config.length_trials, config.length_p);
    double t = case_start;
    std::size_t activity = rng.below(n_act);
    for (std::size_t k = 0; k < length; ++k) {
      if (k > 0) {
        activity = (activity + 1 + rng.below(4)) % n_act;
        t += std::round(rng.exponential(config.mean_event_gap_minutes) * 60.0);
      }
      const double mu = base_mu[activity] + mu_case;
      const double sigma = base_sigma[activity] + config.material_sigma_offset[material];
      const double minutes = std::exp(mu + sigma * rng.normal());
      Event e;
      e.activity = activities[activity];
      e.case_id = trace.case_id;
      e.t_start = t;
      e.t_complete = t + std::round(minutes * 60.0);
      e.attributes = case_attrs;
      e.attributes["Resource"] = padded("R", 1 + rng.below(config.resources), 2);
      t = e.t_complete;
      out.truth.events[{trace.case_id, k}] = DurationParameters{e.activity, mu, sigma};
      trace.events.push_back(std::move(e));
    }
    out.log.traces.push_back(std::move(trace));
  }
  return out;
}

double lognormal_quantile(double mu, double sigma, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (!(sigma > 0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  const double z = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * alpha);
  return std::exp(mu + sigma * z);
}

double true_quantile(const GroundTruth& truth, const std::string& case_id, std::size_t event_index, double alpha) {
  const DurationParameters& p = truth.at(case_id, event_index);
  return lognormal_quantile(p.mu, p.sigma, alpha);
}

}  // namespace procqrf
