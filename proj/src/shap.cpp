#include "procqrf/shap.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include <Eigen/Dense>

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

ModelFunction ModelFunction::scalar(std::function<double(std::span<const double>)> f) {
  return ModelFunction(1, [f = std::move(f)](std::span<const double> row, std::span<double> out) { out[0] = f(row); });
}

FeatureGroups feature_groups(const FeatureEncoder& encoder) {
  FeatureGroups groups;
  for (const auto& g : encoder.groups()) groups.push_back(g.columns);
  return groups;
}

BackgroundSet sample_background(const Dataset& train, std::size_t size, std::uint64_t seed) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "background needs training rows");
  if (size == 0) throw Error(ErrorCode::InvalidArgument, "background size must be >= 1");
  const std::size_t n = train.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(size, n);
  Rng rng(seed);
  for (std::size_t j = 0; j < take; ++j) std::swap(idx[j], idx[j + rng.below(n - j)]);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  BackgroundSet bg;
  for (auto i : idx) bg.rows.push_back(train.instances[i].x);
  return bg;
}

std::string_view to_string(ExplanationTarget t) {
  switch (t) {
    case ExplanationTarget::PointPrediction: return "point";
    case ExplanationTarget::LowerBoundary: return "lower";
    case ExplanationTarget::UpperBoundary: return "upper";
    case ExplanationTarget::IntervalWidth: return "width";
  }
  return "unknown";
}

ExplanationTarget parse_explanation_target(std::string_view name) {
  for (auto t : kAllTargets) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown explanation target '" + std::string(name) + "'");
}

double Explanation::local_accuracy_gap() const {
  double total = intercept;
  for (double p : phi) total += p;
  return std::fabs(total - fx);
}

namespace {

constexpr std::size_t kMaxKernelFeatures = 63;

double binomial(std::size_t n, std::size_t k) {
  double c = 1;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

// Shared state for evaluating coalitions of one instance.
class CoalitionEvaluator {
 public:
  CoalitionEvaluator(const ModelFunction& f, std::span<const double> x, const BackgroundSet& background,
                     const FeatureGroups& groups)
      : f_(f), x_(x), background_(background), groups_(groups), row_(x.size()), tmp_(f.outputs()) {
    if (background.rows.empty()) throw Error(ErrorCode::InvalidArgument, "background set is empty");
    if (groups.empty()) throw Error(ErrorCode::InvalidArgument, "no features to explain");
    for (const auto& g : groups) {
      for (auto c : g) {
        if (c >= x.size()) throw Error(ErrorCode::SchemaMismatch, "feature group column outside the row");
      }
    }
    for (const auto& b : background.rows) {
      if (b.size() != x.size()) throw Error(ErrorCode::SchemaMismatch, "background row width differs from x");
    }
  }

  std::size_t features() const noexcept { return groups_.size(); }
  std::size_t outputs() const noexcept { return f_.outputs(); }

  void at_x(std::span<double> out) { f_(x_, out); }

  template <typename Contains>
  void masked(Contains&& contains, bool all_ones, std::span<double> out) {
    if (all_ones) {
      f_(x_, out);
      return;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& b : background_.rows) {
      std::copy(b.begin(), b.end(), row_.begin());
      for (std::size_t i = 0; i < groups_.size(); ++i) {
        if (!contains(i)) continue;
        for (auto c : groups_[i]) row_[c] = x_[c];
      }
      f_(row_, tmp_);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += tmp_[k];
    }
    const double n = static_cast<double>(background_.rows.size());
    for (auto& v : out) v /= n;
  }

  void masked(std::uint64_t mask, std::span<double> out) {
    const std::uint64_t full = groups_.size() == 64 ? ~0ULL : (1ULL << groups_.size()) - 1;
    masked([mask](std::size_t i) { return (mask >> i) & 1ULL; }, mask == full, out);
  }

 private:
  const ModelFunction& f_;
  std::span<const double> x_;
  const BackgroundSet& background_;
  const FeatureGroups& groups_;
  std::vector<double> row_;
  std::vector<double> tmp_;
};

// Next integer with the same popcount (Gosper's hack).
std::uint64_t next_same_popcount(std::uint64_t v) {
  const std::uint64_t c = v & (~v + 1);
  const std::uint64_t r = v + c;
  return (((r ^ v) >> 2) / c) | r;
}

struct WeightedCoalitions {
  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
};

WeightedCoalitions choose_coalitions(std::size_t m, std::size_t budget, std::uint64_t seed) {
  WeightedCoalitions out;
  const std::uint64_t full = (1ULL << m) - 1;
  const bool enumerate_all = m < 63 && (1ULL << m) - 2 <= budget;
  if (enumerate_all) {
    for (std::uint64_t mask = 1; mask < full; ++mask) {
      out.masks.push_back(mask);
      out.weights.push_back(kernel_weight(m, static_cast<std::size_t>(std::popcount(mask))));
    }
    return out;
  }
  if (budget < 2 * m + 2) {
    throw Error(ErrorCode::InvalidArgument, "coalition budget " + std::to_string(budget) +
                                               " is below 2M + 2 = " + std::to_string(2 * m + 2));
  }

  // Whole size classes (s together with M - s) while the budget lasts, then
  // paired samples over the remaining classes in proportion to their kernel mass.
  std::size_t remaining = budget;
  std::vector<std::size_t> sampled_classes;
  std::size_t s = 1;
  for (; s <= m / 2; ++s) {
    const double per_size = binomial(m, s);
    const double count = s == m - s ? per_size : 2 * per_size;
    if (count > static_cast<double>(remaining)) break;
    for (std::size_t size : {s, m - s}) {
      if (size == m - s && s == m - s && size != s) continue;
      for (std::uint64_t mask = (1ULL << size) - 1; mask < full; mask = next_same_popcount(mask)) {
        out.masks.push_back(mask);
        out.weights.push_back(kernel_weight(m, size));
      }
      if (s == m - s) break;
    }
    remaining -= static_cast<std::size_t>(count);
  }
  for (; s <= m / 2; ++s) sampled_classes.push_back(s);
  if (sampled_classes.empty() || remaining < 2) return out;

  std::vector<double> class_mass;
  double total_mass = 0;
  for (auto c : sampled_classes) {
    const double mass = (c == m - c ? 1.0 : 2.0) * static_cast<double>(m - 1) / static_cast<double>(c * (m - c));
    class_mass.push_back(mass);
    total_mass += mass;
  }
  const std::size_t pairs = remaining / 2;
  const double weight = total_mass / static_cast<double>(2 * pairs);

  Rng rng(seed);
  std::vector<std::size_t> perm(m);
  std::unordered_map<std::uint64_t, std::size_t> position;
  auto add = [&](std::uint64_t mask) {
    auto [it, inserted] = position.emplace(mask, out.masks.size());
    if (inserted) {
      out.masks.push_back(mask);
      out.weights.push_back(weight);
    } else {
      out.weights[it->second] += weight;
    }
  };
  for (std::size_t p = 0; p < pairs; ++p) {
    double u = rng.uniform() * total_mass;
    std::size_t k = 0;
    while (k + 1 < class_mass.size() && u >= class_mass[k]) u -= class_mass[k++];
    const std::size_t size = sampled_classes[k];
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::uint64_t mask = 0;
    for (std::size_t j = 0; j < size; ++j) {
      std::swap(perm[j], perm[j + rng.below(m - j)]);
      mask |= 1ULL << perm[j];
    }
    add(mask);
    add(full & ~mask);
  }
  return out;
}

}  // namespace

double kernel_weight(std::size_t features, std::size_t size) {
  if (size == 0 || size >= features) {
    throw Error(ErrorCode::DegenerateCoalition, "kernel weight needs 1 <= s <= M - 1 (s = " +
                                                    std::to_string(size) + ", M = " + std::to_string(features) + ")");
  }
  const double m = static_cast<double>(features);
  const double s = static_cast<double>(size);
  return (m - 1) / (binomial(features, size) * s * (m - s));
}

std::size_t default_budget(std::size_t features) {
  const std::size_t cap = 2 * features + 2048;
  if (features >= 63) return cap;
  return std::min<std::size_t>((std::size_t{1} << features) - 2, cap);
}

std::vector<double> masked_prediction(const ModelFunction& f, std::span<const double> x, const Coalition& z,
                                      const BackgroundSet& background, const FeatureGroups& groups) {
  if (z.size() != groups.size()) {
    throw Error(ErrorCode::SchemaMismatch, "coalition length " + std::to_string(z.size()) + " vs " +
                                               std::to_string(groups.size()) + " features");
  }
  CoalitionEvaluator eval(f, x, background, groups);
  std::vector<double> out(f.outputs());
  const bool all_ones = std::all_of(z.begin(), z.end(), [](bool b) { return b; });
  eval.masked([&z](std::size_t i) { return static_cast<bool>(z[i]); }, all_ones, out);
  return out;
}

std::vector<Explanation> explain_kernel(const ModelFunction& f, std::span<const double> x,
                                        const BackgroundSet& background, const FeatureGroups& groups,
                                        const KernelOptions& options) {
  const std::size_t m = groups.size();
  if (m > kMaxKernelFeatures) {
    throw Error(ErrorCode::TooManyFeatures, std::to_string(m) + " features exceed the kernel limit");
  }
  CoalitionEvaluator eval(f, x, background, groups);
  const std::size_t outputs = f.outputs();

  std::vector<double> fx(outputs), base(outputs);
  eval.at_x(fx);
  eval.masked(0, base);

  std::vector<Explanation> result(outputs);
  for (std::size_t k = 0; k < outputs; ++k) {
    result[k].intercept = base[k];
    result[k].fx = fx[k];
    result[k].phi.assign(m, 0.0);
  }
  if (m == 1) {
    for (std::size_t k = 0; k < outputs; ++k) result[k].phi[0] = fx[k] - base[k];
    for (auto& e : result) e.exact = true;
    return result;
  }

  const std::size_t budget = options.budget == 0 ? default_budget(m) : options.budget;
  const WeightedCoalitions coalitions = choose_coalitions(m, budget, options.seed);
  const std::size_t rows = coalitions.masks.size();
  if (rows < m) {
    throw Error(ErrorCode::SingularSystem, std::to_string(rows) + " distinct coalitions for " + std::to_string(m) +
                                               " features; raise the budget");
  }
  const bool exact = m < 63 && rows == (std::size_t{1} << m) - 2;

  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m));
  Eigen::VectorXd w(static_cast<Eigen::Index>(rows));
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(outputs));
  std::vector<double> out(outputs);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const std::uint64_t mask = coalitions.masks[r];
    for (std::size_t i = 0; i < m; ++i) z(ri, static_cast<Eigen::Index>(i)) = static_cast<double>((mask >> i) & 1ULL);
    w(ri) = coalitions.weights[r];
    eval.masked(mask, out);
    for (std::size_t k = 0; k < outputs; ++k) v(ri, static_cast<Eigen::Index>(k)) = out[k] - base[k];
  }

  // Minimize sum_r w_r (v_r - z_r . phi)^2 subject to sum(phi) = f(x) - phi_0,
  // via the KKT system [Z'WZ + ridge*I, 1; 1', 0].
  const auto mi = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(mi + 1, mi + 1);
  kkt.topLeftCorner(mi, mi) = z.transpose() * w.asDiagonal() * z;
  kkt.topLeftCorner(mi, mi).diagonal().array() += options.ridge;
  kkt.block(0, mi, mi, 1).setOnes();
  kkt.block(mi, 0, 1, mi).setOnes();
  Eigen::MatrixXd rhs(mi + 1, static_cast<Eigen::Index>(outputs));
  rhs.topRows(mi) = z.transpose() * w.asDiagonal() * v;
  for (std::size_t k = 0; k < outputs; ++k) rhs(mi, static_cast<Eigen::Index>(k)) = fx[k] - base[k];

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (lu.rank() < mi + 1) throw Error(ErrorCode::SingularSystem, "coalition design is rank deficient");
  const Eigen::MatrixXd solution = lu.solve(rhs);

  for (std::size_t k = 0; k < outputs; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      result[k].phi[i] = solution(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
    result[k].coalitions_used = rows;
    result[k].exact = exact;
  }
  return result;
}

std::vector<Explanation> exact_shapley(const ModelFunction& f, std::span<const double> x,
                                       const BackgroundSet& background, const FeatureGroups& groups) {
  const std::size_t m = groups.size();
  if (m > kMaxExactFeatures) {
    throw Error(ErrorCode::TooManyFeatures, std::to_string(m) + " features exceed the exact limit of " +
                                                std::to_string(kMaxExactFeatures));
  }
  CoalitionEvaluator eval(f, x, background, groups);
  const std::size_t outputs = f.outputs();
  const std::size_t subsets = std::size_t{1} << m;

  std::vector<double> value(subsets * outputs);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    eval.masked(mask, std::span<double>(value.data() + mask * outputs, outputs));
  }
  // |S|! (M - |S| - 1)! / M! = 1 / (M * C(M - 1, |S|)).
  std::vector<double> coef(m);
  for (std::size_t s = 0; s < m; ++s) coef[s] = 1.0 / (static_cast<double>(m) * binomial(m - 1, s));

  std::vector<Explanation> result(outputs);
  for (std::size_t k = 0; k < outputs; ++k) {
    result[k].intercept = value[k];
    result[k].fx = value[(subsets - 1) * outputs + k];
    result[k].phi.assign(m, 0.0);
    result[k].coalitions_used = subsets;
    result[k].exact = true;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      const double c = coef[static_cast<std::size_t>(std::popcount(mask))];
      for (std::size_t k = 0; k < outputs; ++k) {
        result[k].phi[i] += c * (value[(mask | bit) * outputs + k] - value[mask * outputs + k]);
      }
    }
  }
  return result;
}

ModelFunction interval_model(const QrfModel& model, double level) {
  return ModelFunction(4, [&model, level](std::span<const double> row, std::span<double> out) {
    const PredictionInterval pi = model.predict_interval(row, level);
    out[0] = pi.point;
    out[1] = pi.lower;
    out[2] = pi.upper;
    out[3] = pi.upper - pi.lower;
  });
}

InstanceExplanation explain_instance(const QrfModel& model, std::span<const double> x,
                                     std::span<const ExplanationTarget> targets, const BackgroundSet& background,
                                     const FeatureGroups& groups, double level, const KernelOptions& options) {
  if (x.size() != model.feature_count()) throw Error(ErrorCode::SchemaMismatch, "row width differs from the model");
  auto all = explain_kernel(interval_model(model, level), x, background, groups, options);
  for (std::size_t k = 0; k < all.size(); ++k) all[k].target = kAllTargets[k];

  InstanceExplanation out;
  const Explanation& lower = all[1];
  const Explanation& upper = all[2];
  const Explanation& width = all[3];
  Explanation via = width;
  via.intercept = upper.intercept - lower.intercept;
  via.fx = upper.fx - lower.fx;
  for (std::size_t i = 0; i < via.phi.size(); ++i) {
    via.phi[i] = upper.phi[i] - lower.phi[i];
    out.width_identity_discrepancy = std::max(out.width_identity_discrepancy, std::fabs(via.phi[i] - width.phi[i]));
  }
  out.width_via_bounds = std::move(via);
  for (auto t : targets) out.by_target[t] = all[static_cast<std::size_t>(t)];
  return out;
}

std::vector<InstanceExplanation> explain_instances(const QrfModel& model, const std::vector<std::vector<double>>& rows,
                                                   std::span<const ExplanationTarget> targets,
                                                   const BackgroundSet& background, const FeatureGroups& groups,
                                                   double level, const KernelOptions& options, unsigned workers) {
  std::vector<InstanceExplanation> out(rows.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) {
      try {
        KernelOptions opts = options;
        opts.seed = derive_seed(options.seed, k);
        out[k] = explain_instance(model, rows[k], targets, background, groups, level, opts);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(rows.size(), 1))));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<FeatureImportance> global_importance(std::span<const Explanation> explanations,
                                                 const std::vector<std::string>& feature_names) {
  if (explanations.empty()) throw Error(ErrorCode::EmptyInput, "no explanations");
  const std::size_t m = feature_names.size();
  std::vector<FeatureImportance> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = {i, feature_names[i], 0.0};
  for (const auto& e : explanations) {
    if (e.phi.size() != m) throw Error(ErrorCode::LengthMismatch, "explanations do not share the feature set");
    for (std::size_t i = 0; i < m; ++i) out[i].mean_abs_phi += std::fabs(e.phi[i]);
  }
  for (auto& fi : out) fi.mean_abs_phi /= static_cast<double>(explanations.size());
  std::stable_sort(out.begin(), out.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) { return a.mean_abs_phi > b.mean_abs_phi; });
  return out;
}

FeatureValueTable describe_rows(const FeatureEncoder& encoder, const std::vector<std::vector<double>>& rows) {
  FeatureValueTable table;
  table.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<FeatureValue> values;
    for (std::size_t g = 0; g < encoder.groups().size(); ++g) {
      values.push_back({encoder.describe(g, row), encoder.numeric_value(g, row),
                        encoder.groups()[g].kind == FeatureKind::Categorical});
    }
    table.push_back(std::move(values));
  }
  return table;
}

std::vector<SummaryRow> summary_data(std::span<const Explanation> explanations, const FeatureValueTable& values,
                                     const std::vector<std::string>& feature_names, std::size_t top_k) {
  if (explanations.size() != values.size()) {
    throw Error(ErrorCode::LengthMismatch, "explanations and feature values differ in count");
  }
  const auto importance = global_importance(explanations, feature_names);
  std::vector<SummaryRow> rows;
  const std::size_t features = std::min(top_k, importance.size());
  for (std::size_t r = 0; r < features; ++r) {
    const std::size_t i = importance[r].feature;
    for (std::size_t k = 0; k < explanations.size(); ++k) {
      if (values[k].size() != feature_names.size()) {
        throw Error(ErrorCode::LengthMismatch, "feature value row has the wrong width");
      }
      rows.push_back({k, feature_names[i], values[k][i], explanations[k].phi[i]});
    }
  }
  return rows;
}

std::vector<DependenceRow> dependence_data(std::span<const Explanation> explanations, const FeatureValueTable& values,
                                           const std::vector<std::string>& feature_names,
                                           std::string_view primary_feature, std::string_view color_feature,
                                           std::span<const std::optional<UncertaintyProfile>> profiles,
                                           std::optional<UncertaintyProfile> only) {
  if (explanations.size() != values.size()) {
    throw Error(ErrorCode::LengthMismatch, "explanations and feature values differ in count");
  }
  if (only && profiles.size() != explanations.size()) {
    throw Error(ErrorCode::LengthMismatch, "profile filter needs one profile per explanation");
  }
  auto find = [&](std::string_view name) {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw Error(ErrorCode::UnknownFeature, "no feature named '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - feature_names.begin());
  };
  const std::size_t p = find(primary_feature);
  const std::size_t c = find(color_feature);
  std::vector<DependenceRow> rows;
  for (std::size_t k = 0; k < explanations.size(); ++k) {
    if (only && profiles[k] != only) continue;
    rows.push_back({k, values[k][p], explanations[k].phi[p], values[k][c]});
  }
  return rows;
}

}  // namespace procqrf
