#pragma once

// Shapley attributions over original (pre-encoding) features.
//
// A coalition z over M original features is evaluated by marginal
// imputation: for each background row b, the hybrid row takes the columns
// of features with z_i = 1 from x and all others from b, and the model
// output is averaged over the hybrids. KernelSHAP fits
//   g(z) = phi_0 + sum_i phi_i z_i
// by kernel-weighted least squares with g(0) = phi_0 and g(1) = f(x)
// imposed as equality constraints; exact_shapley enumerates all subsets.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "procqrf/dataset.hpp"
#include "procqrf/profiles.hpp"
#include "procqrf/qrf.hpp"

namespace procqrf {

// Model with a fixed number of outputs per row. Several outputs share one
// coalition design, which keeps their attributions mutually consistent.
class ModelFunction {
 public:
  using Fn = std::function<void(std::span<const double> row, std::span<double> out)>;

  ModelFunction(std::size_t outputs, Fn fn) : outputs_(outputs), fn_(std::move(fn)) {}
  static ModelFunction scalar(std::function<double(std::span<const double>)> f);

  std::size_t outputs() const noexcept { return outputs_; }
  void operator()(std::span<const double> row, std::span<double> out) const { fn_(row, out); }

 private:
  std::size_t outputs_;
  Fn fn_;
};

// Encoded columns of each original feature.
using FeatureGroups = std::vector<std::vector<std::size_t>>;
FeatureGroups feature_groups(const FeatureEncoder& encoder);

using Coalition = std::vector<bool>;

struct BackgroundSet {
  std::vector<std::vector<double>> rows;
  std::size_t size() const noexcept { return rows.size(); }
};

// Uniform sample of `size` training rows without replacement (all rows when
// the dataset is smaller), kept in dataset order.
BackgroundSet sample_background(const Dataset& train, std::size_t size, std::uint64_t seed);

enum class ExplanationTarget { PointPrediction, LowerBoundary, UpperBoundary, IntervalWidth };

inline constexpr std::array<ExplanationTarget, 4> kAllTargets{
    ExplanationTarget::PointPrediction, ExplanationTarget::LowerBoundary, ExplanationTarget::UpperBoundary,
    ExplanationTarget::IntervalWidth};

std::string_view to_string(ExplanationTarget t);
ExplanationTarget parse_explanation_target(std::string_view name);

struct Explanation {
  ExplanationTarget target = ExplanationTarget::PointPrediction;
  double intercept = 0;     // phi_0: mean output over the background
  std::vector<double> phi;  // one per original feature
  double fx = 0;            // output at x
  std::size_t coalitions_used = 0;
  bool exact = false;

  double local_accuracy_gap() const;  // |phi_0 + sum(phi) - fx|
};

// (M - 1) / (C(M, s) * s * (M - s)) for 1 <= s <= M - 1.
double kernel_weight(std::size_t features, std::size_t size);

// Mean model output over the background hybrids; the all-ones coalition
// returns f(x) itself.
std::vector<double> masked_prediction(const ModelFunction& f, std::span<const double> x, const Coalition& z,
                                      const BackgroundSet& background, const FeatureGroups& groups);

struct KernelOptions {
  // Proper coalitions to evaluate; 0 selects min(2^M - 2, 2M + 2048).
  std::size_t budget = 0;
  std::uint64_t seed = 7;
  double ridge = 1e-10;
};

std::size_t default_budget(std::size_t features);

// One explanation per model output.
std::vector<Explanation> explain_kernel(const ModelFunction& f, std::span<const double> x,
                                        const BackgroundSet& background, const FeatureGroups& groups,
                                        const KernelOptions& options = {});

inline constexpr std::size_t kMaxExactFeatures = 20;

std::vector<Explanation> exact_shapley(const ModelFunction& f, std::span<const double> x,
                                       const BackgroundSet& background, const FeatureGroups& groups);

// Outputs (point, lower, upper, width) of a QRF at the given interval level.
ModelFunction interval_model(const QrfModel& model, double level);

struct InstanceExplanation {
  std::map<ExplanationTarget, Explanation> by_target;
  // Width attributions rebuilt as phi_upper - phi_lower (and the matching
  // intercept), with their largest deviation from the direct width fit.
  std::optional<Explanation> width_via_bounds;
  double width_identity_discrepancy = 0;
};

InstanceExplanation explain_instance(const QrfModel& model, std::span<const double> x,
                                     std::span<const ExplanationTarget> targets, const BackgroundSet& background,
                                     const FeatureGroups& groups, double level, const KernelOptions& options);

// Explains rows independently on up to `workers` threads; instance k uses
// seed derive_seed(options.seed, k). Results are in input order.
std::vector<InstanceExplanation> explain_instances(const QrfModel& model, const std::vector<std::vector<double>>& rows,
                                                   std::span<const ExplanationTarget> targets,
                                                   const BackgroundSet& background, const FeatureGroups& groups,
                                                   double level, const KernelOptions& options, unsigned workers = 1);

struct FeatureImportance {
  std::size_t feature = 0;
  std::string name;
  double mean_abs_phi = 0;
};

// Mean |phi_i| over explanations, sorted descending (ties by feature index).
std::vector<FeatureImportance> global_importance(std::span<const Explanation> explanations,
                                                 const std::vector<std::string>& feature_names);

// Original feature value of an instance: label for categorical features,
// number for numeric ones.
struct FeatureValue {
  std::string label;
  double numeric = 0;
  bool categorical = false;
};
using FeatureValueTable = std::vector<std::vector<FeatureValue>>;  // [instance][feature]

FeatureValueTable describe_rows(const FeatureEncoder& encoder, const std::vector<std::vector<double>>& rows);

struct SummaryRow {
  std::size_t instance = 0;
  std::string feature;
  FeatureValue value;
  double phi = 0;
};

// Long format, features in global-importance order (top_k of them), then
// instances in input order.
std::vector<SummaryRow> summary_data(std::span<const Explanation> explanations, const FeatureValueTable& values,
                                     const std::vector<std::string>& feature_names, std::size_t top_k = 10);

struct DependenceRow {
  std::size_t instance = 0;
  FeatureValue primary;
  double phi = 0;
  FeatureValue color;
};

// Optional profile filter: keep instance k only when profiles[k] equals it.
std::vector<DependenceRow> dependence_data(std::span<const Explanation> explanations, const FeatureValueTable& values,
                                           const std::vector<std::string>& feature_names,
                                           std::string_view primary_feature, std::string_view color_feature,
                                           std::span<const std::optional<UncertaintyProfile>> profiles = {},
                                           std::optional<UncertaintyProfile> only = std::nullopt);

}  // namespace procqrf
