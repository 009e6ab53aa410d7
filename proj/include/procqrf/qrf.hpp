#pragma once

// Quantile Regression Forest: CART regression trees grown on bootstrap
// resamples, with leaf membership of the training observations retained so
// every query is answered through the averaged observation weights
//
//   w_i(x) = 1/k * sum_t 1{X_i in leaf_t(x)} / |leaf_t(x)|.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "procqrf/dataset.hpp"

namespace procqrf {

enum class LeafBasis {
  // Leaf members are all n training observations routed through the tree.
  FullTraining,
  // Leaf members are the bootstrap draws (with multiplicity) of the tree.
  Bootstrap,
};

struct Hyperparameters {
  std::size_t mtry = 70;
  std::size_t trees = 100;
  std::size_t min_n = 20;
  std::uint64_t seed = 7;
  LeafBasis leaf_basis = LeafBasis::FullTraining;

  void validate() const;  // mtry >= 1, trees >= 1, min_n >= 2
  bool operator==(const Hyperparameters&) const = default;
};

// floor(sqrt(p)), at least 1.
std::size_t default_mtry(std::size_t features);

// Row-major dense matrix of encoded features.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  static FeatureMatrix from_dataset(const Dataset& data);
  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct TreeNode {
  // -1 marks a leaf; `left` then holds the leaf id.
  std::int32_t feature = -1;
  double threshold = 0;  // x[feature] <= threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  RegressionTree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> member_offsets,
                 std::vector<std::uint32_t> members, std::uint64_t seed);

  std::size_t leaf_of(std::span<const double> x) const noexcept;
  std::span<const std::uint32_t> leaf_members(std::size_t leaf) const noexcept {
    return {members_.data() + member_offsets_[leaf], member_offsets_[leaf + 1] - member_offsets_[leaf]};
  }
  std::size_t leaf_count() const noexcept { return member_offsets_.empty() ? 0 : member_offsets_.size() - 1; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<std::uint32_t>& member_offsets() const noexcept { return member_offsets_; }
  const std::vector<std::uint32_t>& members() const noexcept { return members_; }
  std::uint64_t seed() const noexcept { return seed_; }

  bool operator==(const RegressionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> member_offsets_;
  std::vector<std::uint32_t> members_;
  std::uint64_t seed_ = 0;
};

// Grows one tree. `hp.mtry` is clamped to the column count; leaf members
// follow `hp.leaf_basis`.
RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> y, const Hyperparameters& hp,
                        std::uint64_t tree_seed);

// Observation weights restricted to their support, ordered by index.
struct SparseWeights {
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
};

inline constexpr double kDefaultRwidthEpsilon = 1e-6;

struct PredictionInterval {
  double lower = 0;
  double upper = 0;
  double point = 0;
  double level = 0;

  double width() const noexcept { return upper - lower; }
  // (upper - lower) / point; empty when point <= epsilon.
  std::optional<double> rwidth(double epsilon = kDefaultRwidthEpsilon) const noexcept {
    if (!(point > epsilon)) return std::nullopt;
    return width() / point;
  }
};

// F(y) >= alpha is tested as F(y) >= alpha - kCdfTolerance so that sums of
// weights such as 19 * (1/20) still reach 0.95.
inline constexpr double kCdfTolerance = 1e-12;

class QrfModel {
 public:
  QrfModel() = default;

  // Trees are fitted on up to `workers` threads; the result does not depend
  // on the worker count.
  static QrfModel train(const Dataset& train, Hyperparameters hp, unsigned workers = 1);
  static QrfModel train(const FeatureMatrix& x, std::span<const double> y, Hyperparameters hp,
                        unsigned workers = 1, std::string schema_hash = {});
  // Assembles a model from existing trees (persistence, tests).
  QrfModel(std::vector<RegressionTree> forest, std::vector<double> train_targets, Hyperparameters hp,
           std::size_t feature_count, std::string schema_hash = {});

  std::vector<double> forest_weights(std::span<const double> x) const;
  SparseWeights sparse_weights(std::span<const double> x) const;
  double conditional_cdf(std::span<const double> x, double y) const;
  double quantile_at(std::span<const double> x, double alpha) const;
  double predict_mean(std::span<const double> x) const;
  PredictionInterval predict_interval(std::span<const double> x, double level) const;

  const std::vector<RegressionTree>& forest() const noexcept { return forest_; }
  const std::vector<double>& train_targets() const noexcept { return targets_; }
  const Hyperparameters& hyperparameters() const noexcept { return hp_; }
  std::size_t feature_count() const noexcept { return features_; }
  const std::string& schema_hash() const noexcept { return schema_hash_; }

  // Versioned JSON: {version, hyperparameters, schema_hash, trees[], train_targets[]}.
  std::string to_json() const;
  // Throws SchemaMismatch when `expected_schema_hash` is non-empty and differs.
  static QrfModel from_json(std::string_view text, std::string_view expected_schema_hash = {});

 private:
  void check_width(std::span<const double> x) const;  // throws SchemaMismatch
  struct RankedWeight {
    std::uint32_t rank;
    double weight;
  };
  std::vector<RankedWeight> ranked(const SparseWeights& w) const;
  double quantile_from_ranked(const std::vector<RankedWeight>& r, double alpha) const;
  void index_targets();

  std::vector<RegressionTree> forest_;
  std::vector<double> targets_;
  Hyperparameters hp_;
  std::size_t features_ = 0;
  std::string schema_hash_;
  // rank_[i]: position of observation i in the (target, index) ascending order.
  std::vector<std::uint32_t> rank_;
  std::vector<double> sorted_targets_;
};

inline constexpr int kModelFormatVersion = 1;

}  // namespace procqrf
