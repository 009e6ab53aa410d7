#include "procqrf/qrf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

void Hyperparameters::validate() const {
  if (mtry < 1) throw Error(ErrorCode::InvalidArgument, "mtry must be >= 1");
  if (trees < 1) throw Error(ErrorCode::InvalidArgument, "trees must be >= 1");
  if (min_n < 2) throw Error(ErrorCode::InvalidArgument, "min_n must be >= 2");
}

std::size_t default_mtry(std::size_t features) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(features)))));
}

FeatureMatrix FeatureMatrix::from_dataset(const Dataset& data) {
  const std::size_t cols = data.encoder ? data.encoder->column_count()
                                        : (data.empty() ? 0 : data.instances.front().x.size());
  FeatureMatrix m(data.size(), cols);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& x = data.instances[r].x;
    if (x.size() != cols) throw Error(ErrorCode::SchemaMismatch, "instance width differs from schema");
    std::copy(x.begin(), x.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return m;
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  FeatureMatrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw Error(ErrorCode::SchemaMismatch, "ragged feature rows");
    std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return m;
}

RegressionTree::RegressionTree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> member_offsets,
                               std::vector<std::uint32_t> members, std::uint64_t seed)
    : nodes_(std::move(nodes)),
      member_offsets_(std::move(member_offsets)),
      members_(std::move(members)),
      seed_(seed) {}

std::size_t RegressionTree::leaf_of(std::span<const double> x) const noexcept {
  std::size_t node = 0;
  while (!nodes_[node].is_leaf()) {
    const TreeNode& n = nodes_[node];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes_[node].left;
}

namespace {

struct ValueTarget {
  double value;
  double target;  // centered on the node mean
};

struct Split {
  std::int32_t feature = -1;
  double threshold = 0;
  double gain = 0;
};

// Best variance-reduction split of one feature over the node samples.
// Candidate thresholds are midpoints between consecutive distinct values;
// earlier (lower) thresholds win ties.
void scan_feature(std::vector<ValueTarget>& buf, std::int32_t feature, Split& best) {
  const std::size_t n = buf.size();
  std::sort(buf.begin(), buf.end(),
            [](const ValueTarget& a, const ValueTarget& b) { return a.value < b.value; });
  double total = 0;
  for (const auto& vt : buf) total += vt.target;
  const double base = total * total / static_cast<double>(n);
  double left = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    left += buf[i].target;
    if (buf[i].value == buf[i + 1].value) continue;
    const double nl = static_cast<double>(i + 1);
    const double nr = static_cast<double>(n - i - 1);
    const double right = total - left;
    const double gain = left * left / nl + right * right / nr - base;
    if (gain > best.gain) {
      const double a = buf[i].value;
      const double b = buf[i + 1].value;
      double threshold = a + (b - a) / 2.0;
      if (!(threshold < b)) threshold = a;
      best = {feature, threshold, gain};
    }
  }
}

}  // namespace

RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> y, const Hyperparameters& hp,
                        std::uint64_t tree_seed) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "cannot fit a tree on an empty dataset");
  if (y.size() != n) throw Error(ErrorCode::LengthMismatch, "targets and features differ in length");
  if (p == 0) throw Error(ErrorCode::InvalidArgument, "feature matrix has no columns");
  if (n > UINT32_MAX) throw Error(ErrorCode::InvalidArgument, "too many training rows");
  hp.validate();
  const std::size_t mtry = std::min(hp.mtry, p);

  Rng rng(tree_seed);
  std::vector<std::uint32_t> samples(n);
  for (auto& s : samples) s = static_cast<std::uint32_t>(rng.below(n));

  std::vector<std::size_t> pool(p);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> candidates(mtry);
  std::vector<ValueTarget> buf;
  buf.reserve(n);

  struct Pending {
    std::uint32_t node;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<TreeNode> nodes(1);
  std::vector<Pending> stack{{0, 0, n}};
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    const std::size_t size = cur.end - cur.begin;
    if (size < hp.min_n) continue;

    double mean = 0;
    for (std::size_t k = cur.begin; k < cur.end; ++k) mean += y[samples[k]];
    mean /= static_cast<double>(size);
    double sse = 0;
    bool constant = true;
    const double first = y[samples[cur.begin]];
    for (std::size_t k = cur.begin; k < cur.end; ++k) {
      const double d = y[samples[k]] - mean;
      sse += d * d;
      constant = constant && y[samples[k]] == first;
    }
    if (constant) continue;

    for (std::size_t j = 0; j < mtry; ++j) {
      const std::size_t r = j + static_cast<std::size_t>(rng.below(p - j));
      std::swap(pool[j], pool[r]);
    }
    std::copy(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(mtry), candidates.begin());
    std::sort(candidates.begin(), candidates.end());

    // A split must beat rounding noise relative to the node's sum of squares.
    Split best;
    best.gain = 1e-10 * sse;
    for (std::size_t f : candidates) {
      buf.clear();
      double lo = x(samples[cur.begin], f);
      double hi = lo;
      for (std::size_t k = cur.begin; k < cur.end; ++k) {
        const double v = x(samples[k], f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        buf.push_back({v, y[samples[k]] - mean});
      }
      if (lo == hi) continue;
      scan_feature(buf, static_cast<std::int32_t>(f), best);
    }
    if (best.feature < 0) continue;

    const auto f = static_cast<std::size_t>(best.feature);
    const double threshold = best.threshold;
    auto mid = std::stable_partition(samples.begin() + static_cast<std::ptrdiff_t>(cur.begin),
                                     samples.begin() + static_cast<std::ptrdiff_t>(cur.end),
                                     [&](std::uint32_t s) { return x(s, f) <= threshold; });
    const auto split_at = static_cast<std::size_t>(mid - samples.begin());

    const auto left = static_cast<std::uint32_t>(nodes.size());
    nodes.push_back({});
    nodes.push_back({});
    TreeNode& node = nodes[cur.node];
    node.feature = best.feature;
    node.threshold = threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, split_at, cur.end});
    stack.push_back({left, cur.begin, split_at});
  }

  std::uint32_t leaves = 0;
  for (auto& node : nodes) {
    if (node.is_leaf()) node.left = leaves++;
  }

  RegressionTree shape(nodes, {}, {}, tree_seed);
  std::vector<std::uint32_t> leaf_of_obs;
  if (hp.leaf_basis == LeafBasis::FullTraining) {
    leaf_of_obs.resize(n);
    for (std::size_t i = 0; i < n; ++i) leaf_of_obs[i] = static_cast<std::uint32_t>(shape.leaf_of(x.row(i)));
  } else {
    std::sort(samples.begin(), samples.end());
  }
  std::vector<std::uint32_t> offsets(leaves + 1, 0);
  auto member_count = hp.leaf_basis == LeafBasis::FullTraining ? n : samples.size();
  auto obs_at = [&](std::size_t k) -> std::uint32_t {
    return hp.leaf_basis == LeafBasis::FullTraining ? static_cast<std::uint32_t>(k) : samples[k];
  };
  auto leaf_at = [&](std::size_t k) -> std::uint32_t {
    return hp.leaf_basis == LeafBasis::FullTraining
               ? leaf_of_obs[k]
               : static_cast<std::uint32_t>(shape.leaf_of(x.row(samples[k])));
  };
  std::vector<std::uint32_t> leaf_ids(member_count);
  for (std::size_t k = 0; k < member_count; ++k) {
    leaf_ids[k] = leaf_at(k);
    ++offsets[leaf_ids[k] + 1];
  }
  for (std::size_t l = 0; l < leaves; ++l) offsets[l + 1] += offsets[l];
  std::vector<std::uint32_t> members(member_count);
  std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t k = 0; k < member_count; ++k) members[cursor[leaf_ids[k]]++] = obs_at(k);

  return RegressionTree(std::move(nodes), std::move(offsets), std::move(members), tree_seed);
}

QrfModel::QrfModel(std::vector<RegressionTree> forest, std::vector<double> train_targets, Hyperparameters hp,
                   std::size_t feature_count, std::string schema_hash)
    : forest_(std::move(forest)),
      targets_(std::move(train_targets)),
      hp_(hp),
      features_(feature_count),
      schema_hash_(std::move(schema_hash)) {
  if (forest_.empty()) throw Error(ErrorCode::InvalidArgument, "forest has no trees");
  if (targets_.empty()) throw Error(ErrorCode::EmptyDataset, "no training targets");
  for (const auto& tree : forest_) {
    for (std::size_t l = 0; l < tree.leaf_count(); ++l) {
      if (tree.leaf_members(l).empty()) throw Error(ErrorCode::FormatError, "tree has an empty leaf");
      for (auto i : tree.leaf_members(l)) {
        if (i >= targets_.size()) throw Error(ErrorCode::FormatError, "leaf member index out of range");
      }
    }
  }
  index_targets();
}

void QrfModel::index_targets() {
  std::vector<std::uint32_t> order(targets_.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return targets_[a] < targets_[b]; });
  rank_.assign(targets_.size(), 0);
  sorted_targets_.resize(targets_.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank_[order[r]] = static_cast<std::uint32_t>(r);
    sorted_targets_[r] = targets_[order[r]];
  }
}

QrfModel QrfModel::train(const Dataset& train, Hyperparameters hp, unsigned workers) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training dataset is empty");
  const FeatureMatrix x = FeatureMatrix::from_dataset(train);
  const std::vector<double> y = train.targets();
  return QrfModel::train(x, y, hp, workers, train.encoder ? train.encoder->hash() : std::string());
}

QrfModel QrfModel::train(const FeatureMatrix& x, std::span<const double> y, Hyperparameters hp,
                         unsigned workers, std::string schema_hash) {
  hp.validate();
  if (x.rows() == 0) throw Error(ErrorCode::EmptyDataset, "training dataset is empty");
  if (hp.mtry > x.cols()) {
    std::cerr << "warning: mtry " << hp.mtry << " exceeds feature count " << x.cols()
              << "; clamped\n";
    hp.mtry = x.cols();
  }

  std::vector<RegressionTree> forest(hp.trees);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t t = next++; t < hp.trees; t = next++) {
      try {
        forest[t] = fit_tree(x, y, hp, derive_seed(hp.seed, t));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(hp.trees)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return QrfModel(std::move(forest), std::vector<double>(y.begin(), y.end()), hp, x.cols(),
                  std::move(schema_hash));
}

void QrfModel::check_width(std::span<const double> x) const {
  if (x.size() != features_) {
    throw Error(ErrorCode::SchemaMismatch, "instance has " + std::to_string(x.size()) + " features, model expects " +
                                               std::to_string(features_));
  }
}

std::vector<double> QrfModel::forest_weights(std::span<const double> x) const {
  check_width(x);
  std::vector<double> w(targets_.size(), 0.0);
  const double k = static_cast<double>(forest_.size());
  for (const auto& tree : forest_) {
    const auto members = tree.leaf_members(tree.leaf_of(x));
    const double c = 1.0 / (k * static_cast<double>(members.size()));
    for (auto i : members) w[i] += c;
  }
  return w;
}

SparseWeights QrfModel::sparse_weights(std::span<const double> x) const {
  check_width(x);
  // Accumulates in the same (tree, member) order as forest_weights so both
  // yield bit-identical weights.
  thread_local std::vector<double> scratch;
  if (scratch.size() < targets_.size()) scratch.assign(targets_.size(), 0.0);
  SparseWeights out;
  const double k = static_cast<double>(forest_.size());
  for (const auto& tree : forest_) {
    const auto members = tree.leaf_members(tree.leaf_of(x));
    const double c = 1.0 / (k * static_cast<double>(members.size()));
    for (auto i : members) {
      if (scratch[i] == 0.0) out.index.push_back(i);
      scratch[i] += c;
    }
  }
  std::sort(out.index.begin(), out.index.end());
  out.weight.reserve(out.index.size());
  for (auto i : out.index) {
    out.weight.push_back(scratch[i]);
    scratch[i] = 0.0;
  }
  return out;
}

std::vector<QrfModel::RankedWeight> QrfModel::ranked(const SparseWeights& w) const {
  std::vector<RankedWeight> r(w.index.size());
  for (std::size_t k = 0; k < w.index.size(); ++k) r[k] = {rank_[w.index[k]], w.weight[k]};
  std::sort(r.begin(), r.end(), [](const RankedWeight& a, const RankedWeight& b) { return a.rank < b.rank; });
  return r;
}

double QrfModel::quantile_from_ranked(const std::vector<RankedWeight>& r, double alpha) const {
  double cumulative = 0;
  std::size_t i = 0;
  while (i < r.size()) {
    const double value = sorted_targets_[r[i].rank];
    cumulative += r[i].weight;
    std::size_t j = i + 1;
    for (; j < r.size() && sorted_targets_[r[j].rank] == value; ++j) cumulative += r[j].weight;
    if (cumulative >= alpha - kCdfTolerance) return value;
    i = j;
  }
  return sorted_targets_[r.back().rank];
}

double QrfModel::conditional_cdf(std::span<const double> x, double y) const {
  const auto r = ranked(sparse_weights(x));
  double cumulative = 0;
  for (const auto& rw : r) {
    if (sorted_targets_[rw.rank] > y) break;
    cumulative += rw.weight;
  }
  return cumulative;
}

double QrfModel::quantile_at(std::span<const double> x, double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  return quantile_from_ranked(ranked(sparse_weights(x)), alpha);
}

double QrfModel::predict_mean(std::span<const double> x) const {
  const SparseWeights w = sparse_weights(x);
  double mean = 0;
  for (std::size_t k = 0; k < w.index.size(); ++k) mean += w.weight[k] * targets_[w.index[k]];
  return mean;
}

PredictionInterval QrfModel::predict_interval(std::span<const double> x, double level) const {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  const double alpha = (1.0 - level) / 2.0;
  const SparseWeights w = sparse_weights(x);
  PredictionInterval pi;
  pi.level = level;
  for (std::size_t k = 0; k < w.index.size(); ++k) pi.point += w.weight[k] * targets_[w.index[k]];
  const auto r = ranked(w);
  pi.lower = quantile_from_ranked(r, alpha);
  pi.upper = quantile_from_ranked(r, 1.0 - alpha);
  return pi;
}

std::string QrfModel::to_json() const {
  nlohmann::json doc;
  doc["version"] = kModelFormatVersion;
  doc["hyperparameters"] = {
      {"mtry", hp_.mtry},
      {"trees", hp_.trees},
      {"min_n", hp_.min_n},
      {"seed", hp_.seed},
      {"leaf_basis", hp_.leaf_basis == LeafBasis::FullTraining ? "full" : "bootstrap"},
      {"feature_count", features_},
  };
  doc["schema_hash"] = schema_hash_;
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : forest_) {
    std::vector<std::int32_t> feature;
    std::vector<double> threshold;
    std::vector<std::uint32_t> left, right;
    for (const auto& n : tree.nodes()) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
    }
    trees.push_back({{"seed", tree.seed()},
                     {"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"leaf_offsets", tree.member_offsets()},
                     {"leaf_members", tree.members()}});
  }
  doc["trees"] = std::move(trees);
  doc["train_targets"] = targets_;
  return doc.dump();
}

QrfModel QrfModel::from_json(std::string_view text, std::string_view expected_schema_hash) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("model file: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::FormatError, "unsupported model version " + doc.at("version").dump());
    }
    const std::string hash = doc.at("schema_hash").get<std::string>();
    if (!expected_schema_hash.empty() && hash != expected_schema_hash) {
      throw Error(ErrorCode::SchemaMismatch, "model schema hash " + hash + " does not match " +
                                                 std::string(expected_schema_hash));
    }
    const auto& h = doc.at("hyperparameters");
    Hyperparameters hp;
    hp.mtry = h.at("mtry").get<std::size_t>();
    hp.trees = h.at("trees").get<std::size_t>();
    hp.min_n = h.at("min_n").get<std::size_t>();
    hp.seed = h.at("seed").get<std::uint64_t>();
    hp.leaf_basis = h.at("leaf_basis").get<std::string>() == "bootstrap" ? LeafBasis::Bootstrap
                                                                          : LeafBasis::FullTraining;
    hp.validate();
    const auto features = h.at("feature_count").get<std::size_t>();

    std::vector<double> targets = doc.at("train_targets").get<std::vector<double>>();
    std::vector<RegressionTree> forest;
    for (const auto& t : doc.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<std::uint32_t>>();
      const auto right = t.at("right").get<std::vector<std::uint32_t>>();
      auto offsets = t.at("leaf_offsets").get<std::vector<std::uint32_t>>();
      auto members = t.at("leaf_members").get<std::vector<std::uint32_t>>();
      const std::size_t count = feature.size();
      if (count == 0 || threshold.size() != count || left.size() != count || right.size() != count) {
        throw Error(ErrorCode::FormatError, "tree node arrays differ in length");
      }
      if (offsets.empty() || offsets.front() != 0 || offsets.back() != members.size() ||
          !std::is_sorted(offsets.begin(), offsets.end())) {
        throw Error(ErrorCode::FormatError, "inconsistent leaf offsets");
      }
      const std::size_t leaves = offsets.size() - 1;
      std::vector<TreeNode> nodes(count);
      for (std::size_t i = 0; i < count; ++i) {
        nodes[i] = {feature[i], threshold[i], left[i], right[i]};
        if (feature[i] >= 0) {
          if (static_cast<std::size_t>(feature[i]) >= features || left[i] <= i || right[i] <= i ||
              left[i] >= count || right[i] >= count) {
            throw Error(ErrorCode::FormatError, "invalid split node");
          }
        } else if (left[i] >= leaves) {
          throw Error(ErrorCode::FormatError, "leaf id out of range");
        }
      }
      forest.emplace_back(std::move(nodes), std::move(offsets), std::move(members),
                          t.at("seed").get<std::uint64_t>());
    }
    if (forest.size() != hp.trees) throw Error(ErrorCode::FormatError, "tree count differs from hyperparameters");
    return QrfModel(std::move(forest), std::move(targets), hp, features, hash);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("model file: ") + e.what());
  }
}

}  // namespace procqrf
