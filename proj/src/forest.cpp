#include "gamver/forest.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "gamver/errors.hpp"
#include "gamver/parallel.hpp"
#include "gamver/rng.hpp"

namespace gamver {

namespace {

constexpr int kNumFeatures = 7;

double gini(long long c0, long long c1) {
  const double n = static_cast<double>(c0 + c1);
  if (n == 0.0) return 0.0;
  const double p0 = static_cast<double>(c0) / n;
  const double p1 = static_cast<double>(c1) / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct TreeBuilder {
  const ForestConfig& config;
  const FeatureDataset& data;
  Rng& rng;
  DecisionTree tree;

  int makeLeaf(long long c0, long long c1) {
    TreeNode node;
    const double n = static_cast<double>(c0 + c1);
    node.leaf_distribution = {static_cast<double>(c0) / n, static_cast<double>(c1) / n};
    tree.nodes.push_back(node);
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  // features_per_split distinct feature indices, returned in ascending order
  // so the lowest-index split wins ties.
  std::vector<int> sampleFeatures() {
    std::vector<int> all(kNumFeatures);
    std::iota(all.begin(), all.end(), 0);
    const int m = std::min(config.features_per_split, kNumFeatures);
    for (int i = 0; i < m; ++i) {
      const auto j = static_cast<std::size_t>(uniformInt(rng, static_cast<std::uint64_t>(kNumFeatures - i))) + static_cast<std::size_t>(i);
      std::swap(all[static_cast<std::size_t>(i)], all[j]);
    }
    std::vector<int> chosen(all.begin(), all.begin() + m);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  int build(std::vector<Eigen::Index>& indices, int depth) {
    long long c0 = 0, c1 = 0;
    for (const auto idx : indices) (data.labels[static_cast<std::size_t>(idx)] == 0 ? c0 : c1)++;
    const long long n = c0 + c1;
    if (c0 == 0 || c1 == 0 || depth >= config.max_depth ||
        n < 2 * static_cast<long long>(config.min_samples_leaf)) {
      return makeLeaf(c0, c1);
    }

    const double parent_gini = gini(c0, c1);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    const std::vector<int> candidates = sampleFeatures();

    std::vector<std::pair<double, int>> column(indices.size());
    for (const int f : candidates) {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto idx = indices[i];
        column[i] = {data.features(idx, f), data.labels[static_cast<std::size_t>(idx)]};
      }
      std::sort(column.begin(), column.end());
      long long l0 = 0, l1 = 0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        (column[i].second == 0 ? l0 : l1)++;
        if (column[i].first == column[i + 1].first) continue;  // no boundary here
        const long long nl = l0 + l1, nr = n - nl;
        if (nl < config.min_samples_leaf || nr < config.min_samples_leaf) continue;
        const double gain = parent_gini - (static_cast<double>(nl) / static_cast<double>(n)) * gini(l0, l1) -
                            (static_cast<double>(nr) / static_cast<double>(n)) * gini(c0 - l0, c1 - l1);
        // Strict improvement keeps the first (lowest feature, lowest
        // threshold) candidate on ties.
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (column[i].first + column[i + 1].first);
        }
      }
    }

    if (best_feature < 0 || best_gain <= 0.0) return makeLeaf(c0, c1);

    std::vector<Eigen::Index> left, right;
    for (const auto idx : indices) {
      (data.features(idx, best_feature) <= best_threshold ? left : right).push_back(idx);
    }
    indices.clear();
    indices.shrink_to_fit();

    TreeNode node;
    node.feature_index = best_feature;
    node.threshold = best_threshold;
    tree.nodes.push_back(node);
    const int self = static_cast<int>(tree.nodes.size()) - 1;
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    tree.nodes[static_cast<std::size_t>(self)].left_child = l;
    tree.nodes[static_cast<std::size_t>(self)].right_child = r;
    return self;
  }
};

DecisionTree buildTree(const ForestConfig& config, const FeatureDataset& data, int tree_index) {
  Rng rng(mixSeed(config.seed, static_cast<std::uint64_t>(tree_index)));
  std::vector<Eigen::Index> indices(static_cast<std::size_t>(data.rows()));
  for (auto& idx : indices)
    idx = static_cast<Eigen::Index>(uniformInt(rng, static_cast<std::uint64_t>(data.rows())));
  TreeBuilder builder{config, data, rng, {}};
  builder.build(indices, 0);
  return std::move(builder.tree);
}

}  // namespace

void validateDataset(const FeatureDataset& data) {
  if (data.features.rows() == 0) throw ValidationError("FeatureDataset: empty");
  if (data.features.cols() != kNumFeatures)
    throw ValidationError("FeatureDataset: expected 7 feature columns");
  if (static_cast<std::size_t>(data.features.rows()) != data.labels.size())
    throw ValidationError("FeatureDataset: features/labels size mismatch");
  if (!data.features.allFinite()) throw ValidationError("FeatureDataset: NaN feature");
  long long c0 = 0, c1 = 0;
  for (const int y : data.labels) {
    if (y != 0 && y != 1) throw ValidationError("FeatureDataset: label must be 0 or 1");
    (y == 0 ? c0 : c1)++;
  }
  if (c0 == 0 || c1 == 0) throw DegenerateDataError("FeatureDataset: need both labels present");
}

std::vector<Eigen::Index> bootstrapIndices(const ForestConfig& config, int tree_index, Eigen::Index n) {
  Rng rng(mixSeed(config.seed, static_cast<std::uint64_t>(tree_index)));
  std::vector<Eigen::Index> indices(static_cast<std::size_t>(n));
  for (auto& idx : indices) idx = static_cast<Eigen::Index>(uniformInt(rng, static_cast<std::uint64_t>(n)));
  return indices;
}

ForestModel fit(const ForestConfig& config, const FeatureDataset& data, int jobs) {
  if (config.num_trees < 1 || config.max_depth < 1 || config.min_samples_leaf < 1 ||
      config.features_per_split < 1)
    throw ValidationError("ForestConfig: all counts must be >= 1");
  validateDataset(data);
  ForestModel model;
  model.config = config;
  model.feature_names = data.feature_names;
  model.trees.resize(static_cast<std::size_t>(config.num_trees));
  parallelFor(config.num_trees, jobs,
              [&](int t) { model.trees[static_cast<std::size_t>(t)] = buildTree(config, data, t); });
  return model;
}

double treeProba(const DecisionTree& tree, const Eigen::Matrix<double, 7, 1>& features) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature_index >= 0) {
    const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = (features(nd.feature_index) <= nd.threshold) ? nd.left_child : nd.right_child;
  }
  return tree.nodes[static_cast<std::size_t>(node)].leaf_distribution[1];
}

double predictProba(const ForestModel& model, const Eigen::Matrix<double, 7, 1>& features) {
  double sum = 0.0;
  for (const auto& tree : model.trees) sum += treeProba(tree, features);
  return sum / static_cast<double>(model.trees.size());
}

std::vector<FoldSplit> stratifiedKFold(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("stratifiedKFold: k must be >= 2");
  std::vector<std::vector<Eigen::Index>> by_class(2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("stratifiedKFold: label must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  for (const auto& cls : by_class)
    if (cls.size() < static_cast<std::size_t>(k))
      throw DegenerateDataError("stratifiedKFold: a class has fewer members than k");

  Rng rng(mixSeed(seed, 0x6b666f6cULL));  // dedicated k-fold stream
  std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
  // Extras (class size mod k) go to the currently least-loaded folds so the
  // fold sizes stay within one of each other.
  std::vector<int> extra_load(static_cast<std::size_t>(k), 0);
  for (auto& members : by_class) {
    shuffleInPlace(members, rng);
    const std::size_t base = members.size() / static_cast<std::size_t>(k);
    const int extras = static_cast<int>(members.size() % static_cast<std::size_t>(k));
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return extra_load[static_cast<std::size_t>(a)] < extra_load[static_cast<std::size_t>(b)]; });
    std::vector<bool> gets_extra(static_cast<std::size_t>(k), false);
    for (int e = 0; e < extras; ++e) {
      gets_extra[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])] = true;
      extra_load[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])]++;
    }
    std::size_t cursor = 0;
    for (int f = 0; f < k; ++f) {
      const std::size_t take = base + (gets_extra[static_cast<std::size_t>(f)] ? 1 : 0);
      for (std::size_t i = 0; i < take; ++i) folds[static_cast<std::size_t>(f)].push_back(members[cursor++]);
    }
  }

  std::vector<FoldSplit> splits(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& split = splits[static_cast<std::size_t>(f)];
    split.test = folds[static_cast<std::size_t>(f)];
    std::sort(split.test.begin(), split.test.end());
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      split.train.insert(split.train.end(), folds[static_cast<std::size_t>(g)].begin(),
                         folds[static_cast<std::size_t>(g)].end());
    }
    std::sort(split.train.begin(), split.train.end());
  }
  return splits;
}

std::optional<double> rocAuc(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size() || labels.empty())
    throw ValidationError("rocAuc: empty or mismatched inputs");
  long long pos = 0, neg = 0;
  for (const int y : labels) (y == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled average ranks stay integral, so the numerator is exact and the
  // rank formula matches pairwise counting bit-for-bit.
  long long doubled_rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const long long doubled_avg_rank = static_cast<long long>(i + 1) + static_cast<long long>(j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) doubled_rank_sum_pos += doubled_avg_rank;
    i = j + 1;
  }
  const long long numerator = doubled_rank_sum_pos - pos * (pos + 1);
  return static_cast<double>(numerator) / static_cast<double>(2 * pos * neg);
}

namespace {

struct ClassStats {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

ClassStats classStats(long long tp, long long fp, long long fn) {
  ClassStats s;
  s.precision = (tp + fp == 0) ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = (tp + fn == 0) ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = (s.precision + s.recall == 0.0) ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace

EvalReport evaluateScores(const std::vector<int>& labels, const std::vector<double>& scores,
                          double threshold) {
  if (labels.size() != scores.size() || labels.empty())
    throw ValidationError("evaluateScores: empty or mismatched inputs");
  EvalReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? r.tp : r.fn)++;
    } else {
      (predicted ? r.fp : r.tn)++;
    }
  }
  const double n = static_cast<double>(labels.size());
  r.accuracy = static_cast<double>(r.tp + r.tn) / n;
  const ClassStats c1 = classStats(r.tp, r.fp, r.fn);
  const ClassStats c0 = classStats(r.tn, r.fn, r.fp);
  r.precision_class1 = c1.precision;
  r.recall_class1 = c1.recall;
  r.f1_class1 = c1.f1;
  r.precision_class0 = c0.precision;
  r.recall_class0 = c0.recall;
  r.f1_class0 = c0.f1;
  r.precision = 0.5 * (c0.precision + c1.precision);
  r.recall = 0.5 * (c0.recall + c1.recall);
  r.f1 = 0.5 * (c0.f1 + c1.f1);
  // Binary single-label micro-averaged P/R/F1 all equal accuracy.
  r.precision_micro = r.accuracy;
  r.recall_micro = r.accuracy;
  r.f1_micro = r.accuracy;
  r.roc_auc = rocAuc(labels, scores);
  return r;
}

std::string forestToJson(const ForestModel& model) {
  nlohmann::json j;
  j["schemaVersion"] = 1;
  j["kind"] = "forest";
  j["config"] = {{"numTrees", model.config.num_trees},
                 {"maxDepth", model.config.max_depth},
                 {"minSamplesLeaf", model.config.min_samples_leaf},
                 {"featuresPerSplit", model.config.features_per_split},
                 {"seed", model.config.seed}};
  j["featureNames"] = model.feature_names;
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : tree.nodes) {
      nodes.push_back({{"featureIndex", node.feature_index},
                       {"threshold", node.threshold},
                       {"leftChild", node.left_child},
                       {"rightChild", node.right_child},
                       {"leafDistribution", node.leaf_distribution}});
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump(2) + "\n";
}

ForestModel forestFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("forestFromJson: " + std::string(e.what()));
  }
  ForestModel model;
  const auto& c = j.at("config");
  model.config.num_trees = c.at("numTrees").get<int>();
  model.config.max_depth = c.at("maxDepth").get<int>();
  model.config.min_samples_leaf = c.at("minSamplesLeaf").get<int>();
  model.config.features_per_split = c.at("featuresPerSplit").get<int>();
  model.config.seed = c.at("seed").get<std::uint64_t>();
  model.feature_names = j.at("featureNames").get<std::vector<std::string>>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree tree;
    for (const auto& nj : tj) {
      TreeNode node;
      node.feature_index = nj.at("featureIndex").get<int>();
      node.threshold = nj.at("threshold").get<double>();
      node.left_child = nj.at("leftChild").get<int>();
      node.right_child = nj.at("rightChild").get<int>();
      node.leaf_distribution = nj.at("leafDistribution").get<std::vector<double>>();
      tree.nodes.push_back(std::move(node));
    }
    if (tree.nodes.empty()) throw ValidationError("forestFromJson: empty tree");
    model.trees.push_back(std::move(tree));
  }
  if (model.trees.empty()) throw ValidationError("forestFromJson: no trees");
  return model;
}

}  // namespace gamver
