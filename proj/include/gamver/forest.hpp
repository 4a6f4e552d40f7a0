#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gamver/metrics.hpp"

// From-scratch random-forest binary classifier over the 7 similarity
// features, plus the cross-validation and evaluation protocol.

namespace gamver {

struct FeatureDataset {
  Eigen::MatrixXd features;  // rows x 7
  std::vector<int> labels;   // {0,1}
  std::vector<std::string> feature_names = featureNames();

  Eigen::Index rows() const { return features.rows(); }
};

void validateDataset(const FeatureDataset& data);

struct ForestConfig {
  int num_trees = 100;
  int max_depth = 8;
  int min_samples_leaf = 2;
  int features_per_split = 3;  // ceil(sqrt(7))
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature_index = -1;  // -1 for leaves
  double threshold = 0.0;
  int left_child = -1;   // x[f] <= threshold
  int right_child = -1;  // x[f] >  threshold
  std::vector<double> leaf_distribution;  // class frequencies; empty for internal nodes
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root
};

struct ForestModel {
  ForestConfig config;
  std::vector<std::string> feature_names;
  std::vector<DecisionTree> trees;
};

// Bootstrap sample (with replacement, same size as data) for one tree; the
// per-tree seed stream is derived from (config.seed, tree index), so earlier
// trees never change when num_trees grows.
std::vector<Eigen::Index> bootstrapIndices(const ForestConfig& config, int tree_index, Eigen::Index n);

ForestModel fit(const ForestConfig& config, const FeatureDataset& data, int jobs = 1);

double predictProba(const ForestModel& model, const Eigen::Matrix<double, 7, 1>& features);
double treeProba(const DecisionTree& tree, const Eigen::Matrix<double, 7, 1>& features);

struct FoldSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

// Folds partition the data; per-fold class counts stay within 1 of n_c/k.
std::vector<FoldSplit> stratifiedKFold(const std::vector<int>& labels, int k, std::uint64_t seed);

struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro over the two classes
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> roc_auc;  // absent when the test set is single-class
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  double precision_class0 = 0.0, recall_class0 = 0.0, f1_class0 = 0.0;
  double precision_class1 = 0.0, recall_class1 = 0.0, f1_class1 = 0.0;
  double precision_micro = 0.0, recall_micro = 0.0, f1_micro = 0.0;
};

// Thresholded confusion metrics plus rank-based ROC AUC (Mann-Whitney with
// half-credit ties).
EvalReport evaluateScores(const std::vector<int>& labels, const std::vector<double>& scores,
                          double threshold = 0.5);

std::optional<double> rocAuc(const std::vector<int>& labels, const std::vector<double>& scores);

std::string forestToJson(const ForestModel& model);
ForestModel forestFromJson(const std::string& text);

}  // namespace gamver
