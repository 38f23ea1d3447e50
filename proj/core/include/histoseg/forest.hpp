#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "histoseg/metrics.hpp"

namespace histoseg {

/// Per-feature zero-mean / unit-variance transform learned on training rows.
/// Zero-variance features keep divisor 1 so they pass through centered.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;
};

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> apply_standardizer(
    const Standardizer& s, const std::vector<std::vector<double>>& rows);

/// Binary decision tree stored as a flat node array (preorder). feature == -1
/// marks a leaf carrying the class counts of its bootstrap samples.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> counts;
};

using DecisionTree = std::vector<TreeNode>;

struct ForestModel {
  int version = 1;
  std::uint64_t seed = 0;
  int n_trees = 0;
  int n_classes = 0;
  int feature_dim = 0;
  Standardizer standardizer;
  std::vector<DecisionTree> trees;
};

/// Trains n_trees CART trees on bootstrap samples with greedy Gini splits
/// over floor(sqrt(d)) candidate features per node, grown until pure or fewer
/// than 2 samples. Tree t draws its randomness from seed + t, so training is
/// deterministic and trivially parallel. The standardizer is fitted on the
/// given rows and stored in the model; predict applies it to raw rows.
ForestModel train_forest(const std::vector<std::vector<double>>& features,
                         std::span<const int> labels, int n_classes,
                         int n_trees = 1000, std::uint64_t seed = 0);

struct ForestPrediction {
  std::vector<double> probabilities;  // mean over trees of leaf frequencies
  int label = 0;                      // argmax, lowest index on ties
};

ForestPrediction predict_forest(const ForestModel& model,
                                std::span<const double> row);

std::string forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const std::string& text);

/// Cross-validation outcome. Every case is predicted exactly once, by the
/// fold that held it out.
struct CvReport {
  int folds = 0;
  int n_trees = 0;
  std::uint64_t seed = 0;
  bool stratified = true;
  std::vector<int> fold_of_case;
  std::vector<int> pooled_predictions;
  std::vector<std::vector<double>> pooled_probabilities;
  std::vector<std::vector<double>> auc_per_fold;  // [class][fold], NaN undefined
  std::vector<double> auc_mean;                   // over defined folds
  std::vector<double> auc_std;                    // sample std over folds
  double kappa = 0.0;                             // on pooled predictions
  ConfusionMatrix confusion;                      // rows = reference
};

/// Stratified k-fold cross-validation: per fold, a standardizer and forest
/// are fitted on the training folds only and applied to the held-out fold.
/// Falls back to unstratified folds (with stratified = false) when some class
/// has fewer members than folds.
CvReport stratified_5fold_cv(const std::vector<std::vector<double>>& features,
                             std::span<const int> labels, int n_classes,
                             int n_trees, std::uint64_t seed, int folds = 5);

} // namespace histoseg
