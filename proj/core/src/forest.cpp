#include "histoseg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "histoseg/error.hpp"
#include "histoseg/rng.hpp"

namespace histoseg {

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) {
    raise(ErrorKind::InvalidInput, "standardizer needs at least one row");
  }
  const std::size_t dim = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != dim) {
      raise(ErrorKind::InvalidInput, "feature rows have inconsistent widths");
    }
  }
  Standardizer s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 0.0);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < dim; ++j) s.mean[j] += row[j];
  }
  for (std::size_t j = 0; j < dim; ++j) s.mean[j] *= inv_n;
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = row[j] - s.mean[j];
      s.std[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    s.std[j] = std::sqrt(s.std[j] * inv_n);  // population standard deviation
    if (s.std[j] == 0.0) s.std[j] = 1.0;
  }
  return s;
}

std::vector<std::vector<double>> apply_standardizer(
    const Standardizer& s, const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<double>> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != s.mean.size()) {
      raise(ErrorKind::InvalidInput,
            "row width does not match standardizer dimension");
    }
    out[i].resize(rows[i].size());
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out[i][j] = (rows[i][j] - s.mean[j]) / s.std[j];
    }
  }
  return out;
}

namespace {

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;  // standardized rows
  std::span<const int> labels;
  int n_classes;
  int mtry;
  Rng& rng;
  DecisionTree nodes;

  // indices carry bootstrap multiplicity
  int build(std::vector<int>& samples, int begin, int end) {
    const int node_index = static_cast<int>(nodes.size());
    nodes.emplace_back();

    std::vector<double> counts(n_classes, 0.0);
    for (int i = begin; i < end; ++i) counts[labels[samples[i]]] += 1.0;
    const int size = end - begin;
    int present = 0;
    for (double c : counts) present += (c > 0.0);
    if (size < 2 || present <= 1) {
      nodes[node_index].counts = std::move(counts);
      return node_index;
    }

    const int dim = static_cast<int>(x.front().size());
    // draw mtry distinct candidate features (partial Fisher-Yates)
    std::vector<int> candidates(dim);
    std::iota(candidates.begin(), candidates.end(), 0);
    for (int k = 0; k < mtry; ++k) {
      const int j = k + static_cast<int>(rng.below(dim - k));
      std::swap(candidates[k], candidates[j]);
    }

    double best_score = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<int> order(samples.begin() + begin, samples.begin() + end);
    std::vector<double> left_counts(n_classes);
    for (int k = 0; k < mtry; ++k) {
      const int f = candidates[k];
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (x[a][f] != x[b][f]) return x[a][f] < x[b][f];
        return a < b;
      });
      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      double left_n = 0.0;
      for (int i = 0; i + 1 < size; ++i) {
        left_counts[labels[order[i]]] += 1.0;
        left_n += 1.0;
        if (x[order[i]][f] == x[order[i + 1]][f]) continue;
        // weighted Gini impurity of the two children
        const double right_n = static_cast<double>(size) - left_n;
        double left_sq = 0.0, right_sq = 0.0;
        for (int c = 0; c < n_classes; ++c) {
          left_sq += left_counts[c] * left_counts[c];
          const double rc = counts[c] - left_counts[c];
          right_sq += rc * rc;
        }
        const double score =
            (left_n - left_sq / left_n) + (right_n - right_sq / right_n);
        if (score < best_score) {
          best_score = score;
          best_feature = f;
          best_threshold = 0.5 * (x[order[i]][f] + x[order[i + 1]][f]);
        }
      }
    }

    if (best_feature < 0) {
      // all candidate features constant on this node
      nodes[node_index].counts = std::move(counts);
      return node_index;
    }

    const auto mid = std::partition(
        samples.begin() + begin, samples.begin() + end,
        [&](int i) { return x[i][best_feature] < best_threshold; });
    const int split = static_cast<int>(mid - samples.begin());
    if (split == begin || split == end) {
      // threshold separated nothing (can happen with degenerate midpoints)
      nodes[node_index].counts = std::move(counts);
      return node_index;
    }

    nodes[node_index].feature = best_feature;
    nodes[node_index].threshold = best_threshold;
    const int left = build(samples, begin, split);
    nodes[node_index].left = left;
    const int right = build(samples, split, end);
    nodes[node_index].right = right;
    return node_index;
  }
};

const TreeNode& descend(const DecisionTree& tree, std::span<const double> row) {
  int index = 0;
  while (tree[index].feature >= 0) {
    const TreeNode& node = tree[index];
    index = row[node.feature] < node.threshold ? node.left : node.right;
  }
  return tree[index];
}

} // namespace

ForestModel train_forest(const std::vector<std::vector<double>>& features,
                         std::span<const int> labels, int n_classes,
                         int n_trees, std::uint64_t seed) {
  if (features.empty() || features.size() != labels.size()) {
    raise(ErrorKind::InvalidInput, "feature rows and labels must align");
  }
  if (n_trees < 1) raise(ErrorKind::InvalidParameter, "n_trees must be >= 1");
  for (int label : labels) {
    if (label < 0 || label >= n_classes) {
      raise(ErrorKind::InvalidInput, "label outside class range");
    }
  }
  std::vector<int> class_seen(n_classes, 0);
  for (int label : labels) class_seen[label] = 1;
  if (std::accumulate(class_seen.begin(), class_seen.end(), 0) < 2) {
    raise(ErrorKind::InvalidInput,
          "degenerate model: training data contains a single class");
  }

  ForestModel model;
  model.seed = seed;
  model.n_trees = n_trees;
  model.n_classes = n_classes;
  model.feature_dim = static_cast<int>(features.front().size());
  model.standardizer = fit_standardizer(features);
  const std::vector<std::vector<double>> x =
      apply_standardizer(model.standardizer, features);

  const int n = static_cast<int>(x.size());
  const int mtry =
      std::max(1, static_cast<int>(std::floor(std::sqrt(model.feature_dim))));

  model.trees.reserve(n_trees);
  std::vector<int> samples(n);
  for (int t = 0; t < n_trees; ++t) {
    Rng rng(seed + static_cast<std::uint64_t>(t));
    for (int i = 0; i < n; ++i) {
      samples[i] = static_cast<int>(rng.below(n));  // bootstrap, size n
    }
    TreeBuilder builder{x, labels, n_classes, mtry, rng, {}};
    builder.build(samples, 0, n);
    model.trees.push_back(std::move(builder.nodes));
  }
  return model;
}

ForestPrediction predict_forest(const ForestModel& model,
                                std::span<const double> row) {
  if (row.size() != static_cast<std::size_t>(model.feature_dim)) {
    raise(ErrorKind::InvalidInput, "row width does not match model feature_dim");
  }
  std::vector<double> standardized(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    standardized[j] = (row[j] - model.standardizer.mean[j]) /
                      model.standardizer.std[j];
  }

  ForestPrediction out;
  out.probabilities.assign(model.n_classes, 0.0);
  for (const DecisionTree& tree : model.trees) {
    const TreeNode& leaf = descend(tree, standardized);
    double total = 0.0;
    for (double c : leaf.counts) total += c;
    for (int c = 0; c < model.n_classes; ++c) {
      out.probabilities[c] += leaf.counts[c] / total;
    }
  }
  const double inv = 1.0 / static_cast<double>(model.trees.size());
  for (double& p : out.probabilities) p *= inv;
  out.label = 0;
  for (int c = 1; c < model.n_classes; ++c) {
    if (out.probabilities[c] > out.probabilities[out.label]) out.label = c;
  }
  return out;
}

std::string forest_to_json(const ForestModel& model) {
  nlohmann::json j;
  j["version"] = model.version;
  j["seed"] = model.seed;
  j["n_trees"] = model.n_trees;
  j["n_classes"] = model.n_classes;
  j["feature_dim"] = model.feature_dim;
  j["standardizer"] = {{"mean", model.standardizer.mean},
                       {"std", model.standardizer.std}};
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& node : tree) {
      nlohmann::json n;
      n["f"] = node.feature;
      if (node.feature >= 0) {
        n["t"] = node.threshold;
        n["l"] = node.left;
        n["r"] = node.right;
      } else {
        n["counts"] = node.counts;
      }
      nodes.push_back(std::move(n));
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

ForestModel forest_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) raise(ErrorKind::Format, "model file is not valid JSON");
  try {
    ForestModel model;
    model.version = j.at("version").get<int>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.n_trees = j.at("n_trees").get<int>();
    model.n_classes = j.at("n_classes").get<int>();
    model.feature_dim = j.at("feature_dim").get<int>();
    model.standardizer.mean =
        j.at("standardizer").at("mean").get<std::vector<double>>();
    model.standardizer.std =
        j.at("standardizer").at("std").get<std::vector<double>>();
    for (const auto& nodes : j.at("trees")) {
      DecisionTree tree;
      for (const auto& n : nodes) {
        TreeNode node;
        node.feature = n.at("f").get<int>();
        if (node.feature >= 0) {
          node.threshold = n.at("t").get<double>();
          node.left = n.at("l").get<int>();
          node.right = n.at("r").get<int>();
        } else {
          node.counts = n.at("counts").get<std::vector<double>>();
        }
        tree.push_back(std::move(node));
      }
      model.trees.push_back(std::move(tree));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, std::string("malformed model JSON: ") + e.what());
  }
}

CvReport stratified_5fold_cv(const std::vector<std::vector<double>>& features,
                             std::span<const int> labels, int n_classes,
                             int n_trees, std::uint64_t seed, int folds) {
  const int n = static_cast<int>(features.size());
  if (folds < 2) raise(ErrorKind::InvalidParameter, "folds must be >= 2");
  if (n < folds) {
    raise(ErrorKind::InvalidInput,
          "need at least as many cases as folds (" + std::to_string(n) +
              " < " + std::to_string(folds) + ")");
  }
  if (labels.size() != features.size()) {
    raise(ErrorKind::InvalidInput, "feature rows and labels must align");
  }

  CvReport report;
  report.folds = folds;
  report.n_trees = n_trees;
  report.seed = seed;
  report.fold_of_case.assign(n, -1);

  std::vector<int> class_count(n_classes, 0);
  for (int label : labels) ++class_count[label];
  bool stratified = true;
  for (int c = 0; c < n_classes; ++c) {
    if (class_count[c] > 0 && class_count[c] < folds) stratified = false;
  }
  report.stratified = stratified;

  if (stratified) {
    for (int c = 0; c < n_classes; ++c) {
      std::vector<int> members;
      for (int i = 0; i < n; ++i) {
        if (labels[i] == c) members.push_back(i);
      }
      Rng rng(mix_seed(seed, 100 + static_cast<std::uint64_t>(c)));
      rng.shuffle(members);
      for (std::size_t k = 0; k < members.size(); ++k) {
        report.fold_of_case[members[k]] = static_cast<int>(k % folds);
      }
    }
  } else {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    Rng rng(mix_seed(seed, 99));
    rng.shuffle(all);
    for (int k = 0; k < n; ++k) {
      report.fold_of_case[all[k]] = k % folds;
    }
  }

  report.pooled_predictions.assign(n, -1);
  report.pooled_probabilities.assign(n, std::vector<double>(n_classes, 0.0));
  report.auc_per_fold.assign(n_classes, std::vector<double>(folds, 0.0));

  for (int f = 0; f < folds; ++f) {
    std::vector<std::vector<double>> train_rows;
    std::vector<int> train_labels, held_out;
    for (int i = 0; i < n; ++i) {
      if (report.fold_of_case[i] == f) {
        held_out.push_back(i);
      } else {
        train_rows.push_back(features[i]);
        train_labels.push_back(labels[i]);
      }
    }
    const ForestModel model =
        train_forest(train_rows, train_labels, n_classes, n_trees,
                     mix_seed(seed, 200 + static_cast<std::uint64_t>(f)));

    std::vector<std::vector<double>> fold_scores;
    std::vector<int> fold_labels;
    for (int i : held_out) {
      ForestPrediction p = predict_forest(model, features[i]);
      report.pooled_predictions[i] = p.label;
      fold_scores.push_back(p.probabilities);
      fold_labels.push_back(labels[i]);
      report.pooled_probabilities[i] = std::move(p.probabilities);
    }
    const AucReport auc = roc_auc_ovr(fold_scores, fold_labels, n_classes);
    for (int c = 0; c < n_classes; ++c) {
      report.auc_per_fold[c][f] = auc.per_class[c];
    }
  }

  report.auc_mean.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
  report.auc_std.assign(n_classes, 0.0);
  for (int c = 0; c < n_classes; ++c) {
    std::vector<double> defined;
    for (double v : report.auc_per_fold[c]) {
      if (!std::isnan(v)) defined.push_back(v);
    }
    if (defined.empty()) continue;
    double mean = 0.0;
    for (double v : defined) mean += v;
    mean /= static_cast<double>(defined.size());
    report.auc_mean[c] = mean;
    if (defined.size() > 1) {
      double var = 0.0;
      for (double v : defined) var += (v - mean) * (v - mean);
      report.auc_std[c] =
          std::sqrt(var / static_cast<double>(defined.size() - 1));
    }
  }

  report.kappa = quadratic_weighted_kappa(labels, report.pooled_predictions,
                                          n_classes);
  report.confusion =
      confusion_from_labels(labels, report.pooled_predictions, n_classes);
  return report;
}

} // namespace histoseg
