#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "histoseg/tensor.hpp"

namespace histoseg {

struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;  // rows = reference, columns = prediction

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int c)
      : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

  std::int64_t& at(int ref, int pred) {
    return counts[static_cast<std::size_t>(ref) * classes + pred];
  }
  std::int64_t at(int ref, int pred) const {
    return counts[static_cast<std::size_t>(ref) * classes + pred];
  }

  std::int64_t total() const;
  std::int64_t row_sum(int ref) const;
  std::int64_t col_sum(int pred) const;
};

/// Pixels whose reference label is kIgnoreLabel are excluded.
ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& ref,
                                 int classes);

/// Confusion over plain index sequences (slide-level classification).
ConfusionMatrix confusion_from_labels(std::span<const int> ref,
                                      std::span<const int> pred, int classes);

/// Per-class scores with NaN marking classes absent from both maps; the mean
/// averages the defined scores only.
struct DiceReport {
  std::vector<double> per_class;
  double mean = 0.0;
  std::vector<int> absent;
};

/// Per class: 2 TP / (2 TP + FP + FN). By default classes absent from both
/// prediction and reference are excluded from the mean; absent_as_zero
/// switches to the per-center convention where they score 0 instead.
DiceReport dice_scores(const LabelMap& pred, const LabelMap& ref, int classes,
                       bool absent_as_zero = false);

/// Pixel-level F1 coincides with Dice; alias provided for reports that use
/// the F1 terminology.
DiceReport pixel_f1(const LabelMap& pred, const LabelMap& ref, int classes,
                    bool absent_as_zero = false);

/// Cohen's kappa with quadratic weights w_ij = (i-j)^2 / (N-1)^2 and expected
/// counts from the marginal product. Throws a Domain error when the expected
/// weighted disagreement is zero (kappa undefined).
double quadratic_weighted_kappa(std::span<const int> ref,
                                std::span<const int> pred, int categories);

struct AucReport {
  std::vector<double> per_class;  // NaN where no positives or no negatives
  double mean = 0.0;              // over defined classes
  std::vector<int> undefined;
};

/// One-vs-rest AUC per class, computed exactly as the rank statistic
/// P(score(positive) > score(negative)) with ties counted 1/2.
/// scores: one row per case, one column per class.
AucReport roc_auc_ovr(const std::vector<std::vector<double>>& scores,
                      std::span<const int> labels, int classes);

/// {"per_class": [...], "mean": x, "absent": [...]} with null entries for
/// absent classes.
std::string metric_report_json(const DiceReport& report);
std::string metric_report_json(const AucReport& report);

} // namespace histoseg
