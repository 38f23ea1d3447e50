#include "histoseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "histoseg/error.hpp"

namespace histoseg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

} // namespace

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::row_sum(int ref) const {
  std::int64_t s = 0;
  for (int p = 0; p < classes; ++p) s += at(ref, p);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
  std::int64_t s = 0;
  for (int r = 0; r < classes; ++r) s += at(r, pred);
  return s;
}

ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& ref,
                                 int classes) {
  if (pred.height != ref.height || pred.width != ref.width) {
    raise(ErrorKind::InvalidInput, "prediction and reference shapes disagree");
  }
  validate_labels(pred, classes);
  validate_labels(ref, classes);
  ConfusionMatrix m(classes);
  for (std::int64_t i = 0; i < ref.pixel_count(); ++i) {
    const std::uint8_t r = ref.values[i];
    if (r == kIgnoreLabel) continue;
    const std::uint8_t p = pred.values[i];
    if (p == kIgnoreLabel) continue;
    ++m.at(r, p);
  }
  return m;
}

ConfusionMatrix confusion_from_labels(std::span<const int> ref,
                                      std::span<const int> pred, int classes) {
  if (ref.size() != pred.size()) {
    raise(ErrorKind::InvalidInput, "reference and prediction lengths disagree");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] < 0 || ref[i] >= classes || pred[i] < 0 || pred[i] >= classes) {
      raise(ErrorKind::InvalidInput, "label outside category range");
    }
    ++m.at(ref[i], pred[i]);
  }
  return m;
}

DiceReport dice_scores(const LabelMap& pred, const LabelMap& ref, int classes,
                       bool absent_as_zero) {
  const ConfusionMatrix m = confusion_matrix(pred, ref, classes);
  DiceReport report;
  report.per_class.resize(classes, kNaN);
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < classes; ++c) {
    const std::int64_t tp = m.at(c, c);
    const std::int64_t fn = m.row_sum(c) - tp;
    const std::int64_t fp = m.col_sum(c) - tp;
    if (tp + fn + fp == 0) {
      if (absent_as_zero) {
        report.per_class[c] = 0.0;
        ++defined;
      } else {
        report.absent.push_back(c);
      }
      continue;
    }
    report.per_class[c] =
        2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    sum += report.per_class[c];
    ++defined;
  }
  report.mean = defined > 0 ? sum / defined : kNaN;
  return report;
}

DiceReport pixel_f1(const LabelMap& pred, const LabelMap& ref, int classes,
                    bool absent_as_zero) {
  return dice_scores(pred, ref, classes, absent_as_zero);
}

double quadratic_weighted_kappa(std::span<const int> ref,
                                std::span<const int> pred, int categories) {
  if (ref.empty() || ref.size() != pred.size()) {
    raise(ErrorKind::InvalidInput,
          "kappa requires equally sized, non-empty sequences");
  }
  if (categories < 2) {
    raise(ErrorKind::Domain, "kappa undefined for fewer than 2 categories");
  }
  const ConfusionMatrix m = confusion_from_labels(ref, pred, categories);
  const double total = static_cast<double>(m.total());
  const double denom_w = static_cast<double>(categories - 1) *
                         static_cast<double>(categories - 1);

  double observed = 0.0, expected = 0.0;
  for (int i = 0; i < categories; ++i) {
    const double row = static_cast<double>(m.row_sum(i));
    for (int j = 0; j < categories; ++j) {
      const double w = static_cast<double>(i - j) * (i - j) / denom_w;
      observed += w * static_cast<double>(m.at(i, j));
      expected += w * row * static_cast<double>(m.col_sum(j)) / total;
    }
  }
  if (expected == 0.0) {
    raise(ErrorKind::Domain,
          "kappa undefined: expected weighted disagreement is zero");
  }
  return 1.0 - observed / expected;
}

AucReport roc_auc_ovr(const std::vector<std::vector<double>>& scores,
                      std::span<const int> labels, int classes) {
  if (scores.size() != labels.size() || scores.empty()) {
    raise(ErrorKind::InvalidInput, "scores and labels must align and be non-empty");
  }
  for (const auto& row : scores) {
    if (row.size() != static_cast<std::size_t>(classes)) {
      raise(ErrorKind::InvalidInput, "score row width does not match classes");
    }
  }
  const std::size_t n = labels.size();

  AucReport report;
  report.per_class.resize(classes, kNaN);
  double sum = 0.0;
  int defined = 0;
  std::vector<std::size_t> order(n);
  std::vector<double> rank(n);
  for (int c = 0; c < classes; ++c) {
    std::int64_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) positives += (labels[i] == c);
    const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
    if (positives == 0 || negatives == 0) {
      report.undefined.push_back(c);
      continue;
    }

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a][c] < scores[b][c];
    });
    // midranks so tied scores contribute 1/2 per pair
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && scores[order[j + 1]][c] == scores[order[i]][c]) ++j;
      const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
      i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (labels[k] == c) rank_sum += rank[k];
    }
    const double p = static_cast<double>(positives);
    const double auc =
        (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
    report.per_class[c] = auc;
    sum += auc;
    ++defined;
  }
  report.mean = defined > 0 ? sum / defined : kNaN;
  return report;
}

namespace {

nlohmann::json per_class_json(const std::vector<double>& values) {
  nlohmann::json arr = nlohmann::json::array();
  for (double v : values) {
    if (std::isnan(v)) {
      arr.push_back(nullptr);
    } else {
      arr.push_back(v);
    }
  }
  return arr;
}

} // namespace

std::string metric_report_json(const DiceReport& report) {
  nlohmann::json j;
  j["per_class"] = per_class_json(report.per_class);
  if (std::isnan(report.mean)) {
    j["mean"] = nullptr;
  } else {
    j["mean"] = report.mean;
  }
  j["absent"] = report.absent;
  return j.dump();
}

std::string metric_report_json(const AucReport& report) {
  nlohmann::json j;
  j["per_class"] = per_class_json(report.per_class);
  if (std::isnan(report.mean)) {
    j["mean"] = nullptr;
  } else {
    j["mean"] = report.mean;
  }
  j["absent"] = report.undefined;
  return j.dump();
}

} // namespace histoseg
