#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace histoseg {

/// Fixed tissue taxonomy. The index order is part of every serialized format
/// and must never change.
enum class TissueClass : std::uint8_t {
  NormalGlands = 0,
  LowGradeDysplasia = 1,
  HighGradeTumor = 2,
  SubmucosalStroma = 3,
  DesmoplasticStroma = 4,
  StromaLaminaPropria = 5,
  Mucus = 6,
  NecrosisDebris = 7,
  Lymphocytes = 8,
  Erythrocytes = 9,
  Adipose = 10,
  Muscle = 11,
  Nerve = 12,
  Background = 13,
};

inline constexpr int kTissueClassCount = 14;

/// Label value marking pixels excluded from all losses and metrics.
inline constexpr std::uint8_t kIgnoreLabel = 255;

const char* tissue_class_name(TissueClass c);
const char* tissue_class_name(int index);

/// Dense per-pixel per-class scores, row-major (y, x, c). All arithmetic on
/// these maps is done in double; file storage narrows to f32.
struct ClassMap {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<double> values;

  ClassMap() = default;
  ClassMap(int h, int w, int c)
      : height(h), width(w), classes(c),
        values(static_cast<std::size_t>(h) * w * c, 0.0) {}

  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(height) * width;
  }

  double& at(int y, int x, int c) {
    return values[(static_cast<std::size_t>(y) * width + x) * classes + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * classes + c];
  }

  std::span<double> pixel(std::int64_t i) {
    return {values.data() + i * classes, static_cast<std::size_t>(classes)};
  }
  std::span<const double> pixel(std::int64_t i) const {
    return {values.data() + i * classes, static_cast<std::size_t>(classes)};
  }
};

/// Raw per-pixel class scores (network activations).
struct LogitMap : ClassMap {
  using ClassMap::ClassMap;
};

/// Per-pixel probabilities; each pixel sums to 1 within 1e-9.
struct ProbMap : ClassMap {
  using ClassMap::ClassMap;
};

/// Per-pixel class indices; kIgnoreLabel marks unannotated pixels.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w),
        values(static_cast<std::size_t>(h) * w, fill) {}

  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(height) * width;
  }

  std::uint8_t& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// 3-channel image, values in [0,1], row-major (y, x, channel).
struct ImageRGB {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  ImageRGB() = default;
  ImageRGB(int h, int w)
      : height(h), width(w),
        values(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int ch) {
    return values[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  float at(int y, int x, int ch) const {
    return values[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
};

void validate_logits(const LogitMap& logits);
void validate_probs(const ProbMap& probs);
void validate_labels(const LabelMap& labels, int classes);

/// Per-pixel softmax with max-subtraction; safe for |logit| up to 1e4.
ProbMap softmax(const LogitMap& logits);

/// Non-ignore pixel with label k maps to the unit vector e_k; ignore pixels
/// map to the all-zero vector and are excluded downstream.
ProbMap one_hot(const LabelMap& labels, int classes);

/// Per-pixel argmax; ties broken by the lowest class index.
LabelMap argmax_decode(const ProbMap& probs);

} // namespace histoseg
