#include "histoseg/tensor.hpp"

#include <cmath>
#include <string>

#include "histoseg/error.hpp"

namespace histoseg {

namespace {

const char* const kTissueClassNames[kTissueClassCount] = {
    "normal_glands",
    "low_grade_dysplasia",
    "high_grade_tumor",
    "submucosal_stroma",
    "desmoplastic_stroma",
    "stroma_lamina_propria",
    "mucus",
    "necrosis_debris",
    "lymphocytes",
    "erythrocytes",
    "adipose",
    "muscle",
    "nerve",
    "background",
};

void validate_shape(int height, int width, int classes) {
  if (height < 1 || width < 1) {
    raise(ErrorKind::InvalidInput, "map must contain at least one pixel");
  }
  if (classes < 2) {
    raise(ErrorKind::InvalidInput, "class count must be at least 2");
  }
}

} // namespace

const char* tissue_class_name(TissueClass c) {
  return kTissueClassNames[static_cast<int>(c)];
}

const char* tissue_class_name(int index) {
  if (index < 0 || index >= kTissueClassCount) {
    raise(ErrorKind::InvalidInput,
          "tissue class index out of range: " + std::to_string(index));
  }
  return kTissueClassNames[index];
}

void validate_logits(const LogitMap& logits) {
  validate_shape(logits.height, logits.width, logits.classes);
  if (logits.values.size() !=
      static_cast<std::size_t>(logits.pixel_count()) * logits.classes) {
    raise(ErrorKind::InvalidInput, "logit buffer size does not match shape");
  }
  for (double v : logits.values) {
    if (!std::isfinite(v)) {
      raise(ErrorKind::InvalidInput, "non-finite logit value");
    }
  }
}

void validate_probs(const ProbMap& probs) {
  validate_shape(probs.height, probs.width, probs.classes);
  if (probs.values.size() !=
      static_cast<std::size_t>(probs.pixel_count()) * probs.classes) {
    raise(ErrorKind::InvalidInput, "probability buffer size does not match shape");
  }
  for (std::int64_t i = 0; i < probs.pixel_count(); ++i) {
    double sum = 0.0;
    for (double v : probs.pixel(i)) {
      if (!(v >= 0.0 && v <= 1.0)) {
        raise(ErrorKind::InvalidInput, "probability outside [0,1]");
      }
      sum += v;
    }
    // all-zero rows are the one_hot encoding of ignore pixels
    if (std::abs(sum - 1.0) > 1e-9 && sum != 0.0) {
      raise(ErrorKind::InvalidInput,
            "per-pixel probabilities do not sum to 1 (pixel " +
                std::to_string(i) + ")");
    }
  }
}

void validate_labels(const LabelMap& labels, int classes) {
  if (labels.height < 1 || labels.width < 1) {
    raise(ErrorKind::InvalidInput, "label map must contain at least one pixel");
  }
  if (labels.values.size() != static_cast<std::size_t>(labels.pixel_count())) {
    raise(ErrorKind::InvalidInput, "label buffer size does not match shape");
  }
  for (std::uint8_t v : labels.values) {
    if (v != kIgnoreLabel && v >= classes) {
      raise(ErrorKind::InvalidInput,
            "label " + std::to_string(int(v)) + " outside class range 0.." +
                std::to_string(classes - 1));
    }
  }
}

ProbMap softmax(const LogitMap& logits) {
  validate_logits(logits);
  ProbMap out(logits.height, logits.width, logits.classes);
  const int c = logits.classes;
  for (std::int64_t i = 0; i < logits.pixel_count(); ++i) {
    const auto in = logits.pixel(i);
    auto row = out.pixel(i);
    double mx = in[0];
    for (int k = 1; k < c; ++k) mx = std::max(mx, in[k]);
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      row[k] = std::exp(in[k] - mx);
      sum += row[k];
    }
    const double inv = 1.0 / sum;
    for (int k = 0; k < c; ++k) row[k] *= inv;
  }
  return out;
}

ProbMap one_hot(const LabelMap& labels, int classes) {
  validate_labels(labels, classes);
  ProbMap out(labels.height, labels.width, classes);
  for (std::int64_t i = 0; i < labels.pixel_count(); ++i) {
    const std::uint8_t v = labels.values[i];
    if (v != kIgnoreLabel) out.pixel(i)[v] = 1.0;
  }
  return out;
}

LabelMap argmax_decode(const ProbMap& probs) {
  validate_probs(probs);
  LabelMap out(probs.height, probs.width);
  const int c = probs.classes;
  for (std::int64_t i = 0; i < probs.pixel_count(); ++i) {
    const auto row = probs.pixel(i);
    int best = 0;
    for (int k = 1; k < c; ++k) {
      if (row[k] > row[best]) best = k;
    }
    out.values[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

} // namespace histoseg
