#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "histoseg/tensor.hpp"

namespace histoseg {

inline constexpr int kScorerFeatureDim = 9;
inline constexpr int kScorerHidden = 32;
inline constexpr int kScorerWindow = 5;

/// Desk-scale differentiable pixel scorer: 9 window features (3 raw channels
/// plus per-channel mean and std over a k x k window) -> 32 ReLU units -> C
/// logits. class_set maps the dense output channels back to taxonomy indices
/// when the scorer is trained on a subset of the 14 classes.
struct PixelScorer {
  int window = kScorerWindow;
  int hidden = kScorerHidden;
  int classes = 0;
  std::vector<std::uint8_t> class_set;  // size == classes
  // w1 stored input-major [feature][hidden], w2 hidden-major [hidden][class]
  std::vector<double> w1, b1, w2, b2;
};

/// He initialization: zero-mean Gaussians with variance 2/fan_in, zero biases.
PixelScorer init_model(std::uint64_t seed, int classes);

/// Per-pixel feature planes, 9 floats per pixel. Window statistics use
/// edge-clamped padding.
struct TileFeatures {
  int height = 0;
  int width = 0;
  std::vector<float> values;
};

TileFeatures compute_scorer_features(const ImageRGB& image,
                                     int window = kScorerWindow);

/// Forward pass over precomputed features. When hidden_out is non-null the
/// post-ReLU activations are stored for the backward pass.
LogitMap scorer_forward(const PixelScorer& model, const TileFeatures& features,
                        std::vector<double>* hidden_out = nullptr);

/// Convenience: features + forward in one call.
LogitMap forward(const PixelScorer& model, const ImageRGB& image);

struct ScorerGrad {
  std::vector<double> w1, b1, w2, b2;
};

ScorerGrad make_zero_grad(const PixelScorer& model);

/// Backpropagates dL/dlogits; accumulates into grad.
void scorer_backward(const PixelScorer& model, const TileFeatures& features,
                     const std::vector<double>& hidden, const ClassMap& dlogits,
                     ScorerGrad& grad);

void sgd_step(PixelScorer& model, const ScorerGrad& grad, double lr);

std::string scorer_to_json(const PixelScorer& model);
PixelScorer scorer_from_json(const std::string& text);

} // namespace histoseg
