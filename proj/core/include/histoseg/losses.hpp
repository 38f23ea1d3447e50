#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "histoseg/tensor.hpp"

namespace histoseg {

/// Scalar loss together with its analytic gradient w.r.t. the input scores.
/// Per-pixel losses are averaged (not summed) over non-ignore pixels so tile
/// size does not rescale the learning rate.
struct LossOutput {
  double value = 0.0;
  ClassMap grad;
};

/// Pixel-averaged categorical cross-entropy on softmax(logits).
/// Probabilities are clamped below at 1e-12 before the logarithm. Optional
/// per-class weights scale each pixel's term by the weight of its true class.
LossOutput cc_loss(const LogitMap& logits, const LabelMap& labels,
                   std::span<const double> class_weights = {});

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

/// Focal loss: cross-entropy with each pixel down-weighted by
/// alpha * (1 - p_true)^gamma. gamma = 0, alpha = 1 reproduces cc_loss.
LossOutput focal_loss(const LogitMap& logits, const LabelMap& labels,
                      const FocalParams& params);

/// Tempered exponential: exp_t(x) = max(1 + (1-t)x, 0)^(1/(1-t)), exp for
/// t = 1. For t > 1 the function diverges at x = 1/(t-1); +infinity is
/// returned from there on.
double tempered_exp(double x, double t);

/// Tempered logarithm: log_t(x) = (x^(1-t) - 1)/(1-t), ln for t = 1.
/// Inverse of tempered_exp on its range. x must be positive.
double tempered_log(double x, double t);

/// Heavy-tailed softmax: returns exp_t2(a_i - lambda) where lambda is the
/// unique normalizer making the outputs sum to 1 (within 1e-12). lambda is
/// found by bisection on [max(a), max(a) - log_t2(1/C)]; t2 = 1 falls back to
/// the ordinary softmax.
std::vector<double> tempered_softmax(std::span<const double> activations,
                                     double t2);

struct BiTemperedParams {
  double t1 = 0.8;  // tempered-logarithm temperature, in (0, 1]
  double t2 = 1.2;  // tempered-exponential temperature, >= 1
};

/// Bi-tempered logistic loss over the heavy-tailed softmax. t1 = t2 = 1
/// recovers cc_loss. The gradient is analytic, with the normalizer
/// differentiated implicitly through the sum-to-one constraint.
LossOutput bitempered_loss(const LogitMap& logits, const LabelMap& labels,
                           const BiTemperedParams& params);

/// Gradient of the Jaccard-loss extension along a descending-error ordering.
/// gt_sorted holds the 0/1 ground-truth indicators in that order and must
/// contain at least one positive (callers skip absent classes).
std::vector<double> lovasz_grad_vector(std::span<const std::uint8_t> gt_sorted);

/// Multi-class Jaccard surrogate, averaged over the classes present in the
/// ground truth. Gradient is taken w.r.t. the class probabilities. The input
/// is validated for finite values in [0,1] per coordinate but per-pixel sums
/// are not enforced, so the derivative can be probed coordinate-wise.
LossOutput lovasz_softmax_loss(const ProbMap& probs, const LabelMap& labels);

/// Same loss composed with softmax; gradient w.r.t. the logits.
LossOutput lovasz_softmax_loss_logits(const LogitMap& logits,
                                      const LabelMap& labels);

enum class LossKind { CC, Focal, BiTempered, Lovasz };

const char* loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Bundles a loss choice with its parameters so training code can stay
/// loss-agnostic.
struct LossSpec {
  LossKind kind = LossKind::CC;
  FocalParams focal;
  BiTemperedParams bitempered;
  std::vector<double> class_weights;  // cc only; empty = uniform
};

LossOutput eval_loss(const LossSpec& spec, const LogitMap& logits,
                     const LabelMap& labels);

} // namespace histoseg
