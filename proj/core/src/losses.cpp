#include "histoseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "histoseg/error.hpp"

namespace histoseg {

namespace {

constexpr double kProbClamp = 1e-12;

void check_pair(const ClassMap& scores, const LabelMap& labels) {
  if (scores.height != labels.height || scores.width != labels.width) {
    raise(ErrorKind::InvalidInput, "score map and label map shapes disagree");
  }
  validate_labels(labels, scores.classes);
}

std::int64_t count_scored(const LabelMap& labels) {
  std::int64_t n = 0;
  for (std::uint8_t v : labels.values) n += (v != kIgnoreLabel);
  if (n == 0) raise(ErrorKind::EmptyInput, "no non-ignore pixels to score");
  return n;
}

// softmax of one pixel row, max-subtracted
void softmax_row(std::span<const double> in, std::span<double> out) {
  double mx = in[0];
  for (std::size_t k = 1; k < in.size(); ++k) mx = std::max(mx, in[k]);
  double sum = 0.0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    out[k] = std::exp(in[k] - mx);
    sum += out[k];
  }
  const double inv = 1.0 / sum;
  for (std::size_t k = 0; k < in.size(); ++k) out[k] *= inv;
}

double ipow(double base, long n) {
  if (n < 0) return 1.0 / ipow(base, -n);
  double result = 1.0, acc = base;
  while (n > 0) {
    if (n & 1) result *= acc;
    acc *= acc;
    n >>= 1;
  }
  return result;
}

// Precomputed exp_t evaluator. 1/(1-t) is often a small integer in practice
// (t = 1.2 -> -5, t = 1.5 -> -2, t = 2 -> -1); repeated squaring is then much
// cheaper than pow inside the per-pixel normalizer bisection.
struct TemperedExpEval {
  double t = 1.0;
  double one_minus_t = 0.0;
  double exponent = 0.0;
  bool plain_exp = true;
  bool integer_exponent = false;
  long n = 0;

  explicit TemperedExpEval(double temperature) : t(temperature) {
    if (!(t > 0.0)) {
      raise(ErrorKind::InvalidParameter, "temperature must be positive");
    }
    plain_exp = (t == 1.0);
    if (!plain_exp) {
      one_minus_t = 1.0 - t;
      exponent = 1.0 / one_minus_t;
      const double rounded = std::round(exponent);
      if (std::abs(exponent - rounded) < 1e-9 && std::abs(rounded) <= 64.0) {
        integer_exponent = true;
        n = static_cast<long>(rounded);
      }
    }
  }

  double operator()(double x) const {
    if (plain_exp) return std::exp(x);
    const double u = 1.0 + one_minus_t * x;
    if (u <= 0.0) {
      return t < 1.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return integer_exponent ? ipow(u, n) : std::pow(u, exponent);
  }
};

// Solves for the normalizer and writes exp_t2(a_i - lambda) into out.
// The sum is >= 1 at lambda = max(a) and <= 1 at max(a) - log_t2(1/C), and is
// strictly decreasing in between, so bisection cannot fail.
void tempered_softmax_into(std::span<const double> a, double t2,
                           const TemperedExpEval& exp_t2,
                           std::span<double> out) {
  const std::size_t c = a.size();
  double amax = a[0];
  for (std::size_t k = 1; k < c; ++k) amax = std::max(amax, a[k]);

  double lo = amax;
  double hi = amax - tempered_log(1.0 / static_cast<double>(c), t2);
  bool converged = false;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) {
      converged = true;  // interval is one ulp wide; cannot shrink further
      break;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) sum += exp_t2(a[k] - mid);
    if (sum >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-13) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    raise(ErrorKind::Numeric, "tempered softmax normalizer bisection did not converge");
  }
  const double lambda = 0.5 * (lo + hi);
  for (std::size_t k = 0; k < c; ++k) out[k] = exp_t2(a[k] - lambda);
}

} // namespace

LossOutput cc_loss(const LogitMap& logits, const LabelMap& labels,
                   std::span<const double> class_weights) {
  validate_logits(logits);
  check_pair(logits, labels);
  if (!class_weights.empty() &&
      class_weights.size() != static_cast<std::size_t>(logits.classes)) {
    raise(ErrorKind::InvalidInput, "class weight count does not match classes");
  }
  const std::int64_t n = count_scored(labels);
  const double inv_n = 1.0 / static_cast<double>(n);
  const int c = logits.classes;

  LossOutput out;
  out.grad = ClassMap(logits.height, logits.width, c);
  std::vector<double> p(c);
  double total = 0.0;
  for (std::int64_t i = 0; i < logits.pixel_count(); ++i) {
    const std::uint8_t label = labels.values[i];
    if (label == kIgnoreLabel) continue;
    softmax_row(logits.pixel(i), p);
    const double w = class_weights.empty() ? 1.0 : class_weights[label];
    total += -w * std::log(std::max(p[label], kProbClamp));
    auto grad = out.grad.pixel(i);
    for (int k = 0; k < c; ++k) grad[k] = w * p[k] * inv_n;
    grad[label] -= w * inv_n;
  }
  out.value = total * inv_n;
  return out;
}

LossOutput focal_loss(const LogitMap& logits, const LabelMap& labels,
                      const FocalParams& params) {
  if (params.gamma < 0.0) {
    raise(ErrorKind::InvalidParameter, "focal gamma must be >= 0");
  }
  if (!(params.alpha > 0.0)) {
    raise(ErrorKind::InvalidParameter, "focal alpha must be > 0");
  }
  validate_logits(logits);
  check_pair(logits, labels);
  const std::int64_t n = count_scored(labels);
  const double inv_n = 1.0 / static_cast<double>(n);
  const int c = logits.classes;
  const double alpha = params.alpha, gamma = params.gamma;

  LossOutput out;
  out.grad = ClassMap(logits.height, logits.width, c);
  std::vector<double> p(c);
  double total = 0.0;
  for (std::int64_t i = 0; i < logits.pixel_count(); ++i) {
    const std::uint8_t label = labels.values[i];
    if (label == kIgnoreLabel) continue;
    softmax_row(logits.pixel(i), p);
    const double q = p[label];
    const double ql = std::max(q, kProbClamp);
    const double u = 1.0 - q;
    const double u_pow_g = std::pow(u, gamma);  // 0^0 == 1 covers gamma = 0
    const double log_q = std::log(ql);
    total += -alpha * u_pow_g * log_q;

    // dL/dq; the (1-q)^(gamma-1) term vanishes in the q -> 1 limit for
    // gamma > 0, so it is dropped when u == 0
    double dq = -alpha * u_pow_g / ql;
    if (gamma > 0.0 && u > 0.0) {
      dq += alpha * gamma * std::pow(u, gamma - 1.0) * log_q;
    }
    const double scale = dq * q * inv_n;
    auto grad = out.grad.pixel(i);
    for (int k = 0; k < c; ++k) grad[k] = -scale * p[k];
    grad[label] += scale;
  }
  out.value = total * inv_n;
  return out;
}

double tempered_exp(double x, double t) {
  return TemperedExpEval(t)(x);
}

double tempered_log(double x, double t) {
  if (!(t > 0.0)) {
    raise(ErrorKind::InvalidParameter, "temperature must be positive");
  }
  if (!(x > 0.0)) {
    raise(ErrorKind::Domain, "tempered_log requires a positive argument");
  }
  if (t == 1.0) return std::log(x);
  const double one_minus_t = 1.0 - t;
  return (std::pow(x, one_minus_t) - 1.0) / one_minus_t;
}

std::vector<double> tempered_softmax(std::span<const double> activations,
                                     double t2) {
  if (activations.empty()) {
    raise(ErrorKind::InvalidInput, "empty activation vector");
  }
  for (double v : activations) {
    if (!std::isfinite(v)) {
      raise(ErrorKind::InvalidInput, "non-finite activation");
    }
  }
  if (t2 < 1.0) {
    raise(ErrorKind::InvalidParameter, "tempered softmax requires t2 >= 1");
  }
  std::vector<double> out(activations.size());
  if (t2 == 1.0) {
    softmax_row(activations, out);
    return out;
  }
  TemperedExpEval exp_t2(t2);
  tempered_softmax_into(activations, t2, exp_t2, out);
  return out;
}

LossOutput bitempered_loss(const LogitMap& logits, const LabelMap& labels,
                           const BiTemperedParams& params) {
  if (!(params.t1 > 0.0) || params.t1 > 1.0 || params.t2 < 1.0) {
    raise(ErrorKind::InvalidParameter,
          "bi-tempered temperatures require 0 < t1 <= 1 <= t2");
  }
  validate_logits(logits);
  check_pair(logits, labels);
  const std::int64_t n = count_scored(labels);
  const double inv_n = 1.0 / static_cast<double>(n);
  const int c = logits.classes;
  const double t1 = params.t1, t2 = params.t2;
  const double two_minus_t1 = 2.0 - t1;
  const double t2_minus_t1 = t2 - t1;
  const bool tempered = (t2 != 1.0);
  const TemperedExpEval exp_t2(t2);

  LossOutput out;
  out.grad = ClassMap(logits.height, logits.width, c);
  std::vector<double> p(c), zg(c), z(c);
  double total = 0.0;
  for (std::int64_t i = 0; i < logits.pixel_count(); ++i) {
    const std::uint8_t label = labels.values[i];
    if (label == kIgnoreLabel) continue;
    const auto a = logits.pixel(i);
    if (tempered) {
      tempered_softmax_into(a, t2, exp_t2, p);
    } else {
      softmax_row(a, p);
    }

    // value: -log_t1 p_k - (1/(2-t1)) (1 - sum_i p_i^(2-t1)) for one-hot y
    double pow_sum = 0.0;
    for (int k = 0; k < c; ++k) pow_sum += std::pow(p[k], two_minus_t1);
    total += -tempered_log(std::max(p[label], kProbClamp), t1) +
             (pow_sum - 1.0) / two_minus_t1;

    // gradient via implicit differentiation of the sum-to-one constraint:
    // dL/da_j = p_j^(t2-t1) (p_j - y_j) - w_j * sum_i p_i^(t2-t1) (p_i - y_i)
    // with w_j = p_j^t2 / sum_i p_i^t2
    double z_sum = 0.0, t_sum = 0.0;
    for (int k = 0; k < c; ++k) {
      z[k] = std::pow(p[k], t2);
      z_sum += z[k];
      const double y = (k == label) ? 1.0 : 0.0;
      zg[k] = std::pow(p[k], t2_minus_t1) * (p[k] - y);
      t_sum += zg[k];
    }
    auto grad = out.grad.pixel(i);
    const double inv_z = 1.0 / z_sum;
    for (int k = 0; k < c; ++k) {
      grad[k] = (zg[k] - z[k] * inv_z * t_sum) * inv_n;
    }
  }
  out.value = total * inv_n;
  return out;
}

std::vector<double> lovasz_grad_vector(std::span<const std::uint8_t> gt_sorted) {
  const std::size_t n = gt_sorted.size();
  if (n == 0) raise(ErrorKind::InvalidInput, "empty ground-truth sequence");
  std::int64_t positives = 0;
  for (std::uint8_t v : gt_sorted) positives += (v != 0);
  if (positives == 0) {
    raise(ErrorKind::EmptyInput,
          "class absent from ground truth; caller must skip it");
  }

  std::vector<double> g(n);
  std::int64_t cum_gt = 0, cum_not = 0;
  double prev_jacc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cum_gt += (gt_sorted[j] != 0);
    cum_not += (gt_sorted[j] == 0);
    const double intersection = static_cast<double>(positives - cum_gt);
    const double union_ = static_cast<double>(positives + cum_not);
    const double jacc = 1.0 - intersection / union_;
    g[j] = (j == 0) ? jacc : jacc - prev_jacc;
    prev_jacc = jacc;
  }
  return g;
}

namespace {

// Shared core: value plus gradient w.r.t. the probabilities.
LossOutput lovasz_core(const ClassMap& probs, const LabelMap& labels) {
  check_pair(probs, labels);
  for (double v : probs.values) {
    if (!std::isfinite(v) || v < -1e-2 || v > 1.0 + 1e-2) {
      raise(ErrorKind::InvalidInput, "probability far outside [0,1]");
    }
  }
  const int c = probs.classes;

  std::vector<std::int64_t> scored;
  scored.reserve(probs.pixel_count());
  std::vector<bool> present(c, false);
  for (std::int64_t i = 0; i < probs.pixel_count(); ++i) {
    const std::uint8_t label = labels.values[i];
    if (label == kIgnoreLabel) continue;
    scored.push_back(i);
    present[label] = true;
  }
  if (scored.empty()) {
    raise(ErrorKind::EmptyInput, "no class present in the ground truth");
  }
  int n_present = 0;
  for (bool b : present) n_present += b;

  LossOutput out;
  out.grad = ClassMap(probs.height, probs.width, c);
  const std::size_t n = scored.size();
  std::vector<double> errors(n);
  std::vector<std::uint32_t> order(n);
  std::vector<std::uint8_t> gt_sorted(n);

  double total = 0.0;
  for (int cls = 0; cls < c; ++cls) {
    if (!present[cls]) continue;
    for (std::size_t t = 0; t < n; ++t) {
      const std::int64_t px = scored[t];
      const double p = probs.values[px * c + cls];
      errors[t] = (labels.values[px] == cls) ? 1.0 - p : p;
    }
    std::iota(order.begin(), order.end(), 0u);
    // stable sort: pixels with equal error keep their original order
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       return errors[a] > errors[b];
                     });
    for (std::size_t j = 0; j < n; ++j) {
      gt_sorted[j] = (labels.values[scored[order[j]]] == cls) ? 1 : 0;
    }
    const std::vector<double> g = lovasz_grad_vector(gt_sorted);

    double loss_c = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      loss_c += errors[order[j]] * g[j];
      const std::int64_t px = scored[order[j]];
      const double sign = gt_sorted[j] ? -1.0 : 1.0;
      out.grad.values[px * c + cls] += sign * g[j];
    }
    total += loss_c;
  }
  const double inv_m = 1.0 / static_cast<double>(n_present);
  out.value = total * inv_m;
  for (double& v : out.grad.values) v *= inv_m;
  return out;
}

} // namespace

LossOutput lovasz_softmax_loss(const ProbMap& probs, const LabelMap& labels) {
  return lovasz_core(probs, labels);
}

LossOutput lovasz_softmax_loss_logits(const LogitMap& logits,
                                      const LabelMap& labels) {
  validate_logits(logits);
  const ProbMap probs = softmax(logits);
  LossOutput core = lovasz_core(probs, labels);

  // compose with the softmax Jacobian: dL/da_j = p_j (dL/dp_j - sum_i dL/dp_i p_i)
  const int c = logits.classes;
  LossOutput out;
  out.value = core.value;
  out.grad = ClassMap(logits.height, logits.width, c);
  for (std::int64_t i = 0; i < logits.pixel_count(); ++i) {
    const auto p = probs.pixel(i);
    const auto dp = core.grad.pixel(i);
    auto da = out.grad.pixel(i);
    double dot = 0.0;
    for (int k = 0; k < c; ++k) dot += dp[k] * p[k];
    for (int k = 0; k < c; ++k) da[k] = p[k] * (dp[k] - dot);
  }
  return out;
}

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::CC: return "cc";
    case LossKind::Focal: return "focal";
    case LossKind::BiTempered: return "bitempered";
    case LossKind::Lovasz: return "lovasz";
  }
  return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "cc") return LossKind::CC;
  if (name == "focal") return LossKind::Focal;
  if (name == "bitempered") return LossKind::BiTempered;
  if (name == "lovasz") return LossKind::Lovasz;
  raise(ErrorKind::InvalidParameter, "unknown loss kind: " + name);
}

LossOutput eval_loss(const LossSpec& spec, const LogitMap& logits,
                     const LabelMap& labels) {
  switch (spec.kind) {
    case LossKind::CC:
      return cc_loss(logits, labels, spec.class_weights);
    case LossKind::Focal:
      return focal_loss(logits, labels, spec.focal);
    case LossKind::BiTempered:
      return bitempered_loss(logits, labels, spec.bitempered);
    case LossKind::Lovasz:
      return lovasz_softmax_loss_logits(logits, labels);
  }
  raise(ErrorKind::InvalidParameter, "unknown loss kind");
}

} // namespace histoseg
