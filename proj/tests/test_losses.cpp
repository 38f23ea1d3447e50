#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "histoseg/error.hpp"
#include "histoseg/gradcheck.hpp"
#include "histoseg/losses.hpp"
#include "histoseg/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace histoseg;
using testutil::as_logit_map;
using testutil::as_prob_map;
using testutil::random_label_map;
using testutil::random_logit_map;

TEST_SUITE_BEGIN("losses");

// ---------------------------------------------------------------------------
// categorical cross-entropy

TEST_CASE("cc value on a perfect prediction is ~0") {
  LabelMap labels = random_label_map(2, 4, 14, 5);
  LogitMap logits(2, 4, 14);
  for (std::int64_t i = 0; i < labels.pixel_count(); ++i) {
    logits.values[i * 14 + labels.values[i]] = 40.0;
  }
  CHECK(cc_loss(logits, labels).value <= 1e-9);
}

TEST_CASE("cc value on uniform probabilities is ln 14") {
  LogitMap logits(1, 3, 14);  // all-zero logits -> uniform softmax
  LabelMap labels = random_label_map(1, 3, 14, 9);
  CHECK(cc_loss(logits, labels).value ==
        doctest::Approx(2.6390573296152584).epsilon(1e-12));
}

TEST_CASE("cc gradient matches finite differences") {
  const LogitMap logits = random_logit_map(2, 4, 14, 21);
  const LabelMap labels = random_label_map(2, 4, 14, 22);
  const double err = finite_difference_check(
      [&](const ClassMap& m) { return cc_loss(as_logit_map(m), labels); },
      logits, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("cc with class weights: gradient and hand value") {
  std::vector<double> weights(14, 1.0);
  weights[3] = 2.5;
  weights[7] = 0.3;
  const LogitMap logits = random_logit_map(2, 4, 14, 31);
  const LabelMap labels = random_label_map(2, 4, 14, 32);
  const double err = finite_difference_check(
      [&](const ClassMap& m) {
        return cc_loss(as_logit_map(m), labels, weights);
      },
      logits, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("cc rejects empty and mismatched input") {
  LogitMap logits(1, 2, 3);
  LabelMap all_ignore(1, 2, kIgnoreLabel);
  CHECK_THROWS_AS((void)cc_loss(logits, all_ignore), Error);
  LabelMap wrong_shape(2, 2, 0);
  CHECK_THROWS_AS((void)cc_loss(logits, wrong_shape), Error);
}

// ---------------------------------------------------------------------------
// focal

TEST_CASE("focal with gamma=0, alpha=1 equals cc everywhere") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const LogitMap logits = random_logit_map(3, 3, 6, seed);
    const LabelMap labels = random_label_map(3, 3, 6, seed + 500, 0.1);
    const LossOutput focal = focal_loss(logits, labels, {1.0, 0.0});
    const LossOutput cc = cc_loss(logits, labels);
    CHECK(std::abs(focal.value - cc.value) <= 1e-9);
    for (std::size_t i = 0; i < cc.grad.values.size(); ++i) {
      CHECK(std::abs(focal.grad.values[i] - cc.grad.values[i]) <= 1e-9);
    }
  }
}

TEST_CASE("focal single-pixel value at p=0.9, gamma=2") {
  LogitMap logits(1, 1, 2);
  logits.values = {std::log(9.0), 0.0};  // softmax -> [0.9, 0.1]
  LabelMap labels(1, 1, 0);
  const LossOutput out = focal_loss(logits, labels, {1.0, 2.0});
  CHECK(out.value == doctest::Approx(1.0536051565782630e-3).epsilon(1e-9));
}

TEST_CASE("focal gradient matches finite differences") {
  const LogitMap logits = random_logit_map(2, 4, 14, 41);
  const LabelMap labels = random_label_map(2, 4, 14, 42);
  for (const FocalParams params : {FocalParams{0.25, 2.0}, FocalParams{1.0, 0.5}}) {
    const double err = finite_difference_check(
        [&](const ClassMap& m) {
          return focal_loss(as_logit_map(m), labels, params);
        },
        logits, 1e-5);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("focal rejects negative gamma") {
  LogitMap logits(1, 1, 2);
  LabelMap labels(1, 1, 0);
  CHECK_THROWS_AS((void)focal_loss(logits, labels, {1.0, -0.5}), Error);
}

// ---------------------------------------------------------------------------
// tempered primitives

TEST_CASE("tempered_exp fixed points") {
  for (double t : {0.5, 1.0, 1.5, 2.0}) {
    CHECK(tempered_exp(0.0, t) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(tempered_exp(1.0, 1.0) ==
        doctest::Approx(2.718281828459045).epsilon(1e-15));
  CHECK(tempered_exp(0.5, 2.0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("tempered_log fixed points and domain error") {
  for (double t : {0.5, 1.0, 1.5, 2.0}) {
    CHECK(tempered_log(1.0, t) == doctest::Approx(0.0).epsilon(1e-15));
  }
  CHECK(tempered_log(2.0, 2.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS((void)tempered_log(0.0, 0.5), Error);
  CHECK_THROWS_AS((void)tempered_log(-1.0, 1.0), Error);
}

TEST_CASE("tempered_log inverts tempered_exp on its range") {
  for (double t : {0.5, 1.0, 1.5, 2.0}) {
    for (double x = -5.0; x <= 5.0; x += 0.125) {
      const double y = tempered_exp(x, t);
      if (!(y > 0.0) || !std::isfinite(y)) continue;  // outside the range
      CHECK(std::abs(tempered_log(y, t) - x) <= 1e-10);
    }
  }
}

// ---------------------------------------------------------------------------
// tempered softmax

TEST_CASE("tempered softmax of equal activations is uniform") {
  for (double t2 : {1.0, 1.2, 1.7, 2.0}) {
    const std::vector<double> a(6, 3.25);
    const std::vector<double> p = tempered_softmax(a, t2);
    for (double v : p) CHECK(std::abs(v - 1.0 / 6.0) <= 1e-12);
  }
}

TEST_CASE("tempered softmax at t2=1 is the softmax") {
  Rng rng(15);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a(5);
    for (double& v : a) v = rng.uniform(-10.0, 10.0);
    const std::vector<double> p = tempered_softmax(a, 1.0);
    LogitMap logits(1, 1, 5);
    logits.values = a;
    const ProbMap q = softmax(logits);
    for (int k = 0; k < 5; ++k) CHECK(std::abs(p[k] - q.values[k]) <= 1e-12);
  }
}

TEST_CASE("tempered softmax [1,0] at t2=2 matches the high-precision solve") {
  const std::vector<double> a = {1.0, 0.0};
  const std::vector<double> p = tempered_softmax(a, 2.0);
  // normalizer is the golden ratio; outputs are (sqrt(5)-1)/2 and (3-sqrt(5))/2
  CHECK(p[0] == doctest::Approx(0.61803398874989485).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.38196601125010515).epsilon(1e-12));
  const std::vector<double> q = testutil::tempered_softmax_oracle(a, 2.0);
  CHECK(std::abs(p[0] - q[0]) <= 1e-12);
  CHECK(std::abs(p[1] - q[1]) <= 1e-12);
  CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
}

TEST_CASE("tempered softmax sums to 1, including large activations") {
  Rng rng(16);
  for (int rep = 0; rep < 500; ++rep) {
    const int c = 2 + static_cast<int>(rng.below(13));
    const double scale = rep % 3 == 0 ? 1e3 : 10.0;
    std::vector<double> a(c);
    for (double& v : a) v = rng.uniform(-scale, scale);
    const double t2 = 1.0 + rng.uniform();
    const std::vector<double> p = tempered_softmax(a, t2);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("tempered softmax is shift invariant") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(6), b(6);
    const double shift = rng.uniform(-40.0, 40.0);
    for (int k = 0; k < 6; ++k) {
      a[k] = rng.uniform(-5.0, 5.0);
      b[k] = a[k] + shift;
    }
    const double t2 = 1.0 + rng.uniform();
    const std::vector<double> pa = tempered_softmax(a, t2);
    const std::vector<double> pb = tempered_softmax(b, t2);
    for (int k = 0; k < 6; ++k) CHECK(std::abs(pa[k] - pb[k]) <= 1e-9);
  }
}

TEST_CASE("tempered softmax agrees with the oracle on random inputs") {
  Rng rng(18);
  for (int rep = 0; rep < 200; ++rep) {
    const int c = 2 + static_cast<int>(rng.below(12));
    std::vector<double> a(c);
    for (double& v : a) v = rng.uniform(-20.0, 20.0);
    const double t2 = 1.0 + rng.uniform();
    const std::vector<double> p = tempered_softmax(a, t2);
    const std::vector<double> q = testutil::tempered_softmax_oracle(a, t2);
    for (int k = 0; k < c; ++k) CHECK(std::abs(p[k] - q[k]) <= 1e-11);
  }
}

// ---------------------------------------------------------------------------
// bi-tempered

TEST_CASE("bitempered at t1=t2=1 equals cc") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const LogitMap logits = random_logit_map(3, 3, 6, seed + 60);
    const LabelMap labels = random_label_map(3, 3, 6, seed + 61, 0.1);
    const LossOutput bt = bitempered_loss(logits, labels, {1.0, 1.0});
    const LossOutput cc = cc_loss(logits, labels);
    CHECK(std::abs(bt.value - cc.value) <= 1e-6);
    for (std::size_t i = 0; i < cc.grad.values.size(); ++i) {
      CHECK(std::abs(bt.grad.values[i] - cc.grad.values[i]) <= 1e-6);
    }
  }
}

TEST_CASE("bitempered vanishes when the prediction saturates to one-hot") {
  LabelMap labels = random_label_map(2, 2, 6, 71);
  LogitMap logits(2, 2, 6);
  for (std::int64_t i = 0; i < labels.pixel_count(); ++i) {
    logits.values[i * 6 + labels.values[i]] = 45.0;
  }
  const LossOutput out = bitempered_loss(logits, labels, {0.8, 1.0});
  CHECK(std::abs(out.value) <= 1e-9);
}

TEST_CASE("bitempered gradient matches finite differences") {
  const LogitMap logits = random_logit_map(2, 4, 14, 81);
  const LabelMap labels = random_label_map(2, 4, 14, 82);
  for (const BiTemperedParams params :
       {BiTemperedParams{1.0, 1.0}, BiTemperedParams{0.8, 1.2},
        BiTemperedParams{0.5, 2.0}}) {
    const double err = finite_difference_check(
        [&](const ClassMap& m) {
          return bitempered_loss(as_logit_map(m), labels, params);
        },
        logits, 1e-5);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("bitempered rejects out-of-range temperatures") {
  LogitMap logits(1, 1, 2);
  LabelMap labels(1, 1, 0);
  CHECK_THROWS_AS((void)bitempered_loss(logits, labels, {1.3, 1.2}), Error);
  CHECK_THROWS_AS((void)bitempered_loss(logits, labels, {0.8, 0.9}), Error);
  CHECK_THROWS_AS((void)bitempered_loss(logits, labels, {0.0, 1.2}), Error);
}

// ---------------------------------------------------------------------------
// Lovász

TEST_CASE("lovasz_grad_vector on the enumerated small cases") {
  {
    const std::vector<std::uint8_t> gt = {1};
    const std::vector<double> g = lovasz_grad_vector(gt);
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(1.0));
  }
  {
    const std::vector<std::uint8_t> gt = {1, 0};
    const std::vector<double> g = lovasz_grad_vector(gt);
    CHECK(g[0] == doctest::Approx(1.0));
    CHECK(g[1] == doctest::Approx(0.0));
  }
  {
    const std::vector<std::uint8_t> gt = {0, 1};
    const std::vector<double> g = lovasz_grad_vector(gt);
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("lovasz_grad_vector matches extension slopes on <=3 pixels") {
  // the extension is linear where the error order is strict, so its slope
  // along coordinate j recovers g_j
  const double m3[3] = {0.9, 0.8, 0.7};
  for (int mask = 1; mask < 8; ++mask) {
    for (int n : {1, 2, 3}) {
      if (mask >= (1 << n)) continue;
      std::vector<std::uint8_t> gt;
      std::vector<bool> gtb;
      std::vector<double> m;
      for (int i = 0; i < n; ++i) {
        gt.push_back((mask >> i) & 1);
        gtb.push_back(((mask >> i) & 1) != 0);
        m.push_back(m3[i]);
      }
      if (std::none_of(gt.begin(), gt.end(), [](std::uint8_t v) { return v; })) {
        continue;
      }
      const std::vector<double> g = lovasz_grad_vector(gt);
      const double base = oracle::lovasz_extension(m, gtb);
      for (int j = 0; j < n; ++j) {
        std::vector<double> probe = m;
        probe[j] += 1e-3;
        const double slope =
            (oracle::lovasz_extension(probe, gtb) - base) / 1e-3;
        CHECK(g[j] == doctest::Approx(slope).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("lovasz_grad_vector rejects an all-negative sequence") {
  const std::vector<std::uint8_t> gt = {0, 0};
  CHECK_THROWS_AS((void)lovasz_grad_vector(gt), Error);
}

TEST_CASE("lovasz loss is zero at the one-hot prediction") {
  const LabelMap labels = random_label_map(3, 3, 6, 91);
  const ProbMap probs = one_hot(labels, 6);
  CHECK(lovasz_softmax_loss(probs, labels).value == doctest::Approx(0.0));
}

TEST_CASE("lovasz single-pixel binary value") {
  ProbMap probs(1, 1, 2);
  probs.values = {0.7, 0.3};
  LabelMap labels(1, 1, 0);
  CHECK(lovasz_softmax_loss(probs, labels).value ==
        doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("lovasz equals mean Jaccard at binary vertices") {
  Rng rng(23);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 8, c = 2 + static_cast<int>(rng.below(3));
    LabelMap labels(1, n);
    std::vector<int> gt(n), pred(n);
    for (int i = 0; i < n; ++i) {
      gt[i] = static_cast<int>(rng.below(c));
      pred[i] = static_cast<int>(rng.below(c));
      labels.values[i] = static_cast<std::uint8_t>(gt[i]);
    }
    ProbMap probs(1, n, c);
    for (int i = 0; i < n; ++i) probs.values[i * c + pred[i]] = 1.0;
    const double value = lovasz_softmax_loss(probs, labels).value;
    const double expected = oracle::mean_jaccard_loss(pred, gt, c);
    CHECK(std::abs(value - expected) <= 1e-12);
  }
}

TEST_CASE("lovasz equals the extension oracle at soft points") {
  Rng rng(24);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 6, c = 3;
    LabelMap labels(1, n);
    ProbMap probs(1, n, c);
    for (int i = 0; i < n; ++i) {
      labels.values[i] = static_cast<std::uint8_t>(rng.below(c));
      for (int k = 0; k < c; ++k) {
        probs.values[i * c + k] = rng.uniform(0.02, 0.98);
      }
    }
    const double value = lovasz_softmax_loss(probs, labels).value;

    double expected = 0.0;
    int present = 0;
    for (int cls = 0; cls < c; ++cls) {
      bool in_gt = false;
      for (int i = 0; i < n; ++i) in_gt = in_gt || labels.values[i] == cls;
      if (!in_gt) continue;
      std::vector<double> errors(n);
      std::vector<bool> gt(n);
      for (int i = 0; i < n; ++i) {
        gt[i] = labels.values[i] == cls;
        errors[i] = gt[i] ? 1.0 - probs.values[i * c + cls]
                          : probs.values[i * c + cls];
      }
      expected += oracle::lovasz_extension(errors, gt);
      ++present;
    }
    expected /= present;
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("lovasz gradient w.r.t. probabilities matches finite differences") {
  Rng rng(25);
  ProbMap probs(2, 4, 6);
  for (double& v : probs.values) v = rng.uniform(0.05, 0.95);
  const LabelMap labels = random_label_map(2, 4, 6, 26);
  const double err = finite_difference_check(
      [&](const ClassMap& m) {
        return lovasz_softmax_loss(as_prob_map(m), labels);
      },
      probs, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("lovasz gradient w.r.t. logits matches finite differences") {
  const LogitMap logits = random_logit_map(2, 4, 14, 27);
  const LabelMap labels = random_label_map(2, 4, 14, 28);
  const double err = finite_difference_check(
      [&](const ClassMap& m) {
        return lovasz_softmax_loss_logits(as_logit_map(m), labels);
      },
      logits, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("lovasz rejects an all-ignore mask") {
  ProbMap probs(1, 2, 3);
  probs.values = {1, 0, 0, 1, 0, 0};
  LabelMap labels(1, 2, kIgnoreLabel);
  CHECK_THROWS_AS((void)lovasz_softmax_loss(probs, labels), Error);
}

// ---------------------------------------------------------------------------
// cross-cutting properties

TEST_CASE("all losses are invariant under pixel permutations") {
  Rng rng(33);
  const int n = 12, c = 6;
  const LogitMap logits = random_logit_map(1, n, c, 34);
  const LabelMap labels = random_label_map(1, n, c, 35);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  LogitMap permuted_logits(1, n, c);
  LabelMap permuted_labels(1, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < c; ++k) {
      permuted_logits.values[i * c + k] = logits.values[perm[i] * c + k];
    }
    permuted_labels.values[i] = labels.values[perm[i]];
  }

  const LossSpec specs[] = {
      {LossKind::CC, {}, {}, {}},
      {LossKind::Focal, {0.25, 2.0}, {}, {}},
      {LossKind::BiTempered, {}, {0.8, 1.2}, {}},
      {LossKind::Lovasz, {}, {}, {}},
  };
  for (const LossSpec& spec : specs) {
    const double a = eval_loss(spec, logits, labels).value;
    const double b = eval_loss(spec, permuted_logits, permuted_labels).value;
    CHECK(std::abs(a - b) <= 1e-12);
  }
}

TEST_CASE("finite_difference_check validates epsilon") {
  const LogitMap logits = random_logit_map(1, 2, 3, 36);
  const LabelMap labels = random_label_map(1, 2, 3, 37);
  auto fn = [&](const ClassMap& m) { return cc_loss(as_logit_map(m), labels); };
  CHECK_THROWS_AS((void)finite_difference_check(fn, logits, 1e-8), Error);
  CHECK_THROWS_AS((void)finite_difference_check(fn, logits, 1e-2), Error);
}

TEST_CASE("loss kind names round trip") {
  for (LossKind kind : {LossKind::CC, LossKind::Focal, LossKind::BiTempered,
                        LossKind::Lovasz}) {
    CHECK(parse_loss_kind(loss_kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS((void)parse_loss_kind("dice"), Error);
}

TEST_SUITE_END();
