#include "histoseg/scorer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "histoseg/error.hpp"
#include "histoseg/rng.hpp"

namespace histoseg {

PixelScorer init_model(std::uint64_t seed, int classes) {
  if (classes < 2) raise(ErrorKind::InvalidInput, "scorer needs >= 2 classes");
  PixelScorer model;
  model.classes = classes;
  model.class_set.resize(classes);
  for (int c = 0; c < classes; ++c) {
    model.class_set[c] = static_cast<std::uint8_t>(c);
  }
  const int h = model.hidden;
  model.w1.resize(static_cast<std::size_t>(kScorerFeatureDim) * h);
  model.b1.assign(h, 0.0);
  model.w2.resize(static_cast<std::size_t>(h) * classes);
  model.b2.assign(classes, 0.0);

  Rng rng(mix_seed(seed, 41));
  const double std1 = std::sqrt(2.0 / kScorerFeatureDim);
  for (double& w : model.w1) w = std1 * rng.normal();
  const double std2 = std::sqrt(2.0 / h);
  for (double& w : model.w2) w = std2 * rng.normal();
  return model;
}

TileFeatures compute_scorer_features(const ImageRGB& image, int window) {
  if (window < 1 || window % 2 == 0) {
    raise(ErrorKind::InvalidParameter, "window must be odd and positive");
  }
  const int h = image.height, w = image.width;
  if (h < 1 || w < 1) raise(ErrorKind::InvalidInput, "empty image");
  const int r = window / 2;
  const int ph = h + 2 * r, pw = w + 2 * r;

  // summed-area tables over the edge-replicated image, per channel
  std::vector<double> sat(static_cast<std::size_t>(ph + 1) * (pw + 1));
  std::vector<double> sat2(sat.size());
  TileFeatures features;
  features.height = h;
  features.width = w;
  features.values.resize(static_cast<std::size_t>(h) * w * kScorerFeatureDim);

  const double inv_area = 1.0 / (static_cast<double>(window) * window);
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < ph; ++y) {
      const int sy = std::clamp(y - r, 0, h - 1);
      for (int x = 0; x < pw; ++x) {
        const int sx = std::clamp(x - r, 0, w - 1);
        const double v = image.at(sy, sx, ch);
        const std::size_t row = static_cast<std::size_t>(y + 1) * (pw + 1);
        const std::size_t up = static_cast<std::size_t>(y) * (pw + 1);
        sat[row + x + 1] = v + sat[row + x] + sat[up + x + 1] - sat[up + x];
        sat2[row + x + 1] =
            v * v + sat2[row + x] + sat2[up + x + 1] - sat2[up + x];
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t a = static_cast<std::size_t>(y) * (pw + 1) + x;
        const std::size_t b = a + window;
        const std::size_t c = static_cast<std::size_t>(y + window) * (pw + 1) + x;
        const std::size_t d = c + window;
        const double sum = sat[d] - sat[c] - sat[b] + sat[a];
        const double sum2 = sat2[d] - sat2[c] - sat2[b] + sat2[a];
        const double mean = sum * inv_area;
        const double var = std::max(0.0, sum2 * inv_area - mean * mean);
        float* out = &features.values[(static_cast<std::size_t>(y) * w + x) *
                                      kScorerFeatureDim];
        out[ch] = image.at(y, x, ch);
        out[3 + ch] = static_cast<float>(mean);
        out[6 + ch] = static_cast<float>(std::sqrt(var));
      }
    }
  }
  return features;
}

LogitMap scorer_forward(const PixelScorer& model, const TileFeatures& features,
                        std::vector<double>* hidden_out) {
  const std::int64_t n =
      static_cast<std::int64_t>(features.height) * features.width;
  const int h = model.hidden, c = model.classes;
  LogitMap logits(features.height, features.width, c);
  if (hidden_out) hidden_out->assign(static_cast<std::size_t>(n) * h, 0.0);

  std::vector<double> act(h);
  for (std::int64_t px = 0; px < n; ++px) {
    const float* f = &features.values[px * kScorerFeatureDim];
    for (int j = 0; j < h; ++j) act[j] = model.b1[j];
    for (int i = 0; i < kScorerFeatureDim; ++i) {
      const double fi = f[i];
      const double* w = &model.w1[static_cast<std::size_t>(i) * h];
      for (int j = 0; j < h; ++j) act[j] += fi * w[j];
    }
    for (int j = 0; j < h; ++j) act[j] = std::max(0.0, act[j]);
    if (hidden_out) {
      std::copy(act.begin(), act.end(), hidden_out->begin() + px * h);
    }

    double* out = &logits.values[px * c];
    for (int k = 0; k < c; ++k) out[k] = model.b2[k];
    for (int j = 0; j < h; ++j) {
      const double hj = act[j];
      if (hj == 0.0) continue;
      const double* w = &model.w2[static_cast<std::size_t>(j) * c];
      for (int k = 0; k < c; ++k) out[k] += hj * w[k];
    }
  }
  return logits;
}

LogitMap forward(const PixelScorer& model, const ImageRGB& image) {
  return scorer_forward(model, compute_scorer_features(image, model.window));
}

ScorerGrad make_zero_grad(const PixelScorer& model) {
  ScorerGrad grad;
  grad.w1.assign(model.w1.size(), 0.0);
  grad.b1.assign(model.b1.size(), 0.0);
  grad.w2.assign(model.w2.size(), 0.0);
  grad.b2.assign(model.b2.size(), 0.0);
  return grad;
}

void scorer_backward(const PixelScorer& model, const TileFeatures& features,
                     const std::vector<double>& hidden, const ClassMap& dlogits,
                     ScorerGrad& grad) {
  const std::int64_t n =
      static_cast<std::int64_t>(features.height) * features.width;
  const int h = model.hidden, c = model.classes;
  if (hidden.size() != static_cast<std::size_t>(n) * h) {
    raise(ErrorKind::InvalidInput, "hidden activation cache size mismatch");
  }
  if (dlogits.height != features.height || dlogits.width != features.width ||
      dlogits.classes != c) {
    raise(ErrorKind::InvalidInput, "dlogits shape does not match scorer");
  }

  std::vector<double> dz(h);
  for (std::int64_t px = 0; px < n; ++px) {
    const double* dl = &dlogits.values[px * c];
    const double* act = &hidden[px * h];
    const float* f = &features.values[px * kScorerFeatureDim];

    for (int k = 0; k < c; ++k) grad.b2[k] += dl[k];
    for (int j = 0; j < h; ++j) {
      const double hj = act[j];
      double* gw2 = &grad.w2[static_cast<std::size_t>(j) * c];
      const double* w2 = &model.w2[static_cast<std::size_t>(j) * c];
      double dh = 0.0;
      for (int k = 0; k < c; ++k) {
        gw2[k] += hj * dl[k];
        dh += w2[k] * dl[k];
      }
      dz[j] = hj > 0.0 ? dh : 0.0;  // ReLU mask
    }
    for (int j = 0; j < h; ++j) grad.b1[j] += dz[j];
    for (int i = 0; i < kScorerFeatureDim; ++i) {
      const double fi = f[i];
      double* gw1 = &grad.w1[static_cast<std::size_t>(i) * h];
      for (int j = 0; j < h; ++j) gw1[j] += fi * dz[j];
    }
  }
}

void sgd_step(PixelScorer& model, const ScorerGrad& grad, double lr) {
  for (std::size_t i = 0; i < model.w1.size(); ++i) model.w1[i] -= lr * grad.w1[i];
  for (std::size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= lr * grad.b1[i];
  for (std::size_t i = 0; i < model.w2.size(); ++i) model.w2[i] -= lr * grad.w2[i];
  for (std::size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= lr * grad.b2[i];
}

namespace {

// layers serialize as dense row-major matrices, weights first
nlohmann::json matrix_json(const std::vector<double>& data, int rows, int cols) {
  return {{"rows", rows}, {"cols", cols}, {"data", data}};
}

} // namespace

std::string scorer_to_json(const PixelScorer& model) {
  const int h = model.hidden, c = model.classes;
  // transpose to conventional [out][in] layout for the file
  std::vector<double> w1(model.w1.size()), w2(model.w2.size());
  for (int i = 0; i < kScorerFeatureDim; ++i) {
    for (int j = 0; j < h; ++j) {
      w1[static_cast<std::size_t>(j) * kScorerFeatureDim + i] =
          model.w1[static_cast<std::size_t>(i) * h + j];
    }
  }
  for (int j = 0; j < h; ++j) {
    for (int k = 0; k < c; ++k) {
      w2[static_cast<std::size_t>(k) * h + j] =
          model.w2[static_cast<std::size_t>(j) * c + k];
    }
  }
  nlohmann::json j;
  j["version"] = 1;
  j["k"] = model.window;
  j["H"] = h;
  j["C"] = c;
  j["class_set"] = model.class_set;
  j["layers"] = nlohmann::json::array({
      matrix_json(w1, h, kScorerFeatureDim),
      matrix_json(model.b1, h, 1),
      matrix_json(w2, c, h),
      matrix_json(model.b2, c, 1),
  });
  return j.dump();
}

PixelScorer scorer_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) raise(ErrorKind::Format, "model file is not valid JSON");
  try {
    PixelScorer model;
    model.window = j.at("k").get<int>();
    model.hidden = j.at("H").get<int>();
    model.classes = j.at("C").get<int>();
    model.class_set = j.at("class_set").get<std::vector<std::uint8_t>>();
    const auto& layers = j.at("layers");
    const auto w1 = layers.at(0).at("data").get<std::vector<double>>();
    model.b1 = layers.at(1).at("data").get<std::vector<double>>();
    const auto w2 = layers.at(2).at("data").get<std::vector<double>>();
    model.b2 = layers.at(3).at("data").get<std::vector<double>>();

    const int h = model.hidden, c = model.classes;
    if (w1.size() != static_cast<std::size_t>(h) * kScorerFeatureDim ||
        w2.size() != static_cast<std::size_t>(c) * h ||
        model.b1.size() != static_cast<std::size_t>(h) ||
        model.b2.size() != static_cast<std::size_t>(c) ||
        model.class_set.size() != static_cast<std::size_t>(c)) {
      raise(ErrorKind::Format, "model layer shapes are inconsistent");
    }
    model.w1.resize(w1.size());
    model.w2.resize(w2.size());
    for (int i = 0; i < kScorerFeatureDim; ++i) {
      for (int jj = 0; jj < h; ++jj) {
        model.w1[static_cast<std::size_t>(i) * h + jj] =
            w1[static_cast<std::size_t>(jj) * kScorerFeatureDim + i];
      }
    }
    for (int jj = 0; jj < h; ++jj) {
      for (int k = 0; k < c; ++k) {
        model.w2[static_cast<std::size_t>(jj) * c + k] =
            w2[static_cast<std::size_t>(k) * h + jj];
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, std::string("malformed model JSON: ") + e.what());
  }
}

} // namespace histoseg
