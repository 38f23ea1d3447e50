#include "histoseg/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "histoseg/error.hpp"
#include "histoseg/io.hpp"
#include "histoseg/rng.hpp"

namespace histoseg {

double lr_schedule(const TrainLog& log, const TrainConfig& config) {
  double lr = config.initial_lr;
  double best = -std::numeric_limits<double>::infinity();
  int streak = 0;
  for (const EpochStats& e : log.epochs) {
    if (e.val_dice > best + 1e-6) {
      best = e.val_dice;
      streak = 0;
    } else {
      ++streak;
    }
    if (streak >= config.plateau_patience) {
      lr *= config.plateau_factor;
      streak = 0;
    }
  }
  return lr;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    raise(ErrorKind::Io, "dataset directory not found: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = ".rgb.tns";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  if (ids.empty()) {
    raise(ErrorKind::EmptyInput, "no *.rgb.tns tiles in " + dir.string());
  }
  std::sort(ids.begin(), ids.end());

  Dataset data;
  for (const std::string& id : ids) {
    data.ids.push_back(id);
    data.images.push_back(read_rgb_tensor(dir / (id + ".rgb.tns")));
    data.labels.push_back(read_label_pgm(dir / (id + ".mask.pgm")));
    const ImageRGB& img = data.images.back();
    const LabelMap& lab = data.labels.back();
    if (img.height != lab.height || img.width != lab.width) {
      raise(ErrorKind::InvalidInput, "tile " + id + ": image and mask shapes disagree");
    }
  }
  return data;
}

namespace {

// dihedral transforms for square tiles: 4 rotations x optional flip
std::int64_t aug_source_index(int aug, int n, int y, int x) {
  if (aug & 4) x = n - 1 - x;  // horizontal flip
  int sy = y, sx = x;
  switch (aug & 3) {
    case 0: break;
    case 1: sy = n - 1 - x; sx = y; break;
    case 2: sy = n - 1 - y; sx = n - 1 - x; break;
    case 3: sy = x; sx = n - 1 - y; break;
  }
  return static_cast<std::int64_t>(sy) * n + sx;
}

struct PreparedTile {
  TileFeatures features;
  LabelMap dense;  // labels remapped into the scorer's class space
};

std::vector<std::uint8_t> detect_class_set(const Dataset& data) {
  std::set<std::uint8_t> present;
  for (const LabelMap& labels : data.labels) {
    for (std::uint8_t v : labels.values) {
      if (v != kIgnoreLabel) present.insert(v);
    }
  }
  if (present.size() < 2) {
    raise(ErrorKind::InvalidInput,
          "training masks must contain at least 2 classes");
  }
  return {present.begin(), present.end()};
}

LabelMap to_dense_labels(const LabelMap& labels,
                         const std::vector<std::uint8_t>& class_set) {
  std::array<std::uint8_t, 256> lut;
  lut.fill(kIgnoreLabel);  // classes outside the training set are not scored
  for (std::size_t d = 0; d < class_set.size(); ++d) {
    lut[class_set[d]] = static_cast<std::uint8_t>(d);
  }
  LabelMap dense(labels.height, labels.width);
  for (std::int64_t i = 0; i < labels.pixel_count(); ++i) {
    dense.values[i] = lut[labels.values[i]];
  }
  return dense;
}

std::vector<PreparedTile> prepare_tiles(
    const Dataset& data, const std::vector<std::uint8_t>& class_set) {
  std::vector<PreparedTile> tiles;
  tiles.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    tiles.push_back({compute_scorer_features(data.images[i]),
                     to_dense_labels(data.labels[i], class_set)});
  }
  return tiles;
}

LossSpec to_dense_loss(const LossSpec& spec,
                       const std::vector<std::uint8_t>& class_set) {
  LossSpec dense = spec;
  if (!spec.class_weights.empty()) {
    if (spec.class_weights.size() != kTissueClassCount &&
        spec.class_weights.size() != class_set.size()) {
      raise(ErrorKind::InvalidInput,
            "class weight count matches neither the taxonomy nor the "
            "training classes");
    }
    if (spec.class_weights.size() == kTissueClassCount) {
      dense.class_weights.clear();
      for (std::uint8_t c : class_set) {
        dense.class_weights.push_back(spec.class_weights[c]);
      }
    }
  }
  return dense;
}

LabelMap decode_to_taxonomy(const PixelScorer& model, const LogitMap& logits) {
  const LabelMap dense = argmax_decode(softmax(logits));
  LabelMap out(dense.height, dense.width);
  for (std::int64_t i = 0; i < dense.pixel_count(); ++i) {
    out.values[i] = model.class_set[dense.values[i]];
  }
  return out;
}

DiceReport aggregate_dice(const std::vector<DiceReport>& per_tile,
                          int classes) {
  DiceReport agg;
  agg.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  double class_sum = 0.0;
  int class_defined = 0;
  for (int c = 0; c < classes; ++c) {
    double sum = 0.0;
    int defined = 0;
    for (const DiceReport& r : per_tile) {
      if (!std::isnan(r.per_class[c])) {
        sum += r.per_class[c];
        ++defined;
      }
    }
    if (defined == 0) {
      agg.absent.push_back(c);
      continue;
    }
    agg.per_class[c] = sum / defined;
    class_sum += agg.per_class[c];
    ++class_defined;
  }
  agg.mean = class_defined > 0 ? class_sum / class_defined
                               : std::numeric_limits<double>::quiet_NaN();
  return agg;
}

} // namespace

TrainResult train(const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config) {
  if (train_data.size() == 0 || val_data.size() == 0) {
    raise(ErrorKind::EmptyInput, "training and validation sets must be non-empty");
  }
  if (!(config.initial_lr > 0.0)) {
    raise(ErrorKind::InvalidParameter, "initial_lr must be positive");
  }
  if (!(config.plateau_factor > 0.0 && config.plateau_factor < 1.0)) {
    raise(ErrorKind::InvalidParameter, "plateau_factor must lie in (0, 1)");
  }
  if (config.batch_size < 1 || config.iterations_per_epoch < 1 ||
      config.max_epochs < 1) {
    raise(ErrorKind::InvalidParameter, "schedule parameters must be positive");
  }
  const int tile_h = train_data.images.front().height;
  const int tile_w = train_data.images.front().width;
  for (const ImageRGB& img : train_data.images) {
    if (img.height != tile_h || img.width != tile_w) {
      raise(ErrorKind::InvalidInput, "all training tiles must share one size");
    }
  }
  const bool can_augment = config.augment && tile_h == tile_w;

  const std::vector<std::uint8_t> class_set = detect_class_set(train_data);
  const int classes = static_cast<int>(class_set.size());
  const LossSpec dense_loss = to_dense_loss(config.loss, class_set);
  std::vector<PreparedTile> train_tiles = prepare_tiles(train_data, class_set);
  std::vector<PreparedTile> val_tiles = prepare_tiles(val_data, class_set);

  PixelScorer model = init_model(config.seed, classes);
  model.class_set = class_set;

  const int batch = config.batch_size;
  const std::int64_t tile_px = static_cast<std::int64_t>(tile_h) * tile_w;
  TileFeatures batch_features;
  batch_features.height = tile_h * batch;
  batch_features.width = tile_w;
  batch_features.values.resize(static_cast<std::size_t>(tile_px) * batch *
                               kScorerFeatureDim);
  LabelMap batch_labels(tile_h * batch, tile_w);
  std::vector<double> batch_hidden;

  TrainResult result;
  TrainLog& log = result.log;
  PixelScorer best_model = model;
  EarlyStopping stopper(config.early_stop_patience);
  double lr = config.initial_lr;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, 50000 + static_cast<std::uint64_t>(epoch)));
    double train_loss_sum = 0.0;

    for (int iter = 0; iter < config.iterations_per_epoch; ++iter) {
      for (int b = 0; b < batch; ++b) {
        const std::size_t t =
            static_cast<std::size_t>(rng.below(train_tiles.size()));
        const int aug =
            can_augment ? static_cast<int>(rng.below(8)) : 0;
        const PreparedTile& tile = train_tiles[t];
        float* fdst =
            &batch_features.values[static_cast<std::size_t>(b) * tile_px *
                                   kScorerFeatureDim];
        std::uint8_t* ldst = &batch_labels.values[b * tile_px];
        if (aug == 0) {
          std::copy(tile.features.values.begin(), tile.features.values.end(),
                    fdst);
          std::copy(tile.dense.values.begin(), tile.dense.values.end(), ldst);
        } else {
          for (int y = 0; y < tile_h; ++y) {
            for (int x = 0; x < tile_w; ++x) {
              const std::int64_t src = aug_source_index(aug, tile_h, y, x);
              const std::int64_t dst = static_cast<std::int64_t>(y) * tile_w + x;
              std::copy_n(&tile.features.values[src * kScorerFeatureDim],
                          kScorerFeatureDim, fdst + dst * kScorerFeatureDim);
              ldst[dst] = tile.dense.values[src];
            }
          }
        }
      }

      const LogitMap logits =
          scorer_forward(model, batch_features, &batch_hidden);
      const LossOutput loss = eval_loss(dense_loss, logits, batch_labels);
      if (!std::isfinite(loss.value)) {
        raise(ErrorKind::Numeric,
              "training diverged at epoch " + std::to_string(epoch) +
                  " (lr=" + std::to_string(lr) + ")");
      }
      train_loss_sum += loss.value;

      ScorerGrad grad = make_zero_grad(model);
      scorer_backward(model, batch_features, batch_hidden, loss.grad, grad);
      sgd_step(model, grad, lr);
    }

    // validation pass: loss for early stopping, Dice for the LR schedule
    double val_loss_sum = 0.0;
    std::vector<DiceReport> val_dice;
    for (std::size_t v = 0; v < val_tiles.size(); ++v) {
      const LogitMap logits = scorer_forward(model, val_tiles[v].features);
      val_loss_sum += eval_loss(dense_loss, logits, val_tiles[v].dense).value;
      const LabelMap pred = decode_to_taxonomy(model, logits);
      val_dice.push_back(
          dice_scores(pred, val_data.labels[v], kTissueClassCount));
    }
    const double val_loss = val_loss_sum / static_cast<double>(val_tiles.size());
    if (!std::isfinite(val_loss)) {
      raise(ErrorKind::Numeric,
            "validation loss diverged at epoch " + std::to_string(epoch) +
                " (lr=" + std::to_string(lr) + ")");
    }
    const DiceReport agg = aggregate_dice(val_dice, kTissueClassCount);

    log.epochs.push_back({epoch,
                          train_loss_sum / config.iterations_per_epoch,
                          val_loss, agg.mean, lr});

    const bool stop = stopper.observe(val_loss);
    if (stopper.improved_last()) {
      best_model = model;
      log.best_epoch = epoch;
    }
    if (stop) {
      log.early_stopped = true;
      break;
    }
    lr = lr_schedule(log, config);
  }

  result.model = std::move(best_model);
  return result;
}

EvalResult evaluate(const PixelScorer& model, const Dataset& data) {
  if (data.size() == 0) raise(ErrorKind::EmptyInput, "empty evaluation set");
  EvalResult result;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LabelMap pred = predict_labels(model, data.images[i]);
    result.per_tile.push_back(
        dice_scores(pred, data.labels[i], kTissueClassCount));
  }
  result.aggregate = aggregate_dice(result.per_tile, kTissueClassCount);
  return result;
}

LabelMap predict_labels(const PixelScorer& model, const ImageRGB& image) {
  const LogitMap logits = forward(model, image);
  const LabelMap dense = argmax_decode(softmax(logits));
  LabelMap out(dense.height, dense.width);
  for (std::int64_t i = 0; i < dense.pixel_count(); ++i) {
    out.values[i] = model.class_set[dense.values[i]];
  }
  return out;
}

void write_train_log_csv(const TrainLog& log,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot create " + path.string());
  out << "epoch,train_loss,val_loss,val_dice,lr\n";
  char line[256];
  for (const EpochStats& e : log.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g\n", e.epoch,
                  e.train_loss, e.val_loss, e.val_dice, e.lr);
    out << line;
  }
  if (!out) raise(ErrorKind::Io, "write failed for " + path.string());
}

} // namespace histoseg
