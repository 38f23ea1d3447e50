#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "histoseg/losses.hpp"
#include "histoseg/metrics.hpp"
#include "histoseg/scorer.hpp"

namespace histoseg {

struct TrainConfig {
  LossSpec loss;
  double initial_lr = 1e-4;
  double plateau_factor = 0.5;
  int plateau_patience = 20;    // epochs without val-Dice improvement
  int early_stop_patience = 50; // epochs without val-loss improvement
  int max_epochs = 200;
  int iterations_per_epoch = 50;
  int batch_size = 5;
  bool augment = true;          // flips and 90-degree rotations
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dice = 0.0;
  double lr = 0.0;  // rate used during this epoch
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // epoch whose weights were kept (1-based)
  bool early_stopped = false;
};

/// Learning rate for the next epoch: halves (by plateau_factor) whenever the
/// validation mean Dice has not improved by more than 1e-6 for
/// plateau_patience consecutive epochs since the last reduction.
double lr_schedule(const TrainLog& log, const TrainConfig& config);

/// Strict-improvement early stopping on validation loss: fires after exactly
/// `patience` consecutive non-improving epochs.
class EarlyStopping {
public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Observes one epoch's validation loss; returns true when training should
  /// stop.
  bool observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      improved_ = true;
      streak_ = 0;
      return false;
    }
    improved_ = false;
    return ++streak_ >= patience_;
  }

  bool improved_last() const { return improved_; }

private:
  int patience_;
  int streak_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

/// Paired tiles: <id>.rgb.tns + <id>.mask.pgm, ordered by id.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<ImageRGB> images;
  std::vector<LabelMap> labels;

  std::size_t size() const { return ids.size(); }
};

Dataset load_dataset(const std::filesystem::path& dir);

struct TrainResult {
  PixelScorer model;
  TrainLog log;
};

/// Minibatch SGD with the configured loss over the concatenated batch,
/// validation after every epoch, plateau LR schedule on validation Dice and
/// early stopping on validation loss. Returns the weights of the best
/// validation-loss epoch. Fully deterministic for a fixed seed. The scorer is
/// sized to the classes present in the training masks; its class_set maps
/// dense outputs back to taxonomy indices.
TrainResult train(const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config);

struct EvalResult {
  std::vector<DiceReport> per_tile;
  DiceReport aggregate;  // per-class mean over tiles, then class mean
};

EvalResult evaluate(const PixelScorer& model, const Dataset& data);

/// Decodes a tile and maps dense channels back to taxonomy labels.
LabelMap predict_labels(const PixelScorer& model, const ImageRGB& image);

void write_train_log_csv(const TrainLog& log,
                         const std::filesystem::path& path);

} // namespace histoseg
