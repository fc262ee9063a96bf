#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "auv/adam.hpp"
#include "auv/dataset.hpp"
#include "auv/losses.hpp"
#include "auv/networks.hpp"

namespace auv {

struct StageConfig {
  std::string name;
  int epochs = 1;
  LossWeights weights;
  // Epochs (at full scale) after which the prior weight drops to zero; -1
  // keeps it for the whole stage.
  int prior_epochs = -1;
  bool freeze_basis = false;
  bool operator==(const StageConfig&) const = default;
};

// Epoch count after desk-scale shrinking: max(1, round(epochs * scale)).
int scaled_epochs(int epochs, double scale);

// Stage schedules and default model layouts per category.
std::vector<StageConfig> category_schedule(Category category);
ModelConfig default_model_config(Category category);

struct TrainConfig {
  Category category = Category::Head;
  std::vector<StageConfig> stages;
  double epoch_scale = 0.05;
  std::uint64_t seed = 0;
  int points_per_step = 16384;  // 0: every sample of the shape
  int smooth_subset = 2048;     // M
  double sigma = 0.02;
  AdamConfig adam;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::filesystem::path out_dir;  // empty: no files written
};

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

struct EpochMetrics {
  int stage = 0;
  int epoch = 0;
  double color = kAbsent;  // NaN when the term was absent for every step
  double normal = kAbsent;
  double coord = kAbsent;
  double smooth = kAbsent;
  double prior = kAbsent;
  double total = 0;
  std::uint64_t basis_hash = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
// Bitwise comparison (NaN equals NaN).
bool same_metrics(const std::vector<EpochMetrics>& a, const std::vector<EpochMetrics>& b);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Multi-stage training, one optimizer step per shape per epoch. Writes
// metrics.csv and stage<k>.auvn into out_dir when set. Throws NumericalError
// naming stage, epoch and term if a loss becomes non-finite.
std::vector<EpochMetrics> train(AuvModel<float>& model, const std::vector<ShapeData>& shapes, const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

struct FitConfig {
  int duplicates = 100;
  int epochs = 200;
  double epoch_scale = 1.0;
  std::optional<LossWeights> weights;  // unset: the category's last stage
  bool include_training_set = true;
  std::uint64_t seed = 0;
  int points_per_step = 16384;
  int smooth_subset = 2048;
  double sigma = 0.02;
  AdamConfig adam;
  double clip_norm = 10.0;
};

struct FitResult {
  std::vector<EpochMetrics> metrics;
  std::uint64_t basis_hash_before = 0;
  std::uint64_t basis_hash_after = 0;
  bool basis_constant = true;  // hash identical after every epoch
};

// Continues the last stage on `duplicates` copies of the new shape (plus the
// training set when given) with the basis generators frozen. A colorless new
// shape drops the color term.
FitResult fit_new_shape(AuvModel<float>& model, const ShapeData& new_shape, const std::vector<ShapeData>& training_set,
                        const FitConfig& config, const EpochCallback& on_epoch = {});

// ------------------------------------------------------------------ toy

struct ToyTrainConfig {
  int epochs = 200;
  int prior_epochs = 10;  // identity prior active for these (scaled) epochs
  double prior_weight = 1.0;
  double epoch_scale = 1.0;
  int pixels_per_step = 1024;  // 0: every pixel
  int images_per_step = 1;
  std::uint64_t seed = 0;
  AdamConfig adam;
  // Cosine decay of the learning rate down to adam.lr * lr_end over the run;
  // 1 keeps it constant.
  double lr_end = 1.0;
  double clip_norm = 10.0;
  std::filesystem::path out_dir;
};

struct ToyEpochMetrics {
  int epoch = 0;
  double mse = 0;
  double prior = kAbsent;
  double total = 0;
};

using ToyEpochCallback = std::function<void(const ToyEpochMetrics&)>;

// Color reconstruction of warped images with an early identity prior on the
// UV mapper. With identity_uv and pixels_per_step == 0 the basis is evaluated
// once per step on the shared pixel grid.
std::vector<ToyEpochMetrics> train_toy(AuvModel<float>& model, const std::vector<ToyImage>& images,
                                       const ToyTrainConfig& config, const ToyEpochCallback& on_epoch = {});

// Mean squared color error over every pixel and channel of every image.
double toy_reconstruction_mse(AuvModel<float>& model, const std::vector<ToyImage>& images);

// Per-pixel UV of one image ([S*S,2], row-major pixels).
Tensor<float> toy_uv_map(AuvModel<float>& model, const ToyImage& image);

}  // namespace auv
