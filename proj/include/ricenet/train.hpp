#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ricenet/datacube.hpp"
#include "ricenet/net.hpp"
#include "ricenet/rng.hpp"

namespace ricenet {

struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Stratified: per class, test = round(test_frac * n_c), val = round(val_frac
// * n_c), remainder to train; membership by seeded within-class shuffle.
SplitPlan split_dataset(const std::vector<int>& labels, double train_frac,
                        double val_frac, double test_frac, std::uint64_t seed);

struct AugmentParams {
  bool allow_hflip = true;
  bool allow_vflip = true;
  double max_shift_fraction = 0.04;

  void validate() const;
};

// Horizontal/vertical flip each with probability 1/2 (when allowed), then an
// integer shift drawn from [-floor(f*dim), floor(f*dim)] per axis with the
// vacated band zero-filled. The spectral axis is untouched.
Datacube augment(const Datacube& cube, const AugmentParams& params, Rng& rng);

struct LabeledCubes {
  std::vector<Datacube> cubes;
  std::vector<int> labels;
};

// Originals plus (factor - 1) augmented variants per cube, grouped by source.
LabeledCubes expand_training_set(const std::vector<Datacube>& cubes,
                                 const std::vector<int>& labels,
                                 const AugmentParams& params, int factor,
                                 std::uint64_t seed);

struct EarlyStopping {
  bool enabled = false;
  int patience = 10;
};

struct TrainConfig {
  AdamHyper adam;
  AugmentParams augment;
  int augment_factor = 11;
  EarlyStopping early_stopping;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0; // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;        // 1-based epoch of the lowest validation loss
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

// Normalizes cubes internally, pre-expands the training split by
// augmentation, then runs seeded-shuffle epochs of Adam updates. With early
// stopping enabled, training halts after `patience` epochs without a new
// validation-loss minimum and the best-epoch weights are restored.
TrainResult train(Network& net, const std::vector<Datacube>& cubes,
                  const std::vector<int>& labels, const SplitPlan& plan,
                  const TrainConfig& cfg);

// Inference-mode class probabilities on max-normalized cubes.
Matrix predict_batch(Network& net, const std::vector<Datacube>& cubes);

void save_history_csv(const std::vector<EpochStats>& history,
                      const std::filesystem::path& dest);

} // namespace ricenet
