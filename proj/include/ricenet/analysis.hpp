#pragma once

#include <filesystem>
#include <vector>

#include "ricenet/datacube.hpp"
#include "ricenet/net.hpp"
#include "ricenet/types.hpp"

namespace ricenet {

// Arithmetic mean of the member networks' softmax outputs. Evaluated as
// anchor + mean-of-differences so an ensemble of identical members
// reproduces the single model bit for bit.
Matrix ensemble_predict(std::vector<Network>& models,
                        const std::vector<Datacube>& cubes);

struct SaliencyMap {
  int height = 0;
  int width = 0;
  Image values; // max over spectral channels of |d score / d input|
};

// Gradient of the target class's pre-softmax score with respect to the
// max-normalized input, inference mode. target_class < 0 selects the
// predicted class.
SaliencyMap saliency_map(Network& net, const Datacube& cube,
                         int target_class = -1);

// 8-bit binary PGM (P5), min-max scaled to [0, 255].
void save_saliency_pgm(const SaliencyMap& map,
                       const std::filesystem::path& dest);
// Raw values, one CSV row per image row.
void save_saliency_csv(const SaliencyMap& map,
                       const std::filesystem::path& dest);

} // namespace ricenet
