#include "ricenet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ricenet/error.hpp"
#include "ricenet/train.hpp"

namespace ricenet {

Matrix ensemble_predict(std::vector<Network>& models,
                        const std::vector<Datacube>& cubes) {
  if (models.empty())
    throw_data("ensemble_predict: need at least one model");
  for (const Network& model : models)
    if (model.config.num_classes != models.front().config.num_classes)
      throw_data("ensemble_predict: member class counts differ");

  const Matrix anchor = predict_batch(models.front(), cubes);
  if (models.size() == 1) return anchor;
  Matrix delta_sum = Matrix::Zero(anchor.rows(), anchor.cols());
  for (std::size_t k = 1; k < models.size(); ++k)
    delta_sum += predict_batch(models[k], cubes) - anchor;
  return anchor + delta_sum / static_cast<double>(models.size());
}

SaliencyMap saliency_map(Network& net, const Datacube& cube,
                         int target_class) {
  if (target_class >= net.config.num_classes)
    throw_data("saliency_map: target class out of range");
  const Datacube normalized = normalize_max(cube);
  const Batch input = batch_from_cubes({&normalized});
  const Batch logits = net.forward_logits(input, /*train=*/false);

  int target = target_class;
  if (target < 0) {
    Eigen::Index best = 0;
    logits.values.row(0).maxCoeff(&best);
    target = static_cast<int>(best);
  }

  Matrix grad_logits = Matrix::Zero(1, net.config.num_classes);
  grad_logits(0, target) = 1.0; // d(score_target) / d(logits)
  net.zero_grads();
  const Batch grad_input = net.backward(grad_logits);

  SaliencyMap map;
  map.height = cube.height;
  map.width = cube.width;
  map.values = Image(cube.height, cube.width);
  for (int r = 0; r < cube.height; ++r)
    for (int c = 0; c < cube.width; ++c)
      map.values(r, c) =
          grad_input.values.row(static_cast<Eigen::Index>(r) * cube.width + c)
              .cwiseAbs()
              .maxCoeff();
  return map;
}

void save_saliency_pgm(const SaliencyMap& map,
                       const std::filesystem::path& dest) {
  std::ofstream os(dest, std::ios::binary);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  const double lo = map.values.minCoeff();
  const double hi = map.values.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c) {
      const auto byte = static_cast<unsigned char>(
          std::lround((map.values(r, c) - lo) * scale));
      os.put(static_cast<char>(byte));
    }
  if (!os)
    throw_data("write failed: " + dest.string());
}

void save_saliency_csv(const SaliencyMap& map,
                       const std::filesystem::path& dest) {
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  char buf[40];
  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", map.values(r, c));
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
  if (!os)
    throw_data("write failed: " + dest.string());
}

} // namespace ricenet
