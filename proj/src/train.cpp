#include "ricenet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ricenet/error.hpp"

namespace ricenet {

namespace {

constexpr std::uint64_t kAugmentStream = 0x617567ULL; // "aug"
constexpr std::uint64_t kEpochStream = 0x65706f6368ULL; // "epoch"
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL; // "split"

} // namespace

SplitPlan split_dataset(const std::vector<int>& labels, double train_frac,
                        double val_frac, double test_frac,
                        std::uint64_t seed) {
  for (double f : {train_frac, val_frac, test_frac})
    if (f < 0.0 || f > 1.0)
      throw_config("split_dataset: fractions must lie in [0, 1]");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw_config("split_dataset: fractions must sum to 1");
  if (labels.empty())
    throw_data("split_dataset: no samples");
  const int num_classes = *std::max_element(labels.begin(), labels.end()) + 1;

  SplitPlan plan;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(i);
    const auto n_c = static_cast<double>(members.size());
    if (members.size() < 3)
      throw_data("split_dataset: class " + std::to_string(c) +
                 " has fewer than 3 samples");
    const auto n_test = static_cast<std::size_t>(std::lround(test_frac * n_c));
    const auto n_val = static_cast<std::size_t>(std::lround(val_frac * n_c));
    if (n_test + n_val > members.size())
      throw_data("split_dataset: class " + std::to_string(c) +
                 " too small for the requested fractions");
    Rng rng = Rng::derive(seed, kSplitStream, static_cast<std::uint64_t>(c));
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < n_test)
        plan.test.push_back(members[i]);
      else if (i < n_test + n_val)
        plan.validation.push_back(members[i]);
      else
        plan.train.push_back(members[i]);
    }
  }
  return plan;
}

void AugmentParams::validate() const {
  if (max_shift_fraction < 0.0 || max_shift_fraction >= 0.5)
    throw_config("augment: max_shift_fraction must lie in [0, 0.5)");
}

Datacube augment(const Datacube& cube, const AugmentParams& params, Rng& rng) {
  params.validate();
  cube.validate();
  const bool hflip = params.allow_hflip && rng.coin();
  const bool vflip = params.allow_vflip && rng.coin();
  const int max_dr =
      static_cast<int>(std::floor(params.max_shift_fraction * cube.height));
  const int max_dc =
      static_cast<int>(std::floor(params.max_shift_fraction * cube.width));
  const int dr = rng.uniform_int(-max_dr, max_dr);
  const int dc = rng.uniform_int(-max_dc, max_dc);

  Datacube out = Datacube::zeros(cube.height, cube.width, cube.bands,
                                 cube.wavelength_start_nm,
                                 cube.wavelength_step_nm);
  for (int r = 0; r < cube.height; ++r) {
    const int sr = r - dr;
    if (sr < 0 || sr >= cube.height) continue;
    for (int c = 0; c < cube.width; ++c) {
      const int sc = c - dc;
      if (sc < 0 || sc >= cube.width) continue;
      const int fr = vflip ? cube.height - 1 - sr : sr;
      const int fc = hflip ? cube.width - 1 - sc : sc;
      out.values.row(static_cast<Eigen::Index>(r) * cube.width + c) =
          cube.values.row(static_cast<Eigen::Index>(fr) * cube.width + fc);
    }
  }
  return out;
}

LabeledCubes expand_training_set(const std::vector<Datacube>& cubes,
                                 const std::vector<int>& labels,
                                 const AugmentParams& params, int factor,
                                 std::uint64_t seed) {
  if (cubes.size() != labels.size())
    throw_data("expand_training_set: cube/label count mismatch");
  if (factor < 1)
    throw_config("expand_training_set: factor must be >= 1");
  LabeledCubes out;
  out.cubes.reserve(cubes.size() * static_cast<std::size_t>(factor));
  out.labels.reserve(out.cubes.capacity());
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    out.cubes.push_back(cubes[i]);
    out.labels.push_back(labels[i]);
    Rng rng = Rng::derive(seed, kAugmentStream, static_cast<std::uint64_t>(i));
    for (int k = 1; k < factor; ++k) {
      out.cubes.push_back(augment(cubes[i], params, rng));
      out.labels.push_back(labels[i]);
    }
  }
  return out;
}

namespace {

struct EvalResult {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

EvalResult evaluate_split(Network& net, const std::vector<Datacube>& cubes,
                          const std::vector<int>& labels) {
  if (cubes.empty()) return {};
  constexpr std::size_t kChunk = 32;
  double loss_sum = 0.0;
  long hits = 0;
  for (std::size_t start = 0; start < cubes.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, cubes.size() - start);
    std::vector<const Datacube*> chunk;
    std::vector<int> chunk_labels;
    for (std::size_t i = start; i < start + count; ++i) {
      chunk.push_back(&cubes[i]);
      chunk_labels.push_back(labels[i]);
    }
    const Batch logits =
        net.forward_logits(batch_from_cubes(chunk), /*train=*/false);
    const auto [loss, grad] = softmax_cross_entropy(logits.values, chunk_labels);
    loss_sum += loss * static_cast<double>(count);
    for (Eigen::Index row = 0; row < logits.values.rows(); ++row) {
      Eigen::Index best = 0;
      logits.values.row(row).maxCoeff(&best);
      if (static_cast<int>(best) == chunk_labels[static_cast<std::size_t>(row)])
        ++hits;
    }
  }
  EvalResult r;
  r.loss = loss_sum / static_cast<double>(cubes.size());
  r.accuracy = static_cast<double>(hits) / static_cast<double>(cubes.size());
  return r;
}

} // namespace

TrainResult train(Network& net, const std::vector<Datacube>& cubes,
                  const std::vector<int>& labels, const SplitPlan& plan,
                  const TrainConfig& cfg) {
  cfg.adam.validate();
  cfg.augment.validate();
  if (cubes.size() != labels.size())
    throw_data("train: cube/label count mismatch");
  if (plan.train.empty())
    throw_data("train: empty training split");
  for (const auto& part : {plan.train, plan.validation, plan.test})
    for (std::size_t idx : part)
      if (idx >= cubes.size())
        throw_data("train: split index out of range");
  if (cfg.early_stopping.enabled) {
    if (cfg.early_stopping.patience < 1)
      throw_config("train: early-stopping patience must be >= 1");
    if (plan.validation.empty())
      throw_config("train: early stopping requires a validation split");
  }

  std::vector<Datacube> train_cubes;
  std::vector<int> train_labels;
  for (std::size_t idx : plan.train) {
    train_cubes.push_back(normalize_max(cubes[idx]));
    train_labels.push_back(labels[idx]);
  }
  std::vector<Datacube> val_cubes;
  std::vector<int> val_labels;
  for (std::size_t idx : plan.validation) {
    val_cubes.push_back(normalize_max(cubes[idx]));
    val_labels.push_back(labels[idx]);
  }

  LabeledCubes expanded = expand_training_set(
      train_cubes, train_labels, cfg.augment, cfg.augment_factor, cfg.seed);

  AdamState adam;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::string best_weights;

  std::vector<std::size_t> order(expanded.cubes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.adam.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(cfg.seed, kEpochStream,
                                  static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    long hits = 0;
    const auto batch_size = static_cast<std::size_t>(cfg.adam.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      std::vector<const Datacube*> batch_cubes;
      std::vector<int> batch_labels;
      for (std::size_t i = start; i < start + count; ++i) {
        batch_cubes.push_back(&expanded.cubes[order[i]]);
        batch_labels.push_back(expanded.labels[order[i]]);
      }
      const Batch logits =
          net.forward_logits(batch_from_cubes(batch_cubes), /*train=*/true);
      const auto [loss, grad] =
          softmax_cross_entropy(logits.values, batch_labels);
      loss_sum += loss * static_cast<double>(count);
      for (Eigen::Index row = 0; row < logits.values.rows(); ++row) {
        Eigen::Index best = 0;
        logits.values.row(row).maxCoeff(&best);
        if (static_cast<int>(best) ==
            batch_labels[static_cast<std::size_t>(row)])
          ++hits;
      }
      net.zero_grads();
      net.backward(grad);
      adam_step(net, adam, cfg.adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_acc =
        static_cast<double>(hits) / static_cast<double>(order.size());
    const EvalResult val = evaluate_split(net, val_cubes, val_labels);
    stats.val_loss = val.loss;
    stats.val_acc = val.accuracy;
    result.history.push_back(stats);

    if (!val_cubes.empty() && val.loss < result.best_val_loss) {
      result.best_val_loss = val.loss;
      result.best_epoch = epoch;
      if (cfg.early_stopping.enabled) {
        std::ostringstream snapshot(std::ios::binary);
        net.write_weights(snapshot);
        best_weights = snapshot.str();
      }
    }
    if (cfg.early_stopping.enabled &&
        epoch - result.best_epoch >= cfg.early_stopping.patience) {
      result.stopped_early = true;
      break;
    }
  }

  if (cfg.early_stopping.enabled && !best_weights.empty()) {
    std::istringstream snapshot(best_weights, std::ios::binary);
    net.read_weights(snapshot);
  }
  return result;
}

Matrix predict_batch(Network& net, const std::vector<Datacube>& cubes) {
  if (cubes.empty())
    throw_data("predict_batch: no cubes");
  constexpr std::size_t kChunk = 32;
  Matrix probabilities(static_cast<Eigen::Index>(cubes.size()),
                       net.config.num_classes);
  for (std::size_t start = 0; start < cubes.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, cubes.size() - start);
    std::vector<Datacube> chunk;
    chunk.reserve(count);
    for (std::size_t i = start; i < start + count; ++i)
      chunk.push_back(normalize_max(cubes[i]));
    probabilities.middleRows(static_cast<Eigen::Index>(start),
                             static_cast<Eigen::Index>(count)) =
        net.forward(batch_from_cubes(chunk), /*train=*/false);
  }
  return probabilities;
}

void save_history_csv(const std::vector<EpochStats>& history,
                      const std::filesystem::path& dest) {
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[40];
  for (const EpochStats& e : history) {
    os << e.epoch;
    for (double v : {e.train_loss, e.train_acc, e.val_loss, e.val_acc}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  if (!os)
    throw_data("write failed: " + dest.string());
}

} // namespace ricenet
