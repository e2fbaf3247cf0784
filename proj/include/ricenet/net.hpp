#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ricenet/datacube.hpp"
#include "ricenet/types.hpp"

namespace ricenet {

// 4-D activation tensor stored as a RowMajor (n*h*w) x c matrix, so each row
// is one spatial position's channel vector and a Datacube maps in directly.
struct Batch {
  int n = 0, h = 0, w = 0, c = 0;
  SpectraMatrix values;

  static Batch zeros(int n, int h, int w, int c);
  double& at(int i, int r, int col, int ch) {
    return values((static_cast<Eigen::Index>(i) * h + r) * w + col, ch);
  }
  double at(int i, int r, int col, int ch) const {
    return values((static_cast<Eigen::Index>(i) * h + r) * w + col, ch);
  }
  bool same_shape(const Batch& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
};

Batch batch_from_cubes(const std::vector<const Datacube*>& cubes);
Batch batch_from_cubes(const std::vector<Datacube>& cubes);

struct ParamBlock {
  Vector values;
  Vector grads;

  explicit ParamBlock(Eigen::Index size = 0)
      : values(Vector::Zero(size)), grads(Vector::Zero(size)) {}
};

class Layer {
public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Batch forward(const Batch& x, bool train) = 0;
  // Consumes the cache left by the most recent forward.
  virtual Batch backward(const Batch& grad_out) = 0;
  virtual void collect(std::vector<ParamBlock*>& blocks);
  virtual int conv_count() const { return 0; }
  virtual void write_state(std::ostream& os) const;
  virtual void read_state(std::istream& is);
};

class Conv2d final : public Layer {
public:
  // Stride 1, "same" zero padding: pad_begin = (k - 1) / 2 on each axis.
  Conv2d(int kernel_h, int kernel_w, int in_channels, int out_channels);
  const char* kind() const override { return "conv2d"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;
  void collect(std::vector<ParamBlock*>& blocks) override;
  int conv_count() const override { return 1; }
  void init_he_normal(class Rng& rng);

  int kernel_h, kernel_w, in_channels, out_channels;
  ParamBlock weights; // (kh*kw*in_c) x out_c, row-major by (u, v, ci)
  ParamBlock bias;    // out_c

private:
  SpectraMatrix patches_; // im2col cache from the last forward
  int cached_n_ = 0, cached_h_ = 0, cached_w_ = 0;
};

class BatchNorm final : public Layer {
public:
  explicit BatchNorm(int channels, double momentum = 0.9,
                     double epsilon = 1e-5);
  const char* kind() const override { return "batchnorm"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;
  void collect(std::vector<ParamBlock*>& blocks) override;
  void write_state(std::ostream& os) const override;
  void read_state(std::istream& is) override;

  int channels;
  double momentum, epsilon;
  ParamBlock gamma; // scale, init 1
  ParamBlock beta;  // shift, init 0
  Vector running_mean;
  Vector running_var;
  bool initialized = false; // true after the first training-mode forward

private:
  SpectraMatrix x_hat_;
  Vector batch_inv_std_;
  SpectraMatrix centered_;
  bool cached_train_ = false;
};

class Swish final : public Layer {
public:
  const char* kind() const override { return "swish"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;

private:
  SpectraMatrix x_;
  int n_ = 0, h_ = 0, w_ = 0, c_ = 0;
};

class MaxPool2 final : public Layer {
public:
  const char* kind() const override { return "maxpool2"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;

private:
  std::vector<Eigen::Index> argmax_rows_; // per (output row, channel)
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, in_c_ = 0;
  int out_h_ = 0, out_w_ = 0;
};

class GlobalAvgPool final : public Layer {
public:
  const char* kind() const override { return "global_avg_pool"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;

private:
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

class Flatten final : public Layer {
public:
  const char* kind() const override { return "flatten"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;

private:
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

class Dense final : public Layer {
public:
  Dense(int in_features, int out_features);
  const char* kind() const override { return "dense"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;
  void collect(std::vector<ParamBlock*>& blocks) override;
  void init_he_normal(class Rng& rng);

  int in_features, out_features;
  ParamBlock weights; // in x out
  ParamBlock bias;    // out

private:
  SpectraMatrix x_;
};

class ResidualBegin final : public Layer {
public:
  const char* kind() const override { return "residual_begin"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;

  Batch saved;
  Batch pending_shortcut_grad;
  bool has_pending = false;
};

// Adds the begin-node input (optionally 1x1-projected) to the main path.
class ResidualEnd final : public Layer {
public:
  ResidualEnd(ResidualBegin* begin, int in_channels, int out_channels);
  const char* kind() const override { return "residual_end"; }
  Batch forward(const Batch& x, bool train) override;
  Batch backward(const Batch& grad_out) override;
  void collect(std::vector<ParamBlock*>& blocks) override;
  int conv_count() const override;
  void write_state(std::ostream& os) const override;
  void read_state(std::istream& is) override;

  ResidualBegin* begin;
  std::unique_ptr<Conv2d> projection;  // present iff channel counts differ
  std::unique_ptr<BatchNorm> projection_norm;
};

enum class Family { Vgg, Resnet, ResnetB };
Family parse_family(const std::string& s);
std::string to_string(Family family);

struct ArchConfig {
  Family family = Family::Vgg;
  std::vector<int> stage_widths;
  std::vector<int> blocks_per_stage;
  int head_hidden = 512;
  int num_classes = 2;
  int input_height = 0, input_width = 0, input_channels = 0;

  void validate() const;
};

class Network {
public:
  ArchConfig config;
  std::vector<std::unique_ptr<Layer>> layers;

  Batch forward_logits(const Batch& x, bool train);
  // Softmax probabilities, one row per sample.
  Matrix forward(const Batch& x, bool train);
  // grad_logits: d loss / d logits, one row per sample. Returns the gradient
  // with respect to the network input (used for saliency maps).
  Batch backward(const Matrix& grad_logits);

  std::vector<ParamBlock*> param_blocks();
  void zero_grads();
  long parameter_count();
  int conv_layer_count() const;

  // Parameters plus per-layer state (batch-norm running statistics); used
  // for early-stopping snapshots and as the checkpoint payload.
  void write_weights(std::ostream& os);
  void read_weights(std::istream& is);
};

Network build_network(const ArchConfig& config, std::uint64_t seed);

// Full-size configurations matching the published conv-layer counts
// (vgg 31, resnet 34, resnet-b 116).
ArchConfig reference_config(Family family, int num_classes, int bands,
                            int height, int width);
// Small configuration for fast end-to-end runs on synthetic data.
ArchConfig desk_config(Family family, int num_classes, int bands, int height,
                       int width);

Matrix softmax_rows(const Matrix& logits);
// Mean loss and gradient with respect to the logits ((p - onehot) / n).
std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& labels);

struct AdamHyper {
  double lr0 = 0.005;
  int batch_size = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay = 0.01;
  int epochs = 400;

  void validate() const;
  // Keras-legacy schedule: (lr0 / batch_size) / (1 + decay * t).
  double learning_rate(long t) const;
};

struct AdamState {
  std::vector<Vector> m;
  std::vector<Vector> v;
  long t = 0;
};

void adam_step(Network& net, AdamState& state, const AdamHyper& hyper);

void save_checkpoint(Network& net, const AdamState& adam,
                     const std::filesystem::path& dest);
Network load_checkpoint(const std::filesystem::path& src,
                        AdamState* adam = nullptr);

} // namespace ricenet
