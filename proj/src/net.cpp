#include "ricenet/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "ricenet/error.hpp"
#include "ricenet/rng.hpp"

namespace ricenet {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void write_raw(std::ostream& os, const void* data, std::size_t bytes) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void read_raw(std::istream& is, void* data, std::size_t bytes) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!is)
    throw_data("checkpoint: unexpected end of file");
}

template <typename T> void write_pod(std::ostream& os, T value) {
  write_raw(os, &value, sizeof(T));
}

template <typename T> T read_pod(std::istream& is) {
  T value;
  read_raw(is, &value, sizeof(T));
  return value;
}

void write_vector(std::ostream& os, const Vector& v) {
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  write_raw(os, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Vector read_vector(std::istream& is) {
  const auto size = read_pod<std::uint64_t>(is);
  Vector v(static_cast<Eigen::Index>(size));
  read_raw(is, v.data(), sizeof(double) * size);
  return v;
}

} // namespace

Batch Batch::zeros(int n, int h, int w, int c) {
  Batch b;
  b.n = n;
  b.h = h;
  b.w = w;
  b.c = c;
  b.values = SpectraMatrix::Zero(static_cast<Eigen::Index>(n) * h * w, c);
  return b;
}

Batch batch_from_cubes(const std::vector<const Datacube*>& cubes) {
  if (cubes.empty())
    throw_data("batch_from_cubes: empty batch");
  const Datacube& first = *cubes.front();
  Batch b = Batch::zeros(static_cast<int>(cubes.size()), first.height,
                         first.width, first.bands);
  const Eigen::Index pixels = first.values.rows();
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const Datacube& cube = *cubes[i];
    if (cube.height != first.height || cube.width != first.width ||
        cube.bands != first.bands)
      throw_data("batch_from_cubes: mixed cube shapes");
    b.values.middleRows(static_cast<Eigen::Index>(i) * pixels, pixels) =
        cube.values;
  }
  return b;
}

Batch batch_from_cubes(const std::vector<Datacube>& cubes) {
  std::vector<const Datacube*> ptrs;
  ptrs.reserve(cubes.size());
  for (const Datacube& c : cubes) ptrs.push_back(&c);
  return batch_from_cubes(ptrs);
}

void Layer::collect(std::vector<ParamBlock*>&) {}
void Layer::write_state(std::ostream&) const {}
void Layer::read_state(std::istream&) {}

// ---------------------------------------------------------------- Conv2d ---

Conv2d::Conv2d(int kernel_h, int kernel_w, int in_channels, int out_channels)
    : kernel_h(kernel_h), kernel_w(kernel_w), in_channels(in_channels),
      out_channels(out_channels),
      weights(static_cast<Eigen::Index>(kernel_h) * kernel_w * in_channels *
              out_channels),
      bias(out_channels) {
  if (kernel_h < 1 || kernel_w < 1 || in_channels < 1 || out_channels < 1)
    throw_config("conv2d: all dimensions must be positive");
}

void Conv2d::init_he_normal(Rng& rng) {
  const double fan_in = static_cast<double>(kernel_h) * kernel_w * in_channels;
  const double sigma = std::sqrt(2.0 / fan_in);
  for (Eigen::Index i = 0; i < weights.values.size(); ++i)
    weights.values(i) = sigma * rng.normal();
  bias.values.setZero();
}

Batch Conv2d::forward(const Batch& x, bool) {
  if (x.c != in_channels)
    throw_data("conv2d: input has " + std::to_string(x.c) +
               " channels, expected " + std::to_string(in_channels));
  const int pad_t = (kernel_h - 1) / 2;
  const int pad_l = (kernel_w - 1) / 2;
  const Eigen::Index patch_len =
      static_cast<Eigen::Index>(kernel_h) * kernel_w * in_channels;

  patches_ = SpectraMatrix::Zero(x.values.rows(), patch_len);
  for (int i = 0; i < x.n; ++i)
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) {
        const Eigen::Index out_row =
            (static_cast<Eigen::Index>(i) * x.h + r) * x.w + c;
        for (int u = 0; u < kernel_h; ++u) {
          const int rr = r + u - pad_t;
          if (rr < 0 || rr >= x.h) continue;
          for (int v = 0; v < kernel_w; ++v) {
            const int cc = c + v - pad_l;
            if (cc < 0 || cc >= x.w) continue;
            const Eigen::Index in_row =
                (static_cast<Eigen::Index>(i) * x.h + rr) * x.w + cc;
            patches_.block(out_row, (u * kernel_w + v) * in_channels, 1,
                           in_channels) = x.values.row(in_row);
          }
        }
      }
  cached_n_ = x.n;
  cached_h_ = x.h;
  cached_w_ = x.w;

  Eigen::Map<const Matrix> w(weights.values.data(), patch_len, out_channels);
  Batch out = Batch::zeros(x.n, x.h, x.w, out_channels);
  out.values = patches_ * w;
  out.values.rowwise() += bias.values.transpose();
  return out;
}

Batch Conv2d::backward(const Batch& grad_out) {
  if (grad_out.c != out_channels || grad_out.n != cached_n_ ||
      grad_out.h != cached_h_ || grad_out.w != cached_w_)
    throw_data("conv2d backward: gradient shape mismatch");
  const int pad_t = (kernel_h - 1) / 2;
  const int pad_l = (kernel_w - 1) / 2;
  const Eigen::Index patch_len =
      static_cast<Eigen::Index>(kernel_h) * kernel_w * in_channels;

  Eigen::Map<const Matrix> w(weights.values.data(), patch_len, out_channels);
  Eigen::Map<Matrix> gw(weights.grads.data(), patch_len, out_channels);
  gw += patches_.transpose() * grad_out.values;
  bias.grads += grad_out.values.colwise().sum().transpose();

  const SpectraMatrix grad_patches = grad_out.values * w.transpose();
  Batch gx = Batch::zeros(cached_n_, cached_h_, cached_w_, in_channels);
  for (int i = 0; i < cached_n_; ++i)
    for (int r = 0; r < cached_h_; ++r)
      for (int c = 0; c < cached_w_; ++c) {
        const Eigen::Index out_row =
            (static_cast<Eigen::Index>(i) * cached_h_ + r) * cached_w_ + c;
        for (int u = 0; u < kernel_h; ++u) {
          const int rr = r + u - pad_t;
          if (rr < 0 || rr >= cached_h_) continue;
          for (int v = 0; v < kernel_w; ++v) {
            const int cc = c + v - pad_l;
            if (cc < 0 || cc >= cached_w_) continue;
            const Eigen::Index in_row =
                (static_cast<Eigen::Index>(i) * cached_h_ + rr) * cached_w_ +
                cc;
            gx.values.row(in_row) += grad_patches.block(
                out_row, (u * kernel_w + v) * in_channels, 1, in_channels);
          }
        }
      }
  return gx;
}

void Conv2d::collect(std::vector<ParamBlock*>& blocks) {
  blocks.push_back(&weights);
  blocks.push_back(&bias);
}

// ------------------------------------------------------------- BatchNorm ---

BatchNorm::BatchNorm(int channels, double momentum, double epsilon)
    : channels(channels), momentum(momentum), epsilon(epsilon),
      gamma(channels), beta(channels), running_mean(Vector::Zero(channels)),
      running_var(Vector::Ones(channels)) {
  if (channels < 1)
    throw_config("batchnorm: channels must be positive");
  gamma.values.setOnes();
}

Batch BatchNorm::forward(const Batch& x, bool train) {
  if (x.c != channels)
    throw_data("batchnorm: channel mismatch");
  const Eigen::Index m = x.values.rows();
  Batch out = Batch::zeros(x.n, x.h, x.w, x.c);
  cached_train_ = train;

  if (train) {
    if (m < 2)
      throw_data("batchnorm: training mode needs at least 2 positions");
    const Vector mean = x.values.colwise().mean().transpose();
    centered_ = x.values.rowwise() - mean.transpose();
    const Vector var =
        centered_.array().square().colwise().mean().transpose();
    batch_inv_std_ = (var.array() + epsilon).rsqrt();
    x_hat_ = centered_.array().rowwise() * batch_inv_std_.transpose().array();
    running_mean = momentum * running_mean + (1.0 - momentum) * mean;
    running_var = momentum * running_var + (1.0 - momentum) * var;
    initialized = true;
  } else {
    if (!initialized)
      throw_numeric("batchnorm: inference requested before any training "
                    "update");
    const Vector inv_std = (running_var.array() + epsilon).rsqrt();
    batch_inv_std_ = inv_std;
    x_hat_ = (x.values.rowwise() - running_mean.transpose())
                 .array()
                 .rowwise() *
             inv_std.transpose().array();
  }
  out.values =
      (x_hat_.array().rowwise() * gamma.values.transpose().array()).matrix();
  out.values.rowwise() += beta.values.transpose();
  return out;
}

Batch BatchNorm::backward(const Batch& grad_out) {
  if (grad_out.c != channels || grad_out.values.rows() != x_hat_.rows())
    throw_data("batchnorm backward: gradient shape mismatch");
  const Eigen::Index m = grad_out.values.rows();
  Batch gx = Batch::zeros(grad_out.n, grad_out.h, grad_out.w, grad_out.c);

  gamma.grads += (grad_out.values.array() * x_hat_.array())
                     .colwise()
                     .sum()
                     .matrix()
                     .transpose();
  beta.grads += grad_out.values.colwise().sum().transpose();

  if (cached_train_) {
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int c = 0; c < channels; ++c) {
      const auto g_hat = grad_out.values.col(c).array() * gamma.values(c);
      const double sum_g = g_hat.sum();
      const double sum_gx = (g_hat * x_hat_.col(c).array()).sum();
      gx.values.col(c) =
          (batch_inv_std_(c) * inv_m) *
          (static_cast<double>(m) * g_hat - sum_g -
           x_hat_.col(c).array() * sum_gx)
              .matrix();
    }
  } else {
    for (int c = 0; c < channels; ++c)
      gx.values.col(c) =
          grad_out.values.col(c) * (gamma.values(c) * batch_inv_std_(c));
  }
  return gx;
}

void BatchNorm::collect(std::vector<ParamBlock*>& blocks) {
  blocks.push_back(&gamma);
  blocks.push_back(&beta);
}

void BatchNorm::write_state(std::ostream& os) const {
  write_pod<std::uint8_t>(os, initialized ? 1 : 0);
  write_vector(os, running_mean);
  write_vector(os, running_var);
}

void BatchNorm::read_state(std::istream& is) {
  initialized = read_pod<std::uint8_t>(is) != 0;
  running_mean = read_vector(is);
  running_var = read_vector(is);
  if (running_mean.size() != channels || running_var.size() != channels)
    throw_data("checkpoint: batchnorm state size mismatch");
}

// ----------------------------------------------------------------- Swish ---

Batch Swish::forward(const Batch& x, bool) {
  x_ = x.values;
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  c_ = x.c;
  Batch out = Batch::zeros(x.n, x.h, x.w, x.c);
  out.values = x.values.unaryExpr(
      [](double v) { return v * sigmoid(v); });
  return out;
}

Batch Swish::backward(const Batch& grad_out) {
  if (grad_out.values.rows() != x_.rows() || grad_out.c != c_)
    throw_data("swish backward: gradient shape mismatch");
  Batch gx = Batch::zeros(n_, h_, w_, c_);
  gx.values = grad_out.values.array() * x_.unaryExpr([](double v) {
                                            const double s = sigmoid(v);
                                            return s * (1.0 + v * (1.0 - s));
                                          }).array();
  return gx;
}

// -------------------------------------------------------------- MaxPool2 ---

Batch MaxPool2::forward(const Batch& x, bool) {
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  in_c_ = x.c;
  out_h_ = (x.h + 1) / 2;
  out_w_ = (x.w + 1) / 2;
  Batch out = Batch::zeros(x.n, out_h_, out_w_, x.c);
  argmax_rows_.assign(
      static_cast<std::size_t>(out.values.rows()) * x.c, 0);

  for (int i = 0; i < x.n; ++i)
    for (int r = 0; r < out_h_; ++r)
      for (int c = 0; c < out_w_; ++c) {
        const Eigen::Index out_row =
            (static_cast<Eigen::Index>(i) * out_h_ + r) * out_w_ + c;
        for (int ch = 0; ch < x.c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_row = 0;
          for (int u = 0; u < 2; ++u)
            for (int v = 0; v < 2; ++v) {
              // Odd dims are padded by edge replication (clamped index).
              const int rr = std::min(2 * r + u, x.h - 1);
              const int cc = std::min(2 * c + v, x.w - 1);
              const Eigen::Index in_row =
                  (static_cast<Eigen::Index>(i) * x.h + rr) * x.w + cc;
              if (x.values(in_row, ch) > best) {
                best = x.values(in_row, ch);
                best_row = in_row;
              }
            }
          out.values(out_row, ch) = best;
          argmax_rows_[static_cast<std::size_t>(out_row) * x.c + ch] = best_row;
        }
      }
  return out;
}

Batch MaxPool2::backward(const Batch& grad_out) {
  if (grad_out.h != out_h_ || grad_out.w != out_w_ || grad_out.c != in_c_ ||
      grad_out.n != in_n_)
    throw_data("maxpool backward: gradient shape mismatch");
  Batch gx = Batch::zeros(in_n_, in_h_, in_w_, in_c_);
  for (Eigen::Index out_row = 0; out_row < grad_out.values.rows(); ++out_row)
    for (int ch = 0; ch < in_c_; ++ch)
      gx.values(argmax_rows_[static_cast<std::size_t>(out_row) * in_c_ + ch],
                ch) += grad_out.values(out_row, ch);
  return gx;
}

// --------------------------------------------------------- GlobalAvgPool ---

Batch GlobalAvgPool::forward(const Batch& x, bool) {
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  in_c_ = x.c;
  const Eigen::Index pixels = static_cast<Eigen::Index>(x.h) * x.w;
  Batch out = Batch::zeros(x.n, 1, 1, x.c);
  for (int i = 0; i < x.n; ++i)
    out.values.row(i) =
        x.values.middleRows(static_cast<Eigen::Index>(i) * pixels, pixels)
            .colwise()
            .mean();
  return out;
}

Batch GlobalAvgPool::backward(const Batch& grad_out) {
  if (grad_out.n != in_n_ || grad_out.h != 1 || grad_out.w != 1 ||
      grad_out.c != in_c_)
    throw_data("global_avg_pool backward: gradient shape mismatch");
  const Eigen::Index pixels = static_cast<Eigen::Index>(in_h_) * in_w_;
  Batch gx = Batch::zeros(in_n_, in_h_, in_w_, in_c_);
  const double inv = 1.0 / static_cast<double>(pixels);
  for (int i = 0; i < in_n_; ++i)
    gx.values.middleRows(static_cast<Eigen::Index>(i) * pixels, pixels) =
        (grad_out.values.row(i) * inv).replicate(pixels, 1);
  return gx;
}

// ----------------------------------------------------------------Flatten ---

Batch Flatten::forward(const Batch& x, bool) {
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  in_c_ = x.c;
  const Eigen::Index flat = static_cast<Eigen::Index>(x.h) * x.w * x.c;
  Batch out = Batch::zeros(x.n, 1, 1, static_cast<int>(flat));
  for (int i = 0; i < x.n; ++i)
    out.values.row(i) = Eigen::Map<const Eigen::RowVectorXd>(
        x.values.data() + static_cast<Eigen::Index>(i) * flat, flat);
  return out;
}

Batch Flatten::backward(const Batch& grad_out) {
  const Eigen::Index flat = static_cast<Eigen::Index>(in_h_) * in_w_ * in_c_;
  if (grad_out.n != in_n_ || grad_out.c != flat || grad_out.h != 1)
    throw_data("flatten backward: gradient shape mismatch");
  Batch gx = Batch::zeros(in_n_, in_h_, in_w_, in_c_);
  for (int i = 0; i < in_n_; ++i)
    Eigen::Map<Eigen::RowVectorXd>(
        gx.values.data() + static_cast<Eigen::Index>(i) * flat, flat) =
        grad_out.values.row(i);
  return gx;
}

// ----------------------------------------------------------------- Dense ---

Dense::Dense(int in_features, int out_features)
    : in_features(in_features), out_features(out_features),
      weights(static_cast<Eigen::Index>(in_features) * out_features),
      bias(out_features) {
  if (in_features < 1 || out_features < 1)
    throw_config("dense: feature counts must be positive");
}

void Dense::init_he_normal(Rng& rng) {
  const double sigma = std::sqrt(2.0 / static_cast<double>(in_features));
  for (Eigen::Index i = 0; i < weights.values.size(); ++i)
    weights.values(i) = sigma * rng.normal();
  bias.values.setZero();
}

Batch Dense::forward(const Batch& x, bool) {
  if (x.h != 1 || x.w != 1 || x.c != in_features)
    throw_data("dense: expected n x 1 x 1 x " + std::to_string(in_features) +
               " input");
  x_ = x.values;
  Eigen::Map<const Matrix> w(weights.values.data(), in_features, out_features);
  Batch out = Batch::zeros(x.n, 1, 1, out_features);
  out.values = x.values * w;
  out.values.rowwise() += bias.values.transpose();
  return out;
}

Batch Dense::backward(const Batch& grad_out) {
  if (grad_out.c != out_features || grad_out.values.rows() != x_.rows())
    throw_data("dense backward: gradient shape mismatch");
  Eigen::Map<const Matrix> w(weights.values.data(), in_features, out_features);
  Eigen::Map<Matrix> gw(weights.grads.data(), in_features, out_features);
  gw += x_.transpose() * grad_out.values;
  bias.grads += grad_out.values.colwise().sum().transpose();
  Batch gx = Batch::zeros(grad_out.n, 1, 1, in_features);
  gx.values = grad_out.values * w.transpose();
  return gx;
}

void Dense::collect(std::vector<ParamBlock*>& blocks) {
  blocks.push_back(&weights);
  blocks.push_back(&bias);
}

// -------------------------------------------------------------- Residual ---

Batch ResidualBegin::forward(const Batch& x, bool) {
  saved = x;
  has_pending = false;
  return x;
}

Batch ResidualBegin::backward(const Batch& grad_out) {
  if (!has_pending)
    throw_numeric("residual_begin: backward without matching residual_end");
  Batch gx = grad_out;
  gx.values += pending_shortcut_grad.values;
  has_pending = false;
  return gx;
}

ResidualEnd::ResidualEnd(ResidualBegin* begin, int in_channels,
                         int out_channels)
    : begin(begin) {
  if (in_channels != out_channels) {
    projection = std::make_unique<Conv2d>(1, 1, in_channels, out_channels);
    projection_norm = std::make_unique<BatchNorm>(out_channels);
  }
}

Batch ResidualEnd::forward(const Batch& x, bool train) {
  if (begin->saved.n != x.n || begin->saved.h != x.h || begin->saved.w != x.w)
    throw_data("residual_end: shortcut spatial dims do not match main path");
  Batch shortcut;
  if (projection)
    shortcut = projection_norm->forward(projection->forward(begin->saved,
                                                            train),
                                        train);
  else
    shortcut = begin->saved;
  if (!shortcut.same_shape(x))
    throw_data("residual_end: shortcut channel count does not match");
  Batch out = x;
  out.values += shortcut.values;
  return out;
}

Batch ResidualEnd::backward(const Batch& grad_out) {
  if (projection)
    begin->pending_shortcut_grad =
        projection->backward(projection_norm->backward(grad_out));
  else
    begin->pending_shortcut_grad = grad_out;
  begin->has_pending = true;
  return grad_out;
}

void ResidualEnd::collect(std::vector<ParamBlock*>& blocks) {
  if (projection) {
    projection->collect(blocks);
    projection_norm->collect(blocks);
  }
}

int ResidualEnd::conv_count() const { return projection ? 1 : 0; }

void ResidualEnd::write_state(std::ostream& os) const {
  if (projection_norm) projection_norm->write_state(os);
}

void ResidualEnd::read_state(std::istream& is) {
  if (projection_norm) projection_norm->read_state(is);
}

// --------------------------------------------------------------- Network ---

Family parse_family(const std::string& s) {
  if (s == "vgg") return Family::Vgg;
  if (s == "resnet") return Family::Resnet;
  if (s == "resnet-b") return Family::ResnetB;
  throw_config("unknown architecture family '" + s +
               "' (expected vgg, resnet or resnet-b)");
}

std::string to_string(Family family) {
  switch (family) {
  case Family::Vgg: return "vgg";
  case Family::Resnet: return "resnet";
  case Family::ResnetB: return "resnet-b";
  }
  return "?";
}

void ArchConfig::validate() const {
  if (stage_widths.empty() || stage_widths.size() != blocks_per_stage.size())
    throw_config("arch: stage_widths and blocks_per_stage must be non-empty "
                 "and equal-length");
  for (int w : stage_widths)
    if (w < 1) throw_config("arch: stage widths must be positive");
  for (int b : blocks_per_stage)
    if (b < 1) throw_config("arch: block counts must be positive");
  if (head_hidden < 1)
    throw_config("arch: head_hidden must be positive");
  if (num_classes < 2)
    throw_config("arch: need at least 2 classes");
  if (input_height < 1 || input_width < 1 || input_channels < 1)
    throw_config("arch: input dimensions must be positive");
  int h = input_height, w = input_width;
  for (std::size_t s = 0; s + 1 < stage_widths.size(); ++s) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  if (h < 2 || w < 2)
    throw_config("arch: too many pooling stages for the input size (final "
                 "feature map " +
                 std::to_string(h) + "x" + std::to_string(w) + ")");
}

Batch Network::forward_logits(const Batch& x, bool train) {
  if (x.c != config.input_channels || x.h != config.input_height ||
      x.w != config.input_width)
    throw_data("network: input shape " + std::to_string(x.h) + "x" +
               std::to_string(x.w) + "x" + std::to_string(x.c) +
               " does not match configured " +
               std::to_string(config.input_height) + "x" +
               std::to_string(config.input_width) + "x" +
               std::to_string(config.input_channels));
  Batch cur = x;
  for (auto& layer : layers) cur = layer->forward(cur, train);
  if (cur.h != 1 || cur.w != 1 || cur.c != config.num_classes)
    throw_numeric("network: head produced unexpected shape");
  return cur;
}

Matrix Network::forward(const Batch& x, bool train) {
  return softmax_rows(forward_logits(x, train).values);
}

Batch Network::backward(const Matrix& grad_logits) {
  Batch grad = Batch::zeros(static_cast<int>(grad_logits.rows()), 1, 1,
                            config.num_classes);
  grad.values = grad_logits;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    grad = (*it)->backward(grad);
  return grad;
}

std::vector<ParamBlock*> Network::param_blocks() {
  std::vector<ParamBlock*> blocks;
  for (auto& layer : layers) layer->collect(blocks);
  return blocks;
}

void Network::zero_grads() {
  for (ParamBlock* block : param_blocks()) block->grads.setZero();
}

long Network::parameter_count() {
  long total = 0;
  for (ParamBlock* block : param_blocks())
    total += static_cast<long>(block->values.size());
  return total;
}

int Network::conv_layer_count() const {
  int total = 0;
  for (const auto& layer : layers) total += layer->conv_count();
  return total;
}

void Network::write_weights(std::ostream& os) {
  std::vector<ParamBlock*> blocks = param_blocks();
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(blocks.size()));
  for (ParamBlock* block : blocks) write_vector(os, block->values);
  for (const auto& layer : layers) layer->write_state(os);
}

void Network::read_weights(std::istream& is) {
  std::vector<ParamBlock*> blocks = param_blocks();
  const auto block_count = read_pod<std::uint64_t>(is);
  if (block_count != blocks.size())
    throw_data("weights: parameter block count mismatch");
  for (ParamBlock* block : blocks) {
    Vector values = read_vector(is);
    if (values.size() != block->values.size())
      throw_data("weights: parameter block size mismatch");
    block->values = std::move(values);
  }
  for (const auto& layer : layers) layer->read_state(is);
}

// --------------------------------------------------------------- builder ---

namespace {

Conv2d* add_conv(Network& net, int kh, int kw, int in_c, int out_c, Rng& rng) {
  auto conv = std::make_unique<Conv2d>(kh, kw, in_c, out_c);
  conv->init_he_normal(rng);
  Conv2d* raw = conv.get();
  net.layers.push_back(std::move(conv));
  return raw;
}

void add_bn_swish(Network& net, int channels) {
  net.layers.push_back(std::make_unique<BatchNorm>(channels));
  net.layers.push_back(std::make_unique<Swish>());
}

// conv-bn-swish unit used by the stem and the VGG stages.
int add_plain_unit(Network& net, int in_c, int out_c, Rng& rng) {
  add_conv(net, 3, 3, in_c, out_c, rng);
  add_bn_swish(net, out_c);
  return out_c;
}

int add_resnet_block(Network& net, int in_c, int width, Rng& rng) {
  auto begin = std::make_unique<ResidualBegin>();
  ResidualBegin* begin_raw = begin.get();
  net.layers.push_back(std::move(begin));
  add_conv(net, 3, 3, in_c, width, rng);
  add_bn_swish(net, width);
  add_conv(net, 3, 3, width, width, rng);
  net.layers.push_back(std::make_unique<BatchNorm>(width));
  auto end = std::make_unique<ResidualEnd>(begin_raw, in_c, width);
  if (end->projection) end->projection->init_he_normal(rng);
  net.layers.push_back(std::move(end));
  net.layers.push_back(std::make_unique<Swish>());
  return width;
}

int add_bottleneck_block(Network& net, int in_c, int mid, Rng& rng) {
  const int out_c = 4 * mid;
  auto begin = std::make_unique<ResidualBegin>();
  ResidualBegin* begin_raw = begin.get();
  net.layers.push_back(std::move(begin));
  add_conv(net, 1, 1, in_c, mid, rng);
  add_bn_swish(net, mid);
  add_conv(net, 3, 3, mid, mid, rng);
  add_bn_swish(net, mid);
  add_conv(net, 1, 1, mid, out_c, rng);
  net.layers.push_back(std::make_unique<BatchNorm>(out_c));
  auto end = std::make_unique<ResidualEnd>(begin_raw, in_c, out_c);
  if (end->projection) end->projection->init_he_normal(rng);
  net.layers.push_back(std::move(end));
  net.layers.push_back(std::make_unique<Swish>());
  return out_c;
}

} // namespace

Network build_network(const ArchConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config = config;
  Rng rng = Rng::derive(seed, 0x6e6574ULL); // "net" stream tag

  int cur = add_plain_unit(net, config.input_channels, config.stage_widths[0],
                           rng); // stem
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const int width = config.stage_widths[s];
    for (int b = 0; b < config.blocks_per_stage[s]; ++b) {
      switch (config.family) {
      case Family::Vgg:
        cur = add_plain_unit(net, cur, width, rng);
        break;
      case Family::Resnet:
        cur = add_resnet_block(net, cur, width, rng);
        break;
      case Family::ResnetB:
        cur = add_bottleneck_block(net, cur, width, rng);
        break;
      }
    }
    if (s + 1 < config.stage_widths.size())
      net.layers.push_back(std::make_unique<MaxPool2>());
  }

  net.layers.push_back(std::make_unique<GlobalAvgPool>());
  auto hidden = std::make_unique<Dense>(cur, config.head_hidden);
  hidden->init_he_normal(rng);
  net.layers.push_back(std::move(hidden));
  net.layers.push_back(std::make_unique<Swish>());
  auto out = std::make_unique<Dense>(config.head_hidden, config.num_classes);
  out->init_he_normal(rng);
  net.layers.push_back(std::move(out));
  return net;
}

ArchConfig reference_config(Family family, int num_classes, int bands,
                            int height, int width) {
  ArchConfig cfg;
  cfg.family = family;
  cfg.num_classes = num_classes;
  cfg.input_channels = bands;
  cfg.input_height = height;
  cfg.input_width = width;
  switch (family) {
  case Family::Vgg: // stem + 30 stage convs = 31
    cfg.stage_widths = {64, 128, 256, 512, 512};
    cfg.blocks_per_stage = {5, 5, 6, 7, 7};
    cfg.head_hidden = 512;
    break;
  case Family::Resnet: // stem + 2*15 + 3 projections = 34
    cfg.stage_widths = {64, 128, 256, 512};
    cfg.blocks_per_stage = {2, 3, 4, 6};
    cfg.head_hidden = 512;
    break;
  case Family::ResnetB: // stem + 3*37 + 4 projections = 116
    cfg.stage_widths = {64, 128, 256, 512};
    cfg.blocks_per_stage = {6, 12, 17, 2};
    cfg.head_hidden = 1024;
    break;
  }
  return cfg;
}

ArchConfig desk_config(Family family, int num_classes, int bands, int height,
                       int width) {
  ArchConfig cfg;
  cfg.family = family;
  cfg.num_classes = num_classes;
  cfg.input_channels = bands;
  cfg.input_height = height;
  cfg.input_width = width;
  cfg.head_hidden = 32;
  switch (family) {
  case Family::Vgg:
    cfg.stage_widths = {12, 24};
    cfg.blocks_per_stage = {2, 2};
    break;
  case Family::Resnet:
    cfg.stage_widths = {12, 24};
    cfg.blocks_per_stage = {1, 1};
    break;
  case Family::ResnetB:
    cfg.stage_widths = {6, 12};
    cfg.blocks_per_stage = {1, 1};
    break;
  }
  return cfg;
}

// ------------------------------------------------------------------ loss ---

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::pair<double, Matrix> softmax_cross_entropy(
    const Matrix& logits, const std::vector<int>& labels) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw_data("softmax_cross_entropy: label count mismatch");
  double loss = 0.0;
  Matrix grad(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= logits.cols())
      throw_data("softmax_cross_entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - mx;
    const double log_sum = std::log(shifted.array().exp().sum());
    loss -= shifted(label) - log_sum;
    grad.row(i) = (shifted.array() - log_sum).exp();
    grad(i, label) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return {loss * inv_n, grad * inv_n};
}

// ------------------------------------------------------------------ adam ---

void AdamHyper::validate() const {
  if (!(lr0 > 0.0))
    throw_config("adam: lr0 must be positive");
  if (batch_size < 1)
    throw_config("adam: batch_size must be >= 1");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw_config("adam: betas must lie in [0, 1)");
  if (!(epsilon > 0.0))
    throw_config("adam: epsilon must be positive");
  if (decay < 0.0)
    throw_config("adam: decay must be non-negative");
  if (epochs < 1)
    throw_config("adam: epochs must be >= 1");
}

double AdamHyper::learning_rate(long t) const {
  return (lr0 / batch_size) / (1.0 + decay * static_cast<double>(t));
}

void adam_step(Network& net, AdamState& state, const AdamHyper& hyper) {
  hyper.validate();
  std::vector<ParamBlock*> blocks = net.param_blocks();
  if (state.m.empty()) {
    for (ParamBlock* block : blocks) {
      state.m.push_back(Vector::Zero(block->values.size()));
      state.v.push_back(Vector::Zero(block->values.size()));
    }
  }
  if (state.m.size() != blocks.size())
    throw_data("adam: optimizer state does not match network");

  state.t += 1;
  const double lr = hyper.learning_rate(state.t);
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Vector& g = blocks[k]->grads;
    state.m[k] = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * g;
    state.v[k] = hyper.beta2 * state.v[k].eval() +
                 (1.0 - hyper.beta2) * g.array().square().matrix();
    blocks[k]->values.array() -=
        lr * (state.m[k].array() / bc1) /
        ((state.v[k].array() / bc2).sqrt() + hyper.epsilon);
  }
}

// ------------------------------------------------------------ checkpoint ---

namespace {
constexpr char kCheckpointMagic[4] = {'R', 'N', 'C', 'P'};
}

void save_checkpoint(Network& net, const AdamState& adam,
                     const std::filesystem::path& dest) {
  std::ofstream os(dest, std::ios::binary);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  write_raw(os, kCheckpointMagic, 4);
  write_pod<std::uint32_t>(os, 1); // version

  const ArchConfig& cfg = net.config;
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.family));
  write_pod<std::uint32_t>(os,
                           static_cast<std::uint32_t>(cfg.stage_widths.size()));
  for (int w : cfg.stage_widths) write_pod<std::int32_t>(os, w);
  for (int b : cfg.blocks_per_stage) write_pod<std::int32_t>(os, b);
  write_pod<std::int32_t>(os, cfg.head_hidden);
  write_pod<std::int32_t>(os, cfg.num_classes);
  write_pod<std::int32_t>(os, cfg.input_height);
  write_pod<std::int32_t>(os, cfg.input_width);
  write_pod<std::int32_t>(os, cfg.input_channels);

  std::vector<ParamBlock*> blocks = net.param_blocks();
  net.write_weights(os);

  const bool has_adam = !adam.m.empty();
  write_pod<std::uint8_t>(os, has_adam ? 1 : 0);
  if (has_adam) {
    if (adam.m.size() != blocks.size() || adam.v.size() != blocks.size())
      throw_data("checkpoint: adam state does not match network");
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(adam.t));
    for (const Vector& m : adam.m) write_vector(os, m);
    for (const Vector& v : adam.v) write_vector(os, v);
  }
  if (!os)
    throw_data("write failed: " + dest.string());
}

Network load_checkpoint(const std::filesystem::path& src, AdamState* adam) {
  std::ifstream is(src, std::ios::binary);
  if (!is)
    throw_data("cannot open: " + src.string());
  char magic[4];
  read_raw(is, magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw_data("checkpoint: bad magic in " + src.string());
  if (read_pod<std::uint32_t>(is) != 1)
    throw_data("checkpoint: unsupported version");

  ArchConfig cfg;
  const auto family = read_pod<std::uint32_t>(is);
  if (family > 2)
    throw_data("checkpoint: invalid architecture family");
  cfg.family = static_cast<Family>(family);
  const auto n_stages = read_pod<std::uint32_t>(is);
  if (n_stages == 0 || n_stages > 64)
    throw_data("checkpoint: implausible stage count");
  cfg.stage_widths.resize(n_stages);
  cfg.blocks_per_stage.resize(n_stages);
  for (auto& w : cfg.stage_widths) w = read_pod<std::int32_t>(is);
  for (auto& b : cfg.blocks_per_stage) b = read_pod<std::int32_t>(is);
  cfg.head_hidden = read_pod<std::int32_t>(is);
  cfg.num_classes = read_pod<std::int32_t>(is);
  cfg.input_height = read_pod<std::int32_t>(is);
  cfg.input_width = read_pod<std::int32_t>(is);
  cfg.input_channels = read_pod<std::int32_t>(is);

  Network net = build_network(cfg, 0);
  std::vector<ParamBlock*> blocks = net.param_blocks();
  net.read_weights(is);

  const bool has_adam = read_pod<std::uint8_t>(is) != 0;
  if (adam) {
    adam->m.clear();
    adam->v.clear();
    adam->t = 0;
  }
  if (has_adam) {
    const auto t = read_pod<std::uint64_t>(is);
    std::vector<Vector> m, v;
    for (std::size_t k = 0; k < blocks.size(); ++k) m.push_back(read_vector(is));
    for (std::size_t k = 0; k < blocks.size(); ++k) v.push_back(read_vector(is));
    if (adam) {
      adam->t = static_cast<long>(t);
      adam->m = std::move(m);
      adam->v = std::move(v);
    }
  }
  return net;
}

} // namespace ricenet
