#pragma once

// Minimal reverse-mode engine for the separable-convolution residual
// denoiser: each op caches what its backward pass needs and accumulates
// parameter gradients into a shared ParameterStore.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "difiv/aligned.hpp"

namespace difiv::nn {

/// Channel-major activation map (channels x rows x cols).
struct Tensor {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  AlignedVector data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t r, std::size_t w, double fill = 0.0)
      : channels(c), rows(r), cols(w), data(c * r * w, fill) {}

  std::size_t pixels() const { return rows * cols; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && rows == o.rows && cols == o.cols;
  }
  std::span<double> channel(std::size_t c) { return std::span(data).subspan(c * pixels(), pixels()); }
  std::span<const double> channel(std::size_t c) const {
    return std::span(data).subspan(c * pixels(), pixels());
  }
  // Reallocates only when the element count changes.
  void reshape(std::size_t c, std::size_t r, std::size_t w);
};

enum class Mode { kTrain, kEval };

struct ParamRef {
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Flat storage for every trainable value and its gradient.
class ParameterStore {
 public:
  ParamRef allocate(std::size_t count);
  std::span<double> values(ParamRef r) { return std::span(values_).subspan(r.offset, r.count); }
  std::span<const double> values(ParamRef r) const {
    return std::span(values_).subspan(r.offset, r.count);
  }
  std::span<double> grads(ParamRef r) { return std::span(grads_).subspan(r.offset, r.count); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  std::size_t size() const { return values_.size(); }
  void zero_grad();

 private:
  AlignedVector values_;
  AlignedVector grads_;
};

// 3x3 per-channel correlation, zero padding, no bias.
struct DepthwiseConv3x3 {
  std::size_t channels = 0;
  ParamRef weight;
  Tensor input;

  DepthwiseConv3x3() = default;
  DepthwiseConv3x3(std::size_t c, ParameterStore& store);
  void forward(const Tensor& x, Tensor& y, const ParameterStore& store);
  // Accumulates weight gradients; writes dL/dx into grad_in.
  void backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store) const;
};

// 1x1 convolution across channels with bias: y = W x + b per pixel.
struct PointwiseConv {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  ParamRef weight;  // out x in, row-major
  ParamRef bias;
  Tensor input;

  PointwiseConv() = default;
  PointwiseConv(std::size_t in, std::size_t out, ParameterStore& store);
  void forward(const Tensor& x, Tensor& y, const ParameterStore& store);
  void backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store) const;
};

// Per-channel batch normalization over the spatial extent of one image.
// Training mode normalizes with the call's own statistics; evaluation mode
// uses running averages updated with `momentum` weight on the old value.
struct BatchNorm {
  std::size_t channels = 0;
  ParamRef gamma;
  ParamRef beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  Mode cached_mode = Mode::kEval;
  Tensor xhat;
  std::vector<double> inv_std;

  BatchNorm() = default;
  BatchNorm(std::size_t c, ParameterStore& store);
  void forward(const Tensor& x, Tensor& y, const ParameterStore& store, Mode mode,
               bool update_running_stats);
  void backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store) const;
};

struct Relu {
  Tensor output;
  void forward(const Tensor& x, Tensor& y);
  void backward(const Tensor& grad_out, Tensor& grad_in) const;
};

/// Separable conv (+ optional batch-norm) (+ optional ReLU).
struct SeparableBlock {
  DepthwiseConv3x3 depthwise;
  PointwiseConv pointwise;
  std::optional<BatchNorm> norm;
  bool relu = false;

  Tensor after_dw;
  Tensor after_pw;
  Tensor after_bn;
  Relu act;

  std::size_t in_channels() const { return pointwise.in_channels; }
  std::size_t out_channels() const { return pointwise.out_channels; }
  std::size_t parameter_count() const;
  void forward(const Tensor& x, Tensor& y, const ParameterStore& store, Mode mode,
               bool update_running_stats);
  void backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store);
};

struct LayerSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  bool batch_norm = false;
  bool relu = false;
};

// Layout of the residual denoiser: first block conv+ReLU, depth-2 hidden
// blocks conv+BN+ReLU, last block conv only.
std::vector<LayerSpec> residual_denoiser_layout(std::size_t channels, std::size_t hidden,
                                                std::size_t depth);
// Closed-form count: sum over blocks of 9*Cin + Cin*Cout + Cout, plus 2*Cout per BN.
std::size_t separable_parameter_count(const std::vector<LayerSpec>& layout);
// Same network with dense 3x3 convolutions (9*Cin*Cout + Cout, plus 2*Cout per BN).
std::size_t dense_parameter_count(const std::vector<LayerSpec>& layout);

/// The residual network: output = input - residual(input).
class Network {
 public:
  Network() = default;
  explicit Network(const std::vector<LayerSpec>& layout);

  std::size_t in_channels() const;
  std::size_t parameter_count() const { return store_.size(); }
  const std::vector<SeparableBlock>& blocks() const { return blocks_; }
  std::vector<LayerSpec> layout() const;

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  // He (fan-in) normal weights, zero biases, unit BN scale, zero BN shift,
  // fresh running statistics.
  void initialize(std::mt19937_64& rng);

  // Returns the denoised tensor. Training mode caches activations for backward().
  const Tensor& forward(const Tensor& x, Mode mode, bool update_running_stats = true);
  // Back-propagates dL/d(output) of the last forward(); accumulates parameter
  // gradients and returns dL/d(input).
  const Tensor& backward(const Tensor& grad_output);

  // Running statistics of every BN layer, concatenated (mean then var per layer).
  std::vector<double> buffers() const;
  void set_buffers(std::span<const double> values);

 private:
  ParameterStore store_;
  std::vector<SeparableBlock> blocks_;
  std::vector<Tensor> acts_;  // acts_[k] is the input of block k; acts_.back() the residual
  Tensor output_;
  std::vector<Tensor> grads_;
  Tensor grad_input_;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  void reset(std::size_t n);
  void update(std::span<double> params, std::span<const double> grads, double lr);
};

// sum |pred - target|; writes the subgradient sign(pred - target) (0 at ties).
double l1_loss(const Tensor& pred, const Tensor& target, Tensor* grad);
// Huber-smoothed L1 with threshold delta: r^2 / (2 delta) inside, |r| - delta/2 outside.
double huber_loss(const Tensor& pred, const Tensor& target, double delta, Tensor* grad);

}  // namespace difiv::nn
