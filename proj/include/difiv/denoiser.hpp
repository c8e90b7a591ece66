#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "difiv/image.hpp"
#include "difiv/nn.hpp"

namespace difiv {

inline constexpr std::size_t kDefaultSubspaceDim = 5;
inline constexpr std::size_t kDenoiserDepth = 8;
inline constexpr std::size_t kHiddenPerChannel = 4;

/// Truncated-SVD representation V ~ Q X of a cube's band-by-pixel unfolding.
struct SubspaceModel {
  Eigen::MatrixXd q;       // L_h x l_h, orthonormal columns
  Eigen::MatrixXd coeffs;  // l_h x M
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  nn::Tensor coeff_tensor() const;
  // Q * x for an l_h-channel map x.
  HyperImage reconstruct(const nn::Tensor& x) const;
  HyperImage reconstruct() const;
};

struct TrainConfig {
  double lr = 2e-4;
  std::size_t epochs_initial = 2000;
  std::size_t epochs_finetune = 400;
  bool resample_noise = true;
  std::uint64_t seed = 0;

  // Full-scale epoch counts (10000 / 2000).
  static TrainConfig full_scale();
  void validate() const;
};

/// Image-specific separable-convolution residual denoiser plus its Adam state.
/// A freshly constructed model has all parameters zero and is neither
/// initialized nor trained; the first training call initializes it.
struct DenoiserModel {
  explicit DenoiserModel(std::size_t subspace_dim = kDefaultSubspaceDim);

  std::size_t subspace_dim = kDefaultSubspaceDim;
  nn::Network net;
  nn::AdamState adam;
  bool initialized = false;
  bool trained = false;

  std::size_t parameter_count() const { return net.parameter_count(); }
};

double estimate_noise_sigma(std::span<const double> channel, std::size_t rows, std::size_t cols);

SubspaceModel subspace_decompose(const HyperImage& v, std::size_t subspace_dim);

struct ForwardResult {
  nn::Tensor output;
  // Set when inference ran on a model that was never trained.
  bool untrained = false;
};

ForwardResult network_forward(DenoiserModel& model, const nn::Tensor& x, bool training);

struct TrainReport {
  std::vector<double> loss;  // one entry per epoch
};

TrainReport train_zero_shot(DenoiserModel& model, const nn::Tensor& x, std::span<const double> sigmas,
                            const TrainConfig& tc, std::size_t epochs);

enum class DenoiseMode {
  kTrain,          // initial training or fine-tuning, then inference
  kInferenceOnly,  // use the current parameters as they are
};

// One pass of the subspace CNN denoising engine on cube v.
HyperImage denoise(DenoiserModel& model, const HyperImage& v, std::size_t subspace_dim,
                   const TrainConfig& tc, DenoiseMode mode = DenoiseMode::kTrain);

// Largest relative discrepancy between reverse-mode gradients of the
// Huber-smoothed (delta 1e-4) zero-shot loss net(x) vs x and central
// differences (step 1e-6), over every parameter coordinate and along
// `direction` in parameter space. The model is left unchanged.
double gradient_check(const DenoiserModel& model, const nn::Tensor& x,
                      std::span<const double> direction);

// "DFVM" checkpoint with parameters, BN running statistics and Adam state.
void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path);
DenoiserModel load_checkpoint(const std::filesystem::path& path);

/// A denoiser bound to its training configuration, as used by the fusion loop.
class ZeroShotDenoiser {
 public:
  ZeroShotDenoiser(std::size_t subspace_dim, TrainConfig tc)
      : model_(subspace_dim), tc_(tc), subspace_dim_(subspace_dim) {}

  HyperImage operator()(const HyperImage& v, DenoiseMode mode) {
    return denoise(model_, v, subspace_dim_, tc_, mode);
  }

  DenoiserModel& model() { return model_; }
  const DenoiserModel& model() const { return model_; }
  const TrainConfig& config() const { return tc_; }

 private:
  DenoiserModel model_;
  TrainConfig tc_;
  std::size_t subspace_dim_;
};

}  // namespace difiv
