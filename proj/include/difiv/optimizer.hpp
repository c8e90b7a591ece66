#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "difiv/denoiser.hpp"
#include "difiv/image.hpp"
#include "difiv/operators.hpp"
#include "difiv/sensor.hpp"

namespace difiv {

struct FusionConfig {
  double p = 1.5;
  double lambda = 0.01;
  double lambda_h = 0.1;
  double lambda_m = 0.1;
  double rho = 0.1;
  double epsilon = 1e-6;
  std::size_t bcd_iters = 20;
  std::size_t cg_iters = 200;
  double cg_tol = 1e-6;
  std::size_t red_steps = 1;
  // Relative change of (Z_h, Z_m) below which the outer loop stops early.
  double stop_tol = 1e-5;
  std::uint64_t seed = 0;

  // Presets for moderate and significant inter-image variability.
  static FusionConfig moderate();
  static FusionConfig significant();
  void validate() const;
};

/// sqrt of the reweighting coefficients, one per Laplacian output voxel.
struct WeightField {
  HyperImage sqrt_w;
};

struct CgReport {
  std::size_t iterations = 0;
  double initial_residual = 0.0;  // relative, at the warm start
  double relative_residual = 0.0;
  bool converged = false;
};

struct CgSolution {
  HyperImage x;
  CgReport report;
};

struct FusionState {
  HyperImage z_h, z_m, v_h, v_m;
  WeightField w;
  std::size_t iteration = 0;
  std::vector<double> objective_trace;
  std::vector<CgReport> cg_zh;
  std::vector<CgReport> cg_zm;
  bool stopped_early = false;
};

// Matrix-free conjugate gradient for a symmetric positive-definite operator,
// warm-started from x. Returns the iterate with the smallest residual seen.
CgSolution conjugate_gradient(const std::function<HyperImage(const HyperImage&)>& apply,
                              const HyperImage& rhs, HyperImage x, std::size_t max_iters,
                              double tol);

// entry = ((|dh - dm| + eps)^(p - 2))^(1/2)
WeightField update_weights(const HyperImage& dh, const HyperImage& dm, double p, double epsilon);

// lambda * G^T diag(W)^2 G x
HyperImage apply_coupling(const HyperImage& x, const WeightField& w, const GradientOperator& grad,
                          double lambda);
// Left-hand operators of the Z_h and Z_m normal equations.
HyperImage apply_zh_system(const HyperImage& x, const WeightField& w, const SensorModel& sensor,
                           const GradientOperator& grad, const FusionConfig& cfg);
HyperImage apply_zm_system(const HyperImage& x, const WeightField& w, const SensorModel& sensor,
                           const GradientOperator& grad, const FusionConfig& cfg);

CgSolution solve_zh(const FusionState& state, const HyperImage& y_h, const SensorModel& sensor,
                    const GradientOperator& grad, const FusionConfig& cfg);
CgSolution solve_zm(const FusionState& state, const HyperImage& y_m, const SensorModel& sensor,
                    const GradientOperator& grad, const FusionConfig& cfg);

using DenoiseFn = std::function<HyperImage(const HyperImage&)>;

// steps x { V <- (rho Z + lambda_reg D(V)) / (rho + lambda_reg) }
HyperImage red_update(const HyperImage& z, const HyperImage& v, const DenoiseFn& denoiser, double rho,
                      double lambda_reg, std::size_t steps = 1);

// 1/2 ||Y_h - Z_h F D||^2 + 1/2 ||Y_m - R Z_m||^2 + lambda/2 sum (|dh - dm| + eps)^p
double objective_value(const FusionState& state, const HyperImage& y_h, const HyperImage& y_m,
                       const SensorModel& sensor, const GradientOperator& grad,
                       const FusionConfig& cfg);

// Bicubic interpolation of Y_h to the high-resolution grid.
HyperImage bicubic_baseline(const HyperImage& y_h, const SensorModel& sensor);

struct FusionResult {
  HyperImage z_h;
  HyperImage z_m;
  FusionState state;
};

using ProgressFn = std::function<void(const FusionState&)>;

// Block-coordinate descent over (Z_h, Z_m, V_h, V_m) with reweighted coupling.
// Denoisers are only consulted when the matching lambda_h / lambda_m is nonzero.
FusionResult run_fusion(const HyperImage& y_h, const HyperImage& y_m, const SensorModel& sensor,
                        const GradientOperator& grad, const FusionConfig& cfg,
                        ZeroShotDenoiser& denoiser_h, ZeroShotDenoiser& denoiser_m,
                        const ProgressFn& progress = {});

}  // namespace difiv
