#include "difiv/optimizer.hpp"

#include <cmath>
#include <string>

#include "difiv/errors.hpp"

namespace difiv {

FusionConfig FusionConfig::moderate() { return FusionConfig{}; }

FusionConfig FusionConfig::significant() {
  FusionConfig c;
  c.p = 1.8;
  c.lambda = 0.002;
  c.lambda_h = 0.01;
  c.lambda_m = 0.01;
  return c;
}

void FusionConfig::validate() const {
  if (!(p > 0.0 && p <= 2.0)) throw ValueError("FusionConfig: p must lie in (0, 2]");
  if (!(lambda >= 0.0) || !(lambda_h >= 0.0) || !(lambda_m >= 0.0)) {
    throw ValueError("FusionConfig: regularization weights must be >= 0");
  }
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ValueError("FusionConfig: rho must be > 0");
  if (!(epsilon > 0.0)) throw ValueError("FusionConfig: epsilon must be > 0");
  if (cg_iters == 0) throw ValueError("FusionConfig: cg_iters must be positive");
  if (!(cg_tol > 0.0)) throw ValueError("FusionConfig: cg_tol must be > 0");
  if (red_steps == 0) throw ValueError("FusionConfig: red_steps must be positive");
  if (!(stop_tol >= 0.0)) throw ValueError("FusionConfig: stop_tol must be >= 0");
}

CgSolution conjugate_gradient(const std::function<HyperImage(const HyperImage&)>& apply,
                              const HyperImage& rhs, HyperImage x, std::size_t max_iters,
                              double tol) {
  require_same_shape(rhs, x, "conjugate_gradient");
  CgSolution sol;
  const double bnorm = norm(rhs);
  if (bnorm == 0.0) {
    sol.x = HyperImage(rhs.shape());
    sol.report.converged = true;
    return sol;
  }
  HyperImage r = rhs - apply(x);
  double rr = squared_norm(r);
  double rel = std::sqrt(rr) / bnorm;
  if (!std::isfinite(rel)) throw NumericalError("conjugate_gradient: non-finite initial residual");
  sol.report.initial_residual = rel;
  sol.report.relative_residual = rel;
  sol.x = x;
  if (rel <= tol) {
    sol.report.converged = true;
    return sol;
  }
  HyperImage p = r;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    const HyperImage ap = apply(p);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericalError("conjugate_gradient: non-finite curvature");
    if (pap <= 0.0) break;
    const double alpha = rr / pap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    const double rr_new = squared_norm(r);
    rel = std::sqrt(rr_new) / bnorm;
    if (!std::isfinite(rel)) {
      throw NumericalError("conjugate_gradient: non-finite residual at iteration " +
                           std::to_string(it));
    }
    sol.report.iterations = it;
    if (rel < sol.report.relative_residual) {
      sol.x = x;
      sol.report.relative_residual = rel;
    }
    if (rel <= tol) {
      sol.report.converged = true;
      break;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    auto pd = p.data();
    const auto rd = r.data();
    for (std::size_t k = 0; k < pd.size(); ++k) pd[k] = rd[k] + beta * pd[k];
  }
  return sol;
}

WeightField update_weights(const HyperImage& dh, const HyperImage& dm, double p, double epsilon) {
  require_same_shape(dh, dm, "update_weights");
  if (!(p > 0.0 && p <= 2.0)) {
    throw ValueError("update_weights: p must lie in (0, 2], got " + std::to_string(p));
  }
  if (!(epsilon > 0.0)) throw ValueError("update_weights: epsilon must be > 0");
  require_finite(dh, "update_weights");
  require_finite(dm, "update_weights");
  WeightField w{HyperImage(dh.shape())};
  auto out = w.sqrt_w.data();
  const auto a = dh.data();
  const auto b = dm.data();
  const double half_exp = 0.5 * (p - 2.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::pow(std::abs(a[k] - b[k]) + epsilon, half_exp);
  }
  return w;
}

HyperImage apply_coupling(const HyperImage& x, const WeightField& w, const GradientOperator& grad,
                          double lambda) {
  HyperImage d = apply_gradient(x, grad);
  require_same_shape(d, w.sqrt_w, "apply_coupling");
  auto dd = d.data();
  const auto ww = w.sqrt_w.data();
  for (std::size_t k = 0; k < dd.size(); ++k) dd[k] *= lambda * ww[k] * ww[k];
  return apply_gradient_adjoint(d, grad);
}

HyperImage apply_zh_system(const HyperImage& x, const WeightField& w, const SensorModel& sensor,
                           const GradientOperator& grad, const FusionConfig& cfg) {
  HyperImage out =
      spatial_degrade_adjoint(spatial_degrade(x, sensor), sensor, x.rows(), x.cols());
  if (cfg.lambda != 0.0) axpy(1.0, apply_coupling(x, w, grad, cfg.lambda), out);
  axpy(cfg.rho, x, out);
  return out;
}

HyperImage apply_zm_system(const HyperImage& x, const WeightField& w, const SensorModel& sensor,
                           const GradientOperator& grad, const FusionConfig& cfg) {
  HyperImage out = spectral_degrade_adjoint(spectral_degrade(x, sensor), sensor);
  if (cfg.lambda != 0.0) axpy(1.0, apply_coupling(x, w, grad, cfg.lambda), out);
  axpy(cfg.rho, x, out);
  return out;
}

namespace {

void check_state(const FusionState& s, const char* context) {
  require_same_shape(s.z_h, s.z_m, context);
  require_same_shape(s.z_h, s.v_h, context);
  require_same_shape(s.z_h, s.v_m, context);
  require_same_shape(s.z_h, s.w.sqrt_w, context);
}

}  // namespace

CgSolution solve_zh(const FusionState& state, const HyperImage& y_h, const SensorModel& sensor,
                    const GradientOperator& grad, const FusionConfig& cfg) {
  check_state(state, "solve_zh");
  HyperImage rhs = spatial_degrade_adjoint(y_h, sensor, state.z_h.rows(), state.z_h.cols());
  if (rhs.bands() != state.z_h.bands()) {
    throw DimensionError("solve_zh: Y_h band count does not match Z_h");
  }
  if (cfg.lambda != 0.0) axpy(1.0, apply_coupling(state.z_m, state.w, grad, cfg.lambda), rhs);
  axpy(cfg.rho, state.v_h, rhs);
  auto op = [&](const HyperImage& x) { return apply_zh_system(x, state.w, sensor, grad, cfg); };
  return conjugate_gradient(op, rhs, state.z_h, cfg.cg_iters, cfg.cg_tol);
}

CgSolution solve_zm(const FusionState& state, const HyperImage& y_m, const SensorModel& sensor,
                    const GradientOperator& grad, const FusionConfig& cfg) {
  check_state(state, "solve_zm");
  if (y_m.rows() != state.z_m.rows() || y_m.cols() != state.z_m.cols()) {
    throw DimensionError("solve_zm: Y_m spatial dims do not match Z_m");
  }
  HyperImage rhs = spectral_degrade_adjoint(y_m, sensor);
  if (rhs.bands() != state.z_m.bands()) {
    throw DimensionError("solve_zm: spectral response does not map to Z_m bands");
  }
  if (cfg.lambda != 0.0) axpy(1.0, apply_coupling(state.z_h, state.w, grad, cfg.lambda), rhs);
  axpy(cfg.rho, state.v_m, rhs);
  auto op = [&](const HyperImage& x) { return apply_zm_system(x, state.w, sensor, grad, cfg); };
  return conjugate_gradient(op, rhs, state.z_m, cfg.cg_iters, cfg.cg_tol);
}

HyperImage red_update(const HyperImage& z, const HyperImage& v, const DenoiseFn& denoiser, double rho,
                      double lambda_reg, std::size_t steps) {
  require_same_shape(z, v, "red_update");
  if (!(rho + lambda_reg > 0.0)) throw ValueError("red_update: rho + lambda must be positive");
  if (lambda_reg == 0.0) return z;
  HyperImage cur = v;
  for (std::size_t s = 0; s < steps; ++s) {
    const HyperImage d = denoiser(cur);
    if (d.shape() != cur.shape()) {
      throw DimensionError("red_update: denoiser returned " + d.shape().str() + " for input " +
                           cur.shape().str());
    }
    cur = linear_combination(rho / (rho + lambda_reg), z, lambda_reg / (rho + lambda_reg), d);
  }
  return cur;
}

double objective_value(const FusionState& state, const HyperImage& y_h, const HyperImage& y_m,
                       const SensorModel& sensor, const GradientOperator& grad,
                       const FusionConfig& cfg) {
  const double data_h = 0.5 * squared_norm(y_h - spatial_degrade(state.z_h, sensor));
  const double data_m = 0.5 * squared_norm(y_m - spectral_degrade(state.z_m, sensor));
  double coupling = 0.0;
  if (cfg.lambda != 0.0) {
    const HyperImage dh = apply_gradient(state.z_h, grad);
    const HyperImage dm = apply_gradient(state.z_m, grad);
    const auto a = dh.data();
    const auto b = dm.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      coupling += std::pow(std::abs(a[k] - b[k]) + cfg.epsilon, cfg.p);
    }
  }
  return data_h + data_m + 0.5 * cfg.lambda * coupling;
}

HyperImage bicubic_baseline(const HyperImage& y_h, const SensorModel& sensor) {
  return upsample_interpolate(y_h, sensor.decim_factor);
}

namespace {

template <class Fn>
auto with_iteration_context(std::size_t iteration, const char* step, Fn&& fn) {
  const std::string prefix =
      "fusion iteration " + std::to_string(iteration) + " (" + step + "): ";
  try {
    return fn();
  } catch (const DimensionError& e) {
    throw DimensionError(prefix + e.what());
  } catch (const ValueError& e) {
    throw ValueError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  }
}

}  // namespace

FusionResult run_fusion(const HyperImage& y_h, const HyperImage& y_m, const SensorModel& sensor,
                        const GradientOperator& grad, const FusionConfig& cfg,
                        ZeroShotDenoiser& denoiser_h, ZeroShotDenoiser& denoiser_m,
                        const ProgressFn& progress) {
  cfg.validate();
  sensor.validate();
  require_finite(y_h, "run_fusion");
  require_finite(y_m, "run_fusion");
  const std::size_t d = sensor.decim_factor;
  if (y_h.bands() != sensor.hsi_bands() || y_m.bands() != sensor.msi_bands()) {
    throw DimensionError("run_fusion: observation band counts " + std::to_string(y_h.bands()) +
                         "/" + std::to_string(y_m.bands()) + " do not match the sensor's " +
                         std::to_string(sensor.hsi_bands()) + "/" +
                         std::to_string(sensor.msi_bands()));
  }
  if (y_m.rows() != y_h.rows() * d || y_m.cols() != y_h.cols() * d) {
    throw DimensionError("run_fusion: Y_m is " + y_m.shape().str() + " but Y_h " +
                         y_h.shape().str() + " upsampled by " + std::to_string(d) +
                         " needs matching spatial dims");
  }

  FusionState s;
  s.z_h = bicubic_baseline(y_h, sensor);
  if (y_h.has_wavelengths()) s.z_h.set_wavelengths(y_h.wavelengths());
  s.v_h = s.z_h;
  // The interpolated MI has the wrong band count; start Z_m from the HI side.
  s.z_m = s.z_h;
  s.v_m = s.z_h;
  s.w = update_weights(apply_gradient(s.z_h, grad), apply_gradient(s.z_m, grad), cfg.p, cfg.epsilon);

  for (std::size_t it = 1; it <= cfg.bcd_iters; ++it) {
    const HyperImage prev_h = s.z_h;
    const HyperImage prev_m = s.z_m;

    auto zh = with_iteration_context(it, "Z_h", [&] { return solve_zh(s, y_h, sensor, grad, cfg); });
    s.z_h = std::move(zh.x);
    s.cg_zh.push_back(zh.report);
    auto zm = with_iteration_context(it, "Z_m", [&] { return solve_zm(s, y_m, sensor, grad, cfg); });
    s.z_m = std::move(zm.x);
    s.cg_zm.push_back(zm.report);

    s.w = with_iteration_context(it, "weights", [&] {
      return update_weights(apply_gradient(s.z_h, grad), apply_gradient(s.z_m, grad), cfg.p,
                            cfg.epsilon);
    });

    auto red = [&](ZeroShotDenoiser& den, const HyperImage& z, const HyperImage& v, double lam) {
      bool first = true;
      DenoiseFn fn = [&](const HyperImage& x) {
        const DenoiseMode mode = first ? DenoiseMode::kTrain : DenoiseMode::kInferenceOnly;
        first = false;
        return den(x, mode);
      };
      return red_update(z, v, fn, cfg.rho, lam, cfg.red_steps);
    };
    s.v_h = with_iteration_context(it, "V_h", [&] { return red(denoiser_h, s.z_h, s.v_h, cfg.lambda_h); });
    s.v_m = with_iteration_context(it, "V_m", [&] { return red(denoiser_m, s.z_m, s.v_m, cfg.lambda_m); });

    s.iteration = it;
    s.objective_trace.push_back(objective_value(s, y_h, y_m, sensor, grad, cfg));
    for (const HyperImage* img : {&s.z_h, &s.z_m, &s.v_h, &s.v_m}) {
      if (!img->all_finite()) {
        throw NumericalError("fusion iteration " + std::to_string(it) + ": non-finite state");
      }
    }
    if (progress) progress(s);

    const double change = std::sqrt(squared_norm(s.z_h - prev_h) + squared_norm(s.z_m - prev_m));
    const double scale = std::sqrt(squared_norm(prev_h) + squared_norm(prev_m));
    if (scale > 0.0 && change / scale < cfg.stop_tol) {
      s.stopped_early = it < cfg.bcd_iters;
      break;
    }
  }

  if (y_h.has_wavelengths()) {
    s.z_m.set_wavelengths(y_h.wavelengths());
  }
  FusionResult result{s.z_h, s.z_m, std::move(s)};
  return result;
}

}  // namespace difiv
