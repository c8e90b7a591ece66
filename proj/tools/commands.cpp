#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "difiv/errors.hpp"
#include "difiv/operators.hpp"
#include "difiv/optimizer.hpp"
#include "difiv/scene.hpp"

namespace difiv::cli {

void Log::info(const std::string& msg) const {
  if (out) *out << msg << '\n';
}

void Log::debug(const std::string& msg) const {
  if (out && verbose) *out << msg << '\n';
}

namespace {

// Independent streams of the run seed used by the commands.
constexpr std::uint64_t kSceneStream = 10;
constexpr std::uint64_t kVariabilityStream = 11;
constexpr std::uint64_t kDenoiserHStream = 20;
constexpr std::uint64_t kDenoiserMStream = 21;
constexpr std::uint64_t kDenoiseCmdStream = 22;

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Centre wavelength of each MI band: SRF-weighted mean of the HI wavelengths.
std::vector<double> msi_wavelengths(const SensorModel& s, const std::vector<double>& hsi) {
  if (hsi.empty()) return {};
  const Eigen::Map<const Eigen::VectorXd> wl(hsi.data(), static_cast<Eigen::Index>(hsi.size()));
  const Eigen::VectorXd c = (s.srf * wl).array() / s.srf.rowwise().sum().array();
  std::vector<double> out(c.data(), c.data() + c.size());
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (!(out[k] > out[k - 1])) return {};
  }
  return out;
}

}  // namespace

void cmd_simulate(const SimulateOptions& o, const Log& log) {
  const RunConfig& cfg = o.cfg;
  cfg.validate();
  if (o.synthetic == !o.input.empty()) {
    throw ValueError("simulate: give exactly one of --input or --synthetic");
  }
  if (!o.input_m.empty() && o.synthetic) throw ValueError("simulate: --input-m requires --input");

  HyperImage z_h = o.synthetic ? synthetic_scene(cfg.simulation.scene, derive_seed(cfg.seed, kSceneStream))
                               : read_hsc(o.input);
  HyperImage z_m;
  if (!o.input_m.empty()) {
    z_m = read_hsc(o.input_m);
    require_same_shape(z_h, z_m, "simulate: --input and --input-m");
  } else {
    z_m = apply_variability(z_h, cfg.simulation.variability, derive_seed(cfg.seed, kVariabilityStream));
  }
  const SensorModel sensor = make_sensor(cfg.sensor, z_h.bands());
  sensor.validate_for(z_h.rows(), z_h.cols());
  log.debug("simulate: reference " + z_h.shape().str() + ", SNR " + fmt(cfg.simulation.snr_db) + " dB");

  auto [y_h, y_m] = simulate_pair(z_h, z_m, sensor, cfg.simulation.snr_db, cfg.seed);
  if (z_h.has_wavelengths()) {
    y_h.set_wavelengths(z_h.wavelengths());
    y_m.set_wavelengths(msi_wavelengths(sensor, z_h.wavelengths()));
  }

  SensorManifest manifest{sensor, cfg.seed, cfg.simulation.snr_db, z_h.rows(), z_h.cols()};
  ensure_dir(o.out_dir);
  write_hsc(y_h, o.out_dir / kYh);
  write_hsc(y_m, o.out_dir / kYm);
  write_hsc(z_h, o.out_dir / kZhRef);
  write_hsc(z_m, o.out_dir / kZmRef);
  save_manifest(manifest, o.out_dir / kManifest);
  log.info("simulate: wrote " + (o.out_dir / kYh).string() + " " + y_h.shape().str() + " and " +
           (o.out_dir / kYm).string() + " " + y_m.shape().str());
}

FusionResult cmd_fuse(const FuseOptions& o, const Log& log) {
  const RunConfig& cfg = o.cfg;
  cfg.validate();
  const HyperImage y_h = read_hsc(o.y_h);
  const HyperImage y_m = read_hsc(o.y_m);
  const SensorManifest manifest = load_manifest(o.manifest);
  const SensorModel& sensor = manifest.sensor;
  if (manifest.hr_rows != 0 && (manifest.hr_rows != y_m.rows() || manifest.hr_cols != y_m.cols())) {
    throw DimensionError("fuse: Y_m is " + y_m.shape().str() + " but the manifest records a " +
                         std::to_string(manifest.hr_rows) + "x" + std::to_string(manifest.hr_cols) +
                         " grid");
  }
  sensor.validate_for(y_m.rows(), y_m.cols());

  TrainConfig tc_h = cfg.train;
  tc_h.seed = derive_seed(cfg.seed, kDenoiserHStream);
  TrainConfig tc_m = cfg.train;
  tc_m.seed = derive_seed(cfg.seed, kDenoiserMStream);
  ZeroShotDenoiser den_h(cfg.subspace_dim, tc_h);
  ZeroShotDenoiser den_m(cfg.subspace_dim, tc_m);
  FusionConfig fc = cfg.fusion;
  fc.seed = cfg.seed;

  std::ostringstream trace;
  trace << std::setprecision(17);
  trace << "# iteration objective cg_zh_iters cg_zh_residual cg_zm_iters cg_zm_residual\n";
  auto progress = [&](const FusionState& s) {
    const auto& h = s.cg_zh.back();
    const auto& m = s.cg_zm.back();
    trace << s.iteration << ' ' << s.objective_trace.back() << ' ' << h.iterations << ' '
          << h.relative_residual << ' ' << m.iterations << ' ' << m.relative_residual << '\n';
    log.debug("fuse: iteration " + std::to_string(s.iteration) + " objective " +
              fmt(s.objective_trace.back()) + " cg " + std::to_string(h.iterations) + "/" +
              std::to_string(m.iterations));
  };
  FusionResult result = run_fusion(y_h, y_m, sensor, GradientOperator{}, fc, den_h, den_m, progress);
  if (result.state.stopped_early) trace << "# stopped early at iteration " << result.state.iteration << '\n';

  ensure_dir(o.out_dir);
  write_hsc(result.z_h, o.out_dir / kZhHat);
  write_hsc(result.z_m, o.out_dir / kZmHat);
  write_file_atomic(o.out_dir / kTrace, trace.str());
  if (o.baseline_bicubic) {
    HyperImage base = bicubic_baseline(y_h, sensor);
    if (y_h.has_wavelengths()) base.set_wavelengths(y_h.wavelengths());
    write_hsc(base, o.out_dir / kBicubic);
  }
  log.info("fuse: wrote " + (o.out_dir / kZhHat).string() + " and " + (o.out_dir / kZmHat).string() +
           " after " + std::to_string(result.state.iteration) + " iterations");
  return result;
}

void cmd_denoise(const DenoiseOptions& o, const Log& log) {
  o.cfg.validate();
  const HyperImage v = read_hsc(o.input);
  TrainConfig tc = o.cfg.train;
  tc.seed = derive_seed(o.cfg.seed, kDenoiseCmdStream);
  DenoiserModel model = o.checkpoint_in.empty() ? DenoiserModel(o.cfg.subspace_dim)
                                                : load_checkpoint(o.checkpoint_in);
  if (model.subspace_dim > v.bands()) {
    throw DimensionError("denoise: subspace dimension " + std::to_string(model.subspace_dim) +
                         " exceeds the " + std::to_string(v.bands()) + " bands of the input");
  }
  const DenoiseMode mode = o.checkpoint_in.empty() ? DenoiseMode::kTrain : DenoiseMode::kInferenceOnly;
  HyperImage out = denoise(model, v, model.subspace_dim, tc, mode);
  if (v.has_wavelengths()) out.set_wavelengths(v.wavelengths());
  write_hsc(out, o.output);
  if (!o.checkpoint_out.empty()) save_checkpoint(model, o.checkpoint_out);
  log.info("denoise: wrote " + o.output.string());
}

MetricReport cmd_eval(const EvalOptions& o, const Log& log) {
  if (o.decim_factor == 0) throw ValueError("eval: --decim must be positive");
  const HyperImage est = read_hsc(o.est);
  const HyperImage ref = read_hsc(o.ref);
  require_same_shape(est, ref, "eval");
  const double hr = static_cast<double>(ref.pixels());
  const double lr = hr / static_cast<double>(o.decim_factor * o.decim_factor);
  MetricWarnings warnings;
  MetricReport r = evaluate(est, ref, hr, lr, &warnings);
  if (o.conventional_ergas) r.ergas = ergas(est, ref, hr, lr, ErgasVariant::kConventional, &warnings);
  for (const auto& w : warnings.messages) log.info("warning: " + w);
  if (!o.json_out.empty()) write_file_atomic(o.json_out, report_to_json(r).dump(2) + "\n");
  if (!o.text_out.empty()) write_file_atomic(o.text_out, report_to_text(r));
  if (log.out) *log.out << report_to_text(r);
  return r;
}

RenderReport cmd_render(const RenderOptions& o, const Log& log) {
  const HyperImage img = read_hsc(o.input);
  RenderReport rep = render_composite(img, o.mode, o.output);
  for (const auto& w : rep.warnings) log.info("warning: " + w);
  log.info("render: bands " + std::to_string(rep.band_r) + "," + std::to_string(rep.band_g) + "," +
           std::to_string(rep.band_b) + " -> " + o.output.string());
  return rep;
}

namespace {

double parse_snr(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ValueError("--snr: expected a number or inf, got '" + s + "'");
  return v;
}

template <class T>
void override_with(const std::optional<T>& src, T& dst) {
  if (src) dst = *src;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyperspectral and multispectral image fusion with inter-image variability"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON run configuration (defaults: moderate preset)");
  app.add_option("--seed", seed, "Base random seed (default 0)");
  app.add_flag("-v,--verbose", verbose, "Per-iteration progress");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Degrade reference cube(s) into an HI/MI pair");
  sim->fallthrough();
  SimulateOptions so;
  std::optional<std::string> snr;
  std::optional<std::size_t> kernel_size, decim, decim_offset, msi_bands, rows, cols, bands;
  std::optional<double> kernel_sigma, var_scale, var_patch, var_radius;
  sim->add_option("--input", so.input, "Reference high-resolution cube (.hsc)");
  sim->add_option("--input-m", so.input_m, "Reference cube for the MI side (default: --input with variability)");
  sim->add_flag("--synthetic", so.synthetic, "Generate a synthetic reference scene");
  sim->add_option("--out-dir", so.out_dir, "Output directory")->capture_default_str();
  sim->add_option("--snr", snr, "Noise level in dB, or inf (default 35)");
  sim->add_option("--kernel-size", kernel_size, "Gaussian blur size (default 8)");
  sim->add_option("--kernel-sigma", kernel_sigma, "Gaussian blur sigma (default 4)");
  sim->add_option("--decim", decim, "Decimation factor (default 4)");
  sim->add_option("--decim-offset", decim_offset, "Decimation offset (default 0)");
  sim->add_option("--msi-bands", msi_bands, "Multispectral band count (default 10)");
  sim->add_option("--var-scale", var_scale, "Multiplicative spectral scaling amplitude (default 0)");
  sim->add_option("--var-patch", var_patch, "Additive patch amplitude (default 0)");
  sim->add_option("--var-radius", var_radius, "Patch radius as a fraction of the image (default 0.15)");
  sim->add_option("--rows", rows, "Synthetic scene rows (default 64)");
  sim->add_option("--cols", cols, "Synthetic scene cols (default 64)");
  sim->add_option("--bands", bands, "Synthetic scene bands (default 20)");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse an HI/MI pair");
  fuse->fallthrough();
  FuseOptions fo;
  std::string in_dir;
  std::optional<std::string> preset, baseline;
  std::optional<std::size_t> bcd_iters, epochs_initial, epochs_finetune;
  std::optional<double> p, lambda, lambda_h, lambda_m, rho;
  fuse->add_option("--in-dir", in_dir, "Directory holding Y_h.hsc, Y_m.hsc and sensor.json");
  fuse->add_option("--y-h", fo.y_h, "Hyperspectral observation (.hsc)");
  fuse->add_option("--y-m", fo.y_m, "Multispectral observation (.hsc)");
  fuse->add_option("--manifest", fo.manifest, "Sensor manifest written by simulate");
  fuse->add_option("--out-dir", fo.out_dir, "Output directory")->capture_default_str();
  fuse->add_option("--preset", preset, "moderate (default) or significant");
  fuse->add_option("--bcd-iters", bcd_iters, "Outer iterations (default 20)");
  fuse->add_option("--p", p, "Coupling exponent");
  fuse->add_option("--lambda", lambda, "Coupling weight");
  fuse->add_option("--lambda-h", lambda_h, "HI denoiser weight");
  fuse->add_option("--lambda-m", lambda_m, "MI denoiser weight");
  fuse->add_option("--rho", rho, "Splitting penalty");
  fuse->add_option("--epochs-initial", epochs_initial, "Denoiser training epochs (default 2000)");
  fuse->add_option("--epochs-finetune", epochs_finetune, "Denoiser fine-tuning epochs (default 400)");
  fuse->add_option("--baseline", baseline, "Also write an interpolation baseline")
      ->check(CLI::IsMember({"bicubic"}));

  // denoise
  auto* den = app.add_subcommand("denoise", "Zero-shot denoise a cube");
  den->fallthrough();
  DenoiseOptions dopt;
  std::optional<std::size_t> den_epochs, subspace;
  den->add_option("--input", dopt.input, "Noisy cube (.hsc)")->required();
  den->add_option("--output", dopt.output, "Denoised cube (.hsc)")->required();
  den->add_option("--epochs", den_epochs, "Training epochs (default 2000)");
  den->add_option("--subspace-dim", subspace, "Subspace dimension (default 5)");
  den->add_option("--checkpoint-in", dopt.checkpoint_in, "Load a trained model and run inference only");
  den->add_option("--checkpoint-out", dopt.checkpoint_out, "Save the trained model");

  // eval
  auto* ev = app.add_subcommand("eval", "Compare an estimate against a reference");
  ev->fallthrough();
  EvalOptions eo;
  ev->add_option("--est", eo.est, "Estimated cube (.hsc)")->required();
  ev->add_option("--ref", eo.ref, "Reference cube (.hsc)")->required();
  ev->add_option("--decim", eo.decim_factor, "Resolution ratio for ERGAS")->capture_default_str();
  ev->add_flag("--conventional-ergas", eo.conventional_ergas, "Use the conventional ERGAS normalization");
  ev->add_option("--json", eo.json_out, "Write the report as JSON");
  ev->add_option("--text", eo.text_out, "Write the report as key=value text");

  // render
  auto* rd = app.add_subcommand("render", "Write an RGB composite PNG");
  rd->fallthrough();
  RenderOptions ro;
  std::string mode = "visible";
  rd->add_option("--input", ro.input, "Cube with wavelengths (.hsc)")->required();
  rd->add_option("--output", ro.output, "PNG path")->required();
  rd->add_option("--mode", mode, "visible or infrared")
      ->check(CLI::IsMember({"visible", "infrared"}))
      ->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const Log log{&out, verbose};
  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.fusion.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (sim->parsed()) {
      if (snr) cfg.simulation.snr_db = parse_snr(*snr);
      override_with(kernel_size, cfg.sensor.kernel_size);
      override_with(kernel_sigma, cfg.sensor.kernel_sigma);
      override_with(decim, cfg.sensor.decim_factor);
      override_with(decim_offset, cfg.sensor.decim_offset);
      override_with(msi_bands, cfg.sensor.msi_bands);
      override_with(var_scale, cfg.simulation.variability.scaling_amplitude);
      override_with(var_patch, cfg.simulation.variability.patch_amplitude);
      override_with(var_radius, cfg.simulation.variability.patch_radius);
      override_with(rows, cfg.simulation.scene.rows);
      override_with(cols, cfg.simulation.scene.cols);
      override_with(bands, cfg.simulation.scene.bands);
      if (so.input.empty() && !so.synthetic) so.input = cfg.paths.input;
      if (so.input_m.empty()) so.input_m = cfg.paths.input_m;
      so.cfg = cfg;
      cmd_simulate(so, log);
    } else if (fuse->parsed()) {
      if (preset) {
        // An explicit preset replaces the fusion section before individual overrides.
        const FusionConfig base = preset_config(parse_preset(*preset));
        const auto keep_iters = cfg.fusion.bcd_iters;
        cfg.preset = parse_preset(*preset);
        cfg.fusion.p = base.p;
        cfg.fusion.lambda = base.lambda;
        cfg.fusion.lambda_h = base.lambda_h;
        cfg.fusion.lambda_m = base.lambda_m;
        cfg.fusion.rho = base.rho;
        cfg.fusion.bcd_iters = keep_iters;
      }
      override_with(bcd_iters, cfg.fusion.bcd_iters);
      override_with(p, cfg.fusion.p);
      override_with(lambda, cfg.fusion.lambda);
      override_with(lambda_h, cfg.fusion.lambda_h);
      override_with(lambda_m, cfg.fusion.lambda_m);
      override_with(rho, cfg.fusion.rho);
      override_with(epochs_initial, cfg.train.epochs_initial);
      override_with(epochs_finetune, cfg.train.epochs_finetune);
      const std::filesystem::path dir = in_dir.empty() ? cfg.paths.out_dir : in_dir;
      if (fo.y_h.empty()) fo.y_h = dir / cfg.paths.y_h;
      if (fo.y_m.empty()) fo.y_m = dir / cfg.paths.y_m;
      if (fo.manifest.empty()) fo.manifest = dir / cfg.paths.manifest;
      fo.baseline_bicubic = baseline.has_value();
      fo.cfg = cfg;
      cmd_fuse(fo, log);
    } else if (den->parsed()) {
      override_with(den_epochs, cfg.train.epochs_initial);
      override_with(subspace, cfg.subspace_dim);
      dopt.cfg = cfg;
      cmd_denoise(dopt, log);
    } else if (ev->parsed()) {
      cmd_eval(eo, log);
    } else if (rd->parsed()) {
      ro.mode = mode == "visible" ? CompositeMode::kVisible : CompositeMode::kInfrared;
      cmd_render(ro, log);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const ValueError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace difiv::cli
