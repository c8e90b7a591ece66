#include "difiv/denoiser.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "difiv/errors.hpp"
#include "difiv/operators.hpp"

namespace difiv {

using nn::Mode;
using nn::Tensor;

nn::Tensor SubspaceModel::coeff_tensor() const {
  Tensor t(dim, rows, cols);
  const std::size_t n = rows * cols;
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      t.data[c * n + p] = coeffs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p));
    }
  }
  return t;
}

HyperImage SubspaceModel::reconstruct(const nn::Tensor& x) const {
  if (x.channels != dim || x.rows != rows || x.cols != cols) {
    throw DimensionError("SubspaceModel::reconstruct: coefficient map shape mismatch");
  }
  const auto n = static_cast<Eigen::Index>(rows * cols);
  const auto bands = q.rows();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> X(x.data.data(), static_cast<Eigen::Index>(dim), n);
  std::vector<double> data(static_cast<std::size_t>(bands * n));
  Eigen::Map<RowMat> V(data.data(), bands, n);
  V.noalias() = q * X;
  return HyperImage(Shape{static_cast<std::size_t>(bands), rows, cols}, std::move(data));
}

HyperImage SubspaceModel::reconstruct() const { return reconstruct(coeff_tensor()); }

TrainConfig TrainConfig::full_scale() {
  TrainConfig tc;
  tc.epochs_initial = 10000;
  tc.epochs_finetune = 2000;
  return tc;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("TrainConfig: lr must be positive");
  if (epochs_initial == 0 || epochs_finetune == 0) {
    throw ValueError("TrainConfig: epoch counts must be positive");
  }
}

DenoiserModel::DenoiserModel(std::size_t dim)
    : subspace_dim(dim),
      net(nn::residual_denoiser_layout(dim, dim * kHiddenPerChannel, kDenoiserDepth)) {
  adam.reset(net.parameter_count());
}

double estimate_noise_sigma(std::span<const double> channel, std::size_t rows, std::size_t cols) {
  if (rows < 4 || cols < 4) {
    throw DimensionError("estimate_noise_sigma: channel must be at least 4x4");
  }
  if (channel.size() != rows * cols) {
    throw DimensionError("estimate_noise_sigma: channel length does not match dims");
  }
  // Finest-scale diagonal Haar detail coefficients.
  std::vector<double> hh;
  hh.reserve((rows / 2) * (cols / 2));
  for (std::size_t i = 0; i + 1 < rows; i += 2) {
    for (std::size_t j = 0; j + 1 < cols; j += 2) {
      const double a = channel[i * cols + j];
      const double b = channel[i * cols + j + 1];
      const double c = channel[(i + 1) * cols + j];
      const double d = channel[(i + 1) * cols + j + 1];
      hh.push_back(std::abs(a - b - c + d) / 2.0);
    }
  }
  const std::size_t mid = hh.size() / 2;
  std::nth_element(hh.begin(), hh.begin() + static_cast<std::ptrdiff_t>(mid), hh.end());
  double median = hh[mid];
  if (hh.size() % 2 == 0) {
    const double lower = *std::max_element(hh.begin(), hh.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median / 0.6745;
}

SubspaceModel subspace_decompose(const HyperImage& v, std::size_t subspace_dim) {
  require_finite(v, "subspace_decompose");
  const std::size_t bands = v.bands();
  const std::size_t n = v.pixels();
  if (subspace_dim < 1 || subspace_dim > std::min(bands, n)) {
    throw ValueError("subspace_decompose: subspace dimension " + std::to_string(subspace_dim) +
                     " outside [1, " + std::to_string(std::min(bands, n)) + "]");
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> V(v.data().data(), static_cast<Eigen::Index>(bands),
                             static_cast<Eigen::Index>(n));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeThinU);
  const auto l = static_cast<Eigen::Index>(subspace_dim);
  SubspaceModel s;
  s.dim = subspace_dim;
  s.rows = v.rows();
  s.cols = v.cols();
  s.q = svd.matrixU().leftCols(l);
  // Deterministic sign: the largest-magnitude entry of each basis vector is positive.
  for (Eigen::Index c = 0; c < l; ++c) {
    Eigen::Index arg = 0;
    s.q.col(c).cwiseAbs().maxCoeff(&arg);
    if (s.q(arg, c) < 0.0) s.q.col(c) *= -1.0;
  }
  s.coeffs = s.q.transpose() * V;
  return s;
}

ForwardResult network_forward(DenoiserModel& model, const nn::Tensor& x, bool training) {
  if (x.channels != model.subspace_dim) {
    throw DimensionError("network_forward: input has " + std::to_string(x.channels) +
                         " channels, model expects " + std::to_string(model.subspace_dim));
  }
  ForwardResult r;
  r.output = model.net.forward(x, training ? Mode::kTrain : Mode::kEval);
  r.untrained = !training && !model.trained;
  return r;
}

TrainReport train_zero_shot(DenoiserModel& model, const nn::Tensor& x, std::span<const double> sigmas,
                            const TrainConfig& tc, std::size_t epochs) {
  tc.validate();
  if (epochs == 0) throw ValueError("train_zero_shot: epochs must be >= 1");
  if (x.channels != model.subspace_dim) {
    throw DimensionError("train_zero_shot: input channel count does not match the model");
  }
  if (sigmas.size() != x.channels) {
    throw DimensionError("train_zero_shot: need one noise level per channel");
  }
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValueError("train_zero_shot: sigmas must be >= 0");
  }
  for (double v : x.data) {
    if (!std::isfinite(v)) throw NumericalError("train_zero_shot: non-finite training input");
  }

  if (!model.initialized) {
    std::mt19937_64 init_rng(derive_seed(tc.seed, 0));
    model.net.initialize(init_rng);
    model.adam.reset(model.net.parameter_count());
    model.initialized = true;
  }
  // Each training round draws from its own stream so fine-tuning rounds differ.
  std::mt19937_64 rng(derive_seed(tc.seed, 1 + model.adam.step));
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto& store = model.net.store();
  Tensor noisy = x;
  Tensor grad;
  const std::size_t n = x.pixels();
  TrainReport report;
  report.loss.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    if (e == 0 || tc.resample_noise) {
      for (std::size_t c = 0; c < x.channels; ++c) {
        for (std::size_t p = 0; p < n; ++p) {
          noisy.data[c * n + p] = x.data[c * n + p] + sigmas[c] * gauss(rng);
        }
      }
    }
    store.zero_grad();
    const Tensor& out = model.net.forward(noisy, Mode::kTrain, true);
    const double loss = nn::l1_loss(out, x, &grad);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_zero_shot: non-finite loss at epoch " + std::to_string(e + 1));
    }
    model.net.backward(grad);
    model.adam.update(store.values(), store.grads(), tc.lr);
    report.loss.push_back(loss);
  }
  model.trained = true;
  return report;
}

HyperImage denoise(DenoiserModel& model, const HyperImage& v, std::size_t subspace_dim,
                   const TrainConfig& tc, DenoiseMode mode) {
  if (subspace_dim != model.subspace_dim) {
    throw DimensionError("denoise: model was built for subspace dimension " +
                         std::to_string(model.subspace_dim));
  }
  const SubspaceModel sub = subspace_decompose(v, subspace_dim);
  const Tensor x = sub.coeff_tensor();
  if (mode == DenoiseMode::kTrain) {
    std::vector<double> sigmas(x.channels);
    for (std::size_t c = 0; c < x.channels; ++c) {
      sigmas[c] = estimate_noise_sigma(x.channel(c), x.rows, x.cols);
    }
    train_zero_shot(model, x, sigmas, tc, model.trained ? tc.epochs_finetune : tc.epochs_initial);
  }
  HyperImage out = sub.reconstruct(network_forward(model, x, false).output);
  if (v.has_wavelengths()) out.set_wavelengths(v.wavelengths());
  return out;
}

double gradient_check(const DenoiserModel& model, const nn::Tensor& x,
                      std::span<const double> direction) {
  constexpr double kDelta = 1e-4;
  constexpr double kStep = 1e-6;
  DenoiserModel m = model;
  auto& net = m.net;
  auto& store = net.store();
  if (!direction.empty() && direction.size() != store.size()) {
    throw DimensionError("gradient_check: direction length must equal the parameter count");
  }
  auto loss_at = [&]() {
    return nn::huber_loss(net.forward(x, Mode::kTrain, false), x, kDelta, nullptr);
  };

  store.zero_grad();
  Tensor g;
  nn::huber_loss(net.forward(x, Mode::kTrain, false), x, kDelta, &g);
  net.backward(g);
  const std::vector<double> analytic(store.grads().begin(), store.grads().end());

  double scale = 1.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  // Coordinates whose gradient is tiny next to the largest one are compared
  // against this floor instead of their own magnitude.
  const double floor = 1e-3 * scale;
  auto rel = [&](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
  };

  auto values = store.values();
  double worst = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double saved = values[k];
    values[k] = saved + kStep;
    const double plus = loss_at();
    values[k] = saved - kStep;
    const double minus = loss_at();
    values[k] = saved;
    worst = std::max(worst, rel(analytic[k], (plus - minus) / (2.0 * kStep)));
  }

  if (!direction.empty()) {
    double dnorm = 0.0;
    for (double d : direction) dnorm += d * d;
    dnorm = std::sqrt(dnorm);
    if (dnorm > 0.0) {
      const std::vector<double> saved(values.begin(), values.end());
      double analytic_dir = 0.0;
      for (std::size_t k = 0; k < values.size(); ++k) analytic_dir += analytic[k] * direction[k] / dnorm;
      for (std::size_t k = 0; k < values.size(); ++k) values[k] = saved[k] + kStep * direction[k] / dnorm;
      const double plus = loss_at();
      for (std::size_t k = 0; k < values.size(); ++k) values[k] = saved[k] - kStep * direction[k] / dnorm;
      const double minus = loss_at();
      std::copy(saved.begin(), saved.end(), values.begin());
      worst = std::max(worst, rel(analytic_dir, (plus - minus) / (2.0 * kStep)));
    }
  }
  return worst;
}

// --- checkpoints ------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kCheckpointMagic{'D', 'F', 'V', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

class LeWriter {
 public:
  explicit LeWriter(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    u64(vs.size());
    for (double v : vs) f64(v);
  }

 private:
  std::ostream& os_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& is) : is_(is) {}
  std::uint64_t offset() const { return offset_; }
  std::uint8_t u8() {
    const int c = is_.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("checkpoint truncated", offset_);
    ++offset_;
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(u8()) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(u8()) << (8 * k);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> f64s(std::size_t expected, const char* what) {
    const std::uint64_t at = offset_;
    const std::uint64_t n = u64();
    if (n != expected) {
      throw FormatError(std::string("checkpoint: ") + what + " length " + std::to_string(n) +
                            ", expected " + std::to_string(expected),
                        at);
    }
    std::vector<double> out(n);
    for (double& v : out) v = f64();
    return out;
  }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    LeWriter w(os);
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(model.subspace_dim));
    const auto layout = model.net.layout();
    w.u32(static_cast<std::uint32_t>(layout.size()));
    for (const auto& l : layout) {
      w.u32(static_cast<std::uint32_t>(l.in_channels));
      w.u32(static_cast<std::uint32_t>(l.out_channels));
      w.u8(l.batch_norm ? 1 : 0);
      w.u8(l.relu ? 1 : 0);
    }
    w.u8(model.initialized ? 1 : 0);
    w.u8(model.trained ? 1 : 0);
    w.f64s(model.net.store().values());
    w.f64s(model.net.buffers());
    w.u64(model.adam.step);
    w.f64s(model.adam.m);
    w.f64s(model.adam.v);
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

DenoiserModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  LeReader r(is);
  std::array<char, 4> magic{};
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (magic != kCheckpointMagic) throw FormatError("checkpoint: bad magic", 0);
  const std::uint64_t version_at = r.offset();
  if (r.u32() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version", version_at);
  const std::uint64_t dim_at = r.offset();
  const std::size_t dim = r.u32();
  if (dim == 0 || dim > 4096) {
    throw FormatError("checkpoint: implausible subspace dimension " + std::to_string(dim), dim_at);
  }
  DenoiserModel model(dim);
  const auto expected = model.net.layout();
  const std::uint64_t layout_at = r.offset();
  if (r.u32() != expected.size()) throw FormatError("checkpoint: layer count mismatch", layout_at);
  for (const auto& l : expected) {
    const std::uint64_t at = r.offset();
    const std::size_t in = r.u32();
    const std::size_t out = r.u32();
    const bool bn = r.u8() != 0;
    const bool relu = r.u8() != 0;
    if (in != l.in_channels || out != l.out_channels || bn != l.batch_norm || relu != l.relu) {
      throw FormatError("checkpoint: layer layout does not match the architecture", at);
    }
  }
  model.initialized = r.u8() != 0;
  model.trained = r.u8() != 0;
  const auto params = r.f64s(model.net.parameter_count(), "parameter block");
  std::copy(params.begin(), params.end(), model.net.store().values().begin());
  const auto buffers = r.f64s(model.net.buffers().size(), "running statistics");
  model.net.set_buffers(buffers);
  model.adam.step = r.u64();
  model.adam.m = r.f64s(model.net.parameter_count(), "first moment");
  model.adam.v = r.f64s(model.net.parameter_count(), "second moment");
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("checkpoint: trailing bytes", r.offset());
  }
  return model;
}

}  // namespace difiv
