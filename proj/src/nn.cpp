#include "difiv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "difiv/errors.hpp"

namespace difiv::nn {
namespace {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_channels(const Tensor& x, std::size_t c, const char* op) {
  if (x.channels != c) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(c) +
                         " channels, got " + std::to_string(x.channels));
  }
}

}  // namespace

void Tensor::reshape(std::size_t c, std::size_t r, std::size_t w) {
  channels = c;
  rows = r;
  cols = w;
  data.resize(c * r * w);
}

ParamRef ParameterStore::allocate(std::size_t count) {
  ParamRef r{values_.size(), count};
  values_.resize(values_.size() + count, 0.0);
  grads_.resize(values_.size(), 0.0);
  return r;
}

void ParameterStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// --- depthwise -------------------------------------------------------------

DepthwiseConv3x3::DepthwiseConv3x3(std::size_t c, ParameterStore& store)
    : channels(c), weight(store.allocate(9 * c)) {}

void DepthwiseConv3x3::forward(const Tensor& x, Tensor& y, const ParameterStore& store) {
  require_channels(x, channels, "depthwise conv");
  input = x;
  y.reshape(x.channels, x.rows, x.cols);
  std::fill(y.data.begin(), y.data.end(), 0.0);
  const auto w = store.values(weight);
  const auto R = static_cast<std::ptrdiff_t>(x.rows);
  const auto C = static_cast<std::ptrdiff_t>(x.cols);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* in = x.channel(c).data();
    double* out = y.channel(c).data();
    for (std::ptrdiff_t da = -1; da <= 1; ++da) {
      for (std::ptrdiff_t db = -1; db <= 1; ++db) {
        const double k = w[c * 9 + static_cast<std::size_t>((da + 1) * 3 + (db + 1))];
        const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -da);
        const std::ptrdiff_t i1 = std::min(R, R - da);
        const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -db);
        const std::ptrdiff_t j1 = std::min(C, C - db);
        for (std::ptrdiff_t i = i0; i < i1; ++i) {
          double* o = out + i * C;
          const double* s = in + (i + da) * C + db;
          for (std::ptrdiff_t j = j0; j < j1; ++j) o[j] += k * s[j];
        }
      }
    }
  }
}

void DepthwiseConv3x3::backward(const Tensor& grad_out, Tensor& grad_in,
                                ParameterStore& store) const {
  grad_in.reshape(input.channels, input.rows, input.cols);
  std::fill(grad_in.data.begin(), grad_in.data.end(), 0.0);
  const auto w = store.values(weight);
  auto gw = store.grads(weight);
  const auto R = static_cast<std::ptrdiff_t>(input.rows);
  const auto C = static_cast<std::ptrdiff_t>(input.cols);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* in = input.channel(c).data();
    const double* g = grad_out.channel(c).data();
    double* gi = grad_in.channel(c).data();
    for (std::ptrdiff_t da = -1; da <= 1; ++da) {
      for (std::ptrdiff_t db = -1; db <= 1; ++db) {
        const std::size_t widx = c * 9 + static_cast<std::size_t>((da + 1) * 3 + (db + 1));
        const double k = w[widx];
        const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -da);
        const std::ptrdiff_t i1 = std::min(R, R - da);
        const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -db);
        const std::ptrdiff_t j1 = std::min(C, C - db);
        double acc = 0.0;
        for (std::ptrdiff_t i = i0; i < i1; ++i) {
          const double* go = g + i * C;
          const double* s = in + (i + da) * C + db;
          double* d = gi + (i + da) * C + db;
          for (std::ptrdiff_t j = j0; j < j1; ++j) {
            acc += go[j] * s[j];
            d[j] += k * go[j];
          }
        }
        gw[widx] += acc;
      }
    }
  }
}

// --- pointwise -------------------------------------------------------------

PointwiseConv::PointwiseConv(std::size_t in, std::size_t out, ParameterStore& store)
    : in_channels(in), out_channels(out), weight(store.allocate(in * out)), bias(store.allocate(out)) {}

void PointwiseConv::forward(const Tensor& x, Tensor& y, const ParameterStore& store) {
  require_channels(x, in_channels, "pointwise conv");
  input = x;
  const auto n = static_cast<Eigen::Index>(x.pixels());
  y.reshape(out_channels, x.rows, x.cols);
  ConstMatMap X(x.data.data(), n, static_cast<Eigen::Index>(in_channels));
  Eigen::Map<const RowMat> W(store.values(weight).data(), static_cast<Eigen::Index>(out_channels),
                             static_cast<Eigen::Index>(in_channels));
  MatMap Y(y.data.data(), n, static_cast<Eigen::Index>(out_channels));
  Y.noalias() = X * W.transpose();
  const auto b = store.values(bias);
  for (std::size_t o = 0; o < out_channels; ++o) Y.col(static_cast<Eigen::Index>(o)).array() += b[o];
}

void PointwiseConv::backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store) const {
  const auto n = static_cast<Eigen::Index>(input.pixels());
  const auto cin = static_cast<Eigen::Index>(in_channels);
  const auto cout = static_cast<Eigen::Index>(out_channels);
  ConstMatMap X(input.data.data(), n, cin);
  ConstMatMap G(grad_out.data.data(), n, cout);
  Eigen::Map<const RowMat> W(store.values(weight).data(), cout, cin);
  Eigen::Map<RowMat> dW(store.grads(weight).data(), cout, cin);
  dW.noalias() += G.transpose() * X;
  auto db = store.grads(bias);
  for (std::size_t o = 0; o < out_channels; ++o) db[o] += G.col(static_cast<Eigen::Index>(o)).sum();
  grad_in.reshape(in_channels, input.rows, input.cols);
  MatMap dX(grad_in.data.data(), n, cin);
  dX.noalias() = G * W;
}

// --- batch norm ------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t c, ParameterStore& store)
    : channels(c),
      gamma(store.allocate(c)),
      beta(store.allocate(c)),
      running_mean(c, 0.0),
      running_var(c, 1.0),
      inv_std(c, 1.0) {}

void BatchNorm::forward(const Tensor& x, Tensor& y, const ParameterStore& store, Mode mode,
                        bool update_running_stats) {
  require_channels(x, channels, "batch norm");
  const auto g = store.values(gamma);
  const auto b = store.values(beta);
  const std::size_t n = x.pixels();
  xhat.reshape(x.channels, x.rows, x.cols);
  y.reshape(x.channels, x.rows, x.cols);
  cached_mode = mode;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto in = x.channel(c);
    double mean;
    double var;
    if (mode == Mode::kTrain) {
      // Extended accumulators: batch statistics feed every output, so their
      // rounding would otherwise dominate finite-difference noise.
      long double acc = 0.0L;
      for (double v : in) acc += v;
      mean = static_cast<double>(acc / static_cast<long double>(n));
      acc = 0.0L;
      for (double v : in) acc += static_cast<long double>(v - mean) * (v - mean);
      var = static_cast<double>(acc / static_cast<long double>(n));
      if (update_running_stats) {
        const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
        running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean;
        running_var[c] = momentum * running_var[c] + (1.0 - momentum) * unbiased;
      }
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = is;
    auto xh = xhat.channel(c);
    auto out = y.channel(c);
    for (std::size_t k = 0; k < n; ++k) {
      xh[k] = (in[k] - mean) * is;
      out[k] = g[c] * xh[k] + b[c];
    }
  }
}

void BatchNorm::backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store) const {
  const auto g = store.values(gamma);
  auto dg = store.grads(gamma);
  auto db = store.grads(beta);
  const std::size_t n = xhat.pixels();
  const double nd = static_cast<double>(n);
  grad_in.reshape(xhat.channels, xhat.rows, xhat.cols);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto go = grad_out.channel(c);
    const auto xh = xhat.channel(c);
    auto gi = grad_in.channel(c);
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sum_g += go[k];
      sum_gx += go[k] * xh[k];
    }
    dg[c] += sum_gx;
    db[c] += sum_g;
    const double scale = g[c] * inv_std[c];
    if (cached_mode == Mode::kTrain) {
      for (std::size_t k = 0; k < n; ++k) {
        gi[k] = scale * (go[k] - sum_g / nd - xh[k] * sum_gx / nd);
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) gi[k] = scale * go[k];
    }
  }
}

// --- relu ------------------------------------------------------------------

void Relu::forward(const Tensor& x, Tensor& y) {
  y.reshape(x.channels, x.rows, x.cols);
  for (std::size_t k = 0; k < x.size(); ++k) y.data[k] = x.data[k] > 0.0 ? x.data[k] : 0.0;
  output = y;
}

void Relu::backward(const Tensor& grad_out, Tensor& grad_in) const {
  grad_in.reshape(output.channels, output.rows, output.cols);
  for (std::size_t k = 0; k < output.size(); ++k) {
    grad_in.data[k] = output.data[k] > 0.0 ? grad_out.data[k] : 0.0;
  }
}

// --- block -----------------------------------------------------------------

std::size_t SeparableBlock::parameter_count() const {
  return depthwise.weight.count + pointwise.weight.count + pointwise.bias.count +
         (norm ? norm->gamma.count + norm->beta.count : 0);
}

void SeparableBlock::forward(const Tensor& x, Tensor& y, const ParameterStore& store, Mode mode,
                             bool update_running_stats) {
  depthwise.forward(x, after_dw, store);
  if (!norm && !relu) {
    pointwise.forward(after_dw, y, store);
    return;
  }
  pointwise.forward(after_dw, after_pw, store);
  const Tensor* pre = &after_pw;
  if (norm) {
    norm->forward(after_pw, relu ? after_bn : y, store, mode, update_running_stats);
    pre = &after_bn;
  }
  if (relu) act.forward(*pre, y);
}

void SeparableBlock::backward(const Tensor& grad_out, Tensor& grad_in, ParameterStore& store) {
  // The ops keep their own forward caches, so the after_* tensors serve as
  // gradient scratch here.
  const Tensor* g = &grad_out;
  if (relu) {
    act.backward(*g, after_bn);
    g = &after_bn;
  }
  if (norm) {
    norm->backward(*g, after_pw, store);
    g = &after_pw;
  }
  pointwise.backward(*g, after_dw, store);
  depthwise.backward(after_dw, grad_in, store);
}

// --- network ---------------------------------------------------------------

std::vector<LayerSpec> residual_denoiser_layout(std::size_t channels, std::size_t hidden,
                                                std::size_t depth) {
  if (channels == 0 || hidden == 0 || depth < 2) {
    throw ValueError("residual_denoiser_layout: need channels, hidden > 0 and depth >= 2");
  }
  std::vector<LayerSpec> layout;
  layout.push_back({channels, hidden, false, true});
  for (std::size_t k = 1; k + 1 < depth; ++k) layout.push_back({hidden, hidden, true, true});
  layout.push_back({hidden, channels, false, false});
  return layout;
}

std::size_t separable_parameter_count(const std::vector<LayerSpec>& layout) {
  std::size_t total = 0;
  for (const auto& l : layout) {
    total += 9 * l.in_channels + l.in_channels * l.out_channels + l.out_channels;
    if (l.batch_norm) total += 2 * l.out_channels;
  }
  return total;
}

std::size_t dense_parameter_count(const std::vector<LayerSpec>& layout) {
  std::size_t total = 0;
  for (const auto& l : layout) {
    total += 9 * l.in_channels * l.out_channels + l.out_channels;
    if (l.batch_norm) total += 2 * l.out_channels;
  }
  return total;
}

Network::Network(const std::vector<LayerSpec>& layout) {
  if (layout.empty()) throw ValueError("Network: empty layout");
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& l = layout[k];
    if (k > 0 && layout[k - 1].out_channels != l.in_channels) {
      throw DimensionError("Network: layer " + std::to_string(k) + " input width mismatch");
    }
    SeparableBlock blk;
    blk.depthwise = DepthwiseConv3x3(l.in_channels, store_);
    blk.pointwise = PointwiseConv(l.in_channels, l.out_channels, store_);
    if (l.batch_norm) blk.norm = BatchNorm(l.out_channels, store_);
    blk.relu = l.relu;
    blocks_.push_back(std::move(blk));
  }
  if (layout.back().out_channels != layout.front().in_channels) {
    throw DimensionError("Network: residual output width must equal input width");
  }
  acts_.resize(blocks_.size());
  grads_.resize(2);
}

std::size_t Network::in_channels() const {
  return blocks_.empty() ? 0 : blocks_.front().in_channels();
}

std::vector<LayerSpec> Network::layout() const {
  std::vector<LayerSpec> out;
  for (const auto& b : blocks_) {
    out.push_back({b.in_channels(), b.out_channels(), b.norm.has_value(), b.relu});
  }
  return out;
}

void Network::initialize(std::mt19937_64& rng) {
  for (auto& blk : blocks_) {
    std::normal_distribution<double> dw(0.0, std::sqrt(2.0 / 9.0));
    for (double& w : store_.values(blk.depthwise.weight)) w = dw(rng);
    std::normal_distribution<double> pw(0.0, std::sqrt(2.0 / static_cast<double>(blk.in_channels())));
    for (double& w : store_.values(blk.pointwise.weight)) w = pw(rng);
    for (double& b : store_.values(blk.pointwise.bias)) b = 0.0;
    if (blk.norm) {
      for (double& g : store_.values(blk.norm->gamma)) g = 1.0;
      for (double& b : store_.values(blk.norm->beta)) b = 0.0;
      std::fill(blk.norm->running_mean.begin(), blk.norm->running_mean.end(), 0.0);
      std::fill(blk.norm->running_var.begin(), blk.norm->running_var.end(), 1.0);
    }
  }
}

const Tensor& Network::forward(const Tensor& x, Mode mode, bool update_running_stats) {
  require_channels(x, in_channels(), "network forward");
  const Tensor* cur = &x;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    blocks_[k].forward(*cur, acts_[k], store_, mode, update_running_stats);
    cur = &acts_[k];
  }
  output_.reshape(x.channels, x.rows, x.cols);
  for (std::size_t k = 0; k < x.size(); ++k) output_.data[k] = x.data[k] - cur->data[k];
  return output_;
}

const Tensor& Network::backward(const Tensor& grad_output) {
  if (!grad_output.same_shape(output_)) {
    throw DimensionError("network backward: gradient shape does not match last output");
  }
  // d(output)/d(residual) = -I
  Tensor& g0 = grads_[0];
  g0.reshape(grad_output.channels, grad_output.rows, grad_output.cols);
  for (std::size_t k = 0; k < g0.size(); ++k) g0.data[k] = -grad_output.data[k];
  std::size_t cur = 0;
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    blocks_[k].backward(grads_[cur], grads_[1 - cur], store_);
    cur = 1 - cur;
  }
  grad_input_.reshape(grad_output.channels, grad_output.rows, grad_output.cols);
  for (std::size_t k = 0; k < grad_input_.size(); ++k) {
    grad_input_.data[k] = grad_output.data[k] + grads_[cur].data[k];
  }
  return grad_input_;
}

std::vector<double> Network::buffers() const {
  std::vector<double> out;
  for (const auto& b : blocks_) {
    if (!b.norm) continue;
    out.insert(out.end(), b.norm->running_mean.begin(), b.norm->running_mean.end());
    out.insert(out.end(), b.norm->running_var.begin(), b.norm->running_var.end());
  }
  return out;
}

void Network::set_buffers(std::span<const double> values) {
  std::size_t need = 0;
  for (const auto& b : blocks_) {
    if (b.norm) need += 2 * b.norm->channels;
  }
  if (values.size() != need) throw DimensionError("Network::set_buffers: wrong buffer length");
  std::size_t k = 0;
  for (auto& b : blocks_) {
    if (!b.norm) continue;
    for (double& v : b.norm->running_mean) v = values[k++];
    for (double& v : b.norm->running_var) v = values[k++];
  }
}

// --- optimizer and losses ---------------------------------------------------

void AdamState::reset(std::size_t n) {
  step = 0;
  m.assign(n, 0.0);
  v.assign(n, 0.0);
}

void AdamState::update(std::span<double> params, std::span<const double> grads, double lr) {
  if (m.size() != params.size()) reset(params.size());
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m[k] = beta1 * m[k] + (1.0 - beta1) * grads[k];
    v[k] = beta2 * v[k] + (1.0 - beta2) * grads[k] * grads[k];
    params[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
  }
}

double l1_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
  if (!pred.same_shape(target)) throw DimensionError("l1_loss: shape mismatch");
  if (grad) grad->reshape(pred.channels, pred.rows, pred.cols);
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double r = pred.data[k] - target.data[k];
    loss += std::abs(r);
    if (grad) grad->data[k] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
  }
  return loss;
}

double huber_loss(const Tensor& pred, const Tensor& target, double delta, Tensor* grad) {
  if (!pred.same_shape(target)) throw DimensionError("huber_loss: shape mismatch");
  if (grad) grad->reshape(pred.channels, pred.rows, pred.cols);
  // Extended accumulator keeps finite-difference checks above rounding noise.
  long double loss = 0.0L;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double r = pred.data[k] - target.data[k];
    if (std::abs(r) <= delta) {
      loss += static_cast<long double>(r) * r / (2.0L * delta);
      if (grad) grad->data[k] = r / delta;
    } else {
      loss += static_cast<long double>(std::abs(r)) - 0.5L * delta;
      if (grad) grad->data[k] = r > 0.0 ? 1.0 : -1.0;
    }
  }
  return static_cast<double>(loss);
}

}  // namespace difiv::nn
