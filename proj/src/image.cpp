#include "difiv/image.hpp"

#include <cmath>
#include <numeric>

#include "difiv/errors.hpp"

namespace difiv {

std::string Shape::str() const {
  return std::to_string(bands) + "x" + std::to_string(rows) + "x" + std::to_string(cols);
}

HyperImage::HyperImage(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (!std::isfinite(fill)) {
    throw NumericalError("HyperImage fill value must be finite");
  }
}

HyperImage::HyperImage(Shape shape, std::vector<double> data, std::vector<double> wavelengths)
    : shape_(shape), data_(data.begin(), data.end()) {
  if (data_.size() != shape_.size()) {
    throw DimensionError("HyperImage data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
  if (!all_finite()) {
    throw NumericalError("HyperImage data contains non-finite samples");
  }
  set_wavelengths(std::move(wavelengths));
}

void HyperImage::set_wavelengths(std::vector<double> wavelengths) {
  if (!wavelengths.empty()) {
    if (wavelengths.size() != shape_.bands) {
      throw DimensionError("wavelength list has " + std::to_string(wavelengths.size()) +
                           " entries for " + std::to_string(shape_.bands) + " bands");
    }
    for (std::size_t b = 0; b < wavelengths.size(); ++b) {
      if (!std::isfinite(wavelengths[b])) {
        throw NumericalError("wavelengths must be finite");
      }
      if (b > 0 && !(wavelengths[b] > wavelengths[b - 1])) {
        throw ValueError("wavelengths must be strictly increasing");
      }
    }
  }
  wavelengths_ = std::move(wavelengths);
}

bool HyperImage::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const HyperImage& a, const HyperImage& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(context) + ": shape " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

void require_finite(const HyperImage& img, const char* context) {
  if (!img.all_finite()) {
    throw NumericalError(std::string(context) + ": non-finite sample in input");
  }
}

double dot(const HyperImage& a, const HyperImage& b) {
  require_same_shape(a, b, "dot");
  const auto x = a.data();
  const auto y = b.data();
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

double squared_norm(const HyperImage& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

double norm(const HyperImage& a) { return std::sqrt(squared_norm(a)); }

void axpy(double alpha, const HyperImage& x, HyperImage& y) {
  require_same_shape(x, y, "axpy");
  auto yd = y.data();
  const auto xd = x.data();
  for (std::size_t k = 0; k < yd.size(); ++k) yd[k] += alpha * xd[k];
}

HyperImage linear_combination(double alpha, const HyperImage& a, double beta, const HyperImage& b) {
  require_same_shape(a, b, "linear_combination");
  HyperImage out(a.shape());
  auto o = out.data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = alpha * x[k] + beta * y[k];
  if (a.has_wavelengths()) out.set_wavelengths(a.wavelengths());
  return out;
}

HyperImage operator+(const HyperImage& a, const HyperImage& b) {
  return linear_combination(1.0, a, 1.0, b);
}

HyperImage operator-(const HyperImage& a, const HyperImage& b) {
  return linear_combination(1.0, a, -1.0, b);
}

HyperImage operator*(double s, const HyperImage& a) {
  HyperImage out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

}  // namespace difiv
