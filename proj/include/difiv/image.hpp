#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "difiv/aligned.hpp"

namespace difiv {

struct Shape {
  std::size_t bands = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t pixels() const { return rows * cols; }
  std::size_t size() const { return bands * rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// A band-major raster cube (bands x rows x cols). Samples are stored band
/// after band, row-major within a band. Wavelengths (micrometers) are
/// optional metadata and, when present, strictly increasing.
///
/// Public constructors reject non-finite samples. Mutable access through
/// data() or operator() is unchecked; operators that consume images verify
/// finiteness on entry.
class HyperImage {
 public:
  HyperImage() = default;
  HyperImage(Shape shape, double fill = 0.0);
  HyperImage(std::size_t bands, std::size_t rows, std::size_t cols, double fill = 0.0)
      : HyperImage(Shape{bands, rows, cols}, fill) {}
  HyperImage(Shape shape, std::vector<double> data, std::vector<double> wavelengths = {});

  const Shape& shape() const { return shape_; }
  std::size_t bands() const { return shape_.bands; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t pixels() const { return shape_.pixels(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t b, std::size_t i, std::size_t j) {
    return data_[(b * shape_.rows + i) * shape_.cols + j];
  }
  double operator()(std::size_t b, std::size_t i, std::size_t j) const {
    return data_[(b * shape_.rows + i) * shape_.cols + j];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> band(std::size_t b) { return std::span(data_).subspan(b * pixels(), pixels()); }
  std::span<const double> band(std::size_t b) const {
    return std::span(data_).subspan(b * pixels(), pixels());
  }

  const std::vector<double>& wavelengths() const { return wavelengths_; }
  bool has_wavelengths() const { return !wavelengths_.empty(); }
  void set_wavelengths(std::vector<double> wavelengths);

  bool all_finite() const;

 private:
  Shape shape_;
  AlignedVector data_;
  std::vector<double> wavelengths_;
};

// Throws DimensionError naming `context` when shapes differ.
void require_same_shape(const HyperImage& a, const HyperImage& b, const char* context);
// Throws NumericalError naming `context` on any NaN/Inf sample.
void require_finite(const HyperImage& img, const char* context);

double dot(const HyperImage& a, const HyperImage& b);
double squared_norm(const HyperImage& a);
double norm(const HyperImage& a);

// y += alpha * x
void axpy(double alpha, const HyperImage& x, HyperImage& y);
// Returns alpha * a + beta * b.
HyperImage linear_combination(double alpha, const HyperImage& a, double beta, const HyperImage& b);
HyperImage operator+(const HyperImage& a, const HyperImage& b);
HyperImage operator-(const HyperImage& a, const HyperImage& b);
HyperImage operator*(double s, const HyperImage& a);

}  // namespace difiv
