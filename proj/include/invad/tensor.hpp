#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace invad {

/// Dense row-major array of doubles with an explicit shape.
///
/// Latents and feature maps use shape {C, h, w}; 2-D maps use {h, w}.
/// Arithmetic helpers return new values; a Tensor is never resized in place.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor latent(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0) {
        return Tensor({channels, height, width}, fill);
    }
    static Tensor map2d(std::size_t height, std::size_t width, double fill = 0.0) {
        return Tensor({height, width}, fill);
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // {h, w} indexing
    double at(std::size_t y, std::size_t x) const { return data_[y * shape_[1] + x]; }
    double& at(std::size_t y, std::size_t x) { return data_[y * shape_[1] + x]; }
    // {C, h, w} indexing
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
    bool all_finite() const noexcept;

    double min() const;
    double max() const;
    double sum() const noexcept;
    double squared_norm() const noexcept;
    std::size_t argmax() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);
std::size_t shape_volume(const std::vector<std::size_t>& shape);

// Throws InvalidArgument unless a and b have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);
// Throws NumericFailure if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* context);

// a*x + b*y, elementwise.
Tensor lincomb(double a, const Tensor& x, double b, const Tensor& y);
Tensor scaled(double a, const Tensor& x);
Tensor operator+(const Tensor& x, const Tensor& y);
Tensor operator-(const Tensor& x, const Tensor& y);

/// Corner-aligned bilinear resize of an {h, w} map to {H, W}.
///
/// Output pixel (Y, X) samples the source at (Y*(h-1)/(H-1), X*(w-1)/(W-1));
/// a unit output dimension samples source row/column 0. The four output
/// corners equal the four source corners, and every source pixel lands on an
/// output pixel exactly when (H-1) is a multiple of (h-1) (likewise for W).
Tensor bilinear_upsample(const Tensor& map, std::size_t out_height, std::size_t out_width);

/// Central-difference gradient of a scalar function, one coordinate at a time.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step);

}  // namespace invad
