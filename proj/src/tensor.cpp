#include "invad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "invad/error.hpp"

namespace invad {

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_volume(shape_)) {
        throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_string(shape_));
    }
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min() const {
    if (data_.empty()) throw InvalidArgument("min of empty tensor");
    return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
    if (data_.empty()) throw InvalidArgument("max of empty tensor");
    return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::squared_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
}

std::size_t Tensor::argmax() const {
    if (data_.empty()) throw InvalidArgument("argmax of empty tensor");
    return static_cast<std::size_t>(std::max_element(data_.begin(), data_.end()) - data_.begin());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (!a.same_shape(b)) {
        throw InvalidArgument(std::string(context) + ": shape mismatch " + shape_string(a.shape()) +
                              " vs " + shape_string(b.shape()));
    }
}

void require_finite(const Tensor& t, const char* context) {
    if (!t.all_finite()) throw NumericFailure(std::string(context) + ": non-finite value");
}

Tensor lincomb(double a, const Tensor& x, double b, const Tensor& y) {
    require_same_shape(x, y, "lincomb");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
    return Tensor(x.shape(), std::move(out));
}

Tensor scaled(double a, const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i];
    return Tensor(x.shape(), std::move(out));
}

Tensor operator+(const Tensor& x, const Tensor& y) { return lincomb(1.0, x, 1.0, y); }
Tensor operator-(const Tensor& x, const Tensor& y) { return lincomb(1.0, x, -1.0, y); }

namespace {

struct Tap {
    std::size_t lo;
    std::size_t hi;
    double frac;
};

// Source coordinate for each output index under corner alignment.
std::vector<Tap> taps(std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    for (std::size_t i = 0; i < dst; ++i) {
        if (dst == 1 || src == 1) {
            out[i] = {0, 0, 0.0};
            continue;
        }
        // Exact integer numerator keeps aligned grid points exact.
        const std::size_t num = i * (src - 1);
        const std::size_t den = dst - 1;
        const std::size_t lo = num / den;
        const std::size_t rem = num % den;
        const std::size_t hi = std::min(lo + 1, src - 1);
        out[i] = {lo, hi, static_cast<double>(rem) / static_cast<double>(den)};
    }
    return out;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& map, std::size_t out_height, std::size_t out_width) {
    if (map.rank() != 2) throw InvalidArgument("bilinear_upsample: expected a 2-D map, got " + shape_string(map.shape()));
    if (out_height == 0 || out_width == 0) throw InvalidArgument("bilinear_upsample: zero target dimension");
    const std::size_t h = map.dim(0);
    const std::size_t w = map.dim(1);
    if (h == 0 || w == 0) throw InvalidArgument("bilinear_upsample: empty source map");
    if (out_height < h || out_width < w) {
        throw InvalidArgument("bilinear_upsample: target " + std::to_string(out_height) + "x" +
                              std::to_string(out_width) + " smaller than source " + shape_string(map.shape()));
    }

    const auto ys = taps(h, out_height);
    const auto xs = taps(w, out_width);
    Tensor out = Tensor::map2d(out_height, out_width);
    for (std::size_t y = 0; y < out_height; ++y) {
        const Tap& ty = ys[y];
        for (std::size_t x = 0; x < out_width; ++x) {
            const Tap& tx = xs[x];
            // std::lerp is exact at frac 0 and bounded by its endpoints.
            const double row0 = std::lerp(map.at(ty.lo, tx.lo), map.at(ty.lo, tx.hi), tx.frac);
            const double row1 = std::lerp(map.at(ty.hi, tx.lo), map.at(ty.hi, tx.hi), tx.frac);
            out.at(y, x) = std::lerp(row0, row1, ty.frac);
        }
    }
    return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = f(probe);
        probe[i] = orig - step;
        const double down = f(probe);
        probe[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericFailure("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace invad
