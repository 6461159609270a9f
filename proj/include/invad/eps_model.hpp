#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "invad/schedule.hpp"
#include "invad/tensor.hpp"

namespace invad {

/// Noise-prediction network eps(x_t, t).
///
/// Implementations must be safe for concurrent const calls.
class EpsilonModel {
public:
    virtual ~EpsilonModel() = default;

    /// Expected latent shape, or empty when any shape is accepted.
    virtual std::vector<std::size_t> latent_shape() const { return {}; }

    /// One output per input, all evaluated at the same step.
    virtual std::vector<Tensor> predict_batch(std::span<const Tensor> xs, Step step) const = 0;

    Tensor predict(const Tensor& x, Step step) const;
};

/// Validated single evaluation: shape check against the model, finite output.
Tensor predict_eps(const EpsilonModel& model, const Tensor& x, Step step);
void check_latent_shape(const EpsilonModel& model, const Tensor& x, const char* context);

/// Exact optimal eps for data ~ N(mu, var * I):
///   eps*(x, t) = sqrt(1 - ab) / (ab * var + 1 - ab) * (x - sqrt(ab) * mu)
class AnalyticGaussianModel final : public EpsilonModel {
public:
    AnalyticGaussianModel(const NoiseSchedule& schedule, double mean, double variance);
    AnalyticGaussianModel(const NoiseSchedule& schedule, Tensor mean, double variance);

    std::vector<std::size_t> latent_shape() const override;
    std::vector<Tensor> predict_batch(std::span<const Tensor> xs, Step step) const override;

    double variance() const noexcept { return variance_; }

private:
    Tensor eval(const Tensor& x, Step step) const;

    const NoiseSchedule* schedule_;
    double scalar_mean_ = 0.0;
    std::optional<Tensor> mean_;
    double variance_;
};

/// Forwards to another model and counts per-sample evaluations (NFE).
class CountingModel final : public EpsilonModel {
public:
    explicit CountingModel(const EpsilonModel& inner) : inner_(&inner) {}

    std::vector<std::size_t> latent_shape() const override { return inner_->latent_shape(); }
    std::vector<Tensor> predict_batch(std::span<const Tensor> xs, Step step) const override;

    std::uint64_t evaluations() const noexcept { return count_.load(); }
    void reset() noexcept { count_.store(0); }

private:
    const EpsilonModel* inner_;
    mutable std::atomic<std::uint64_t> count_{0};
};

}  // namespace invad
