#include "invad/eps_model.hpp"

#include <cmath>

#include "invad/error.hpp"

namespace invad {

Tensor EpsilonModel::predict(const Tensor& x, Step step) const {
    auto out = predict_batch(std::span<const Tensor>(&x, 1), step);
    return std::move(out.front());
}

void check_latent_shape(const EpsilonModel& model, const Tensor& x, const char* context) {
    const auto expected = model.latent_shape();
    if (!expected.empty() && expected != x.shape()) {
        throw InvalidArgument(std::string(context) + ": latent shape " + shape_string(x.shape()) +
                              " does not match model shape " + shape_string(expected));
    }
}

Tensor predict_eps(const EpsilonModel& model, const Tensor& x, Step step) {
    check_latent_shape(model, x, "predict_eps");
    Tensor eps = model.predict(x, step);
    require_same_shape(eps, x, "predict_eps");
    require_finite(eps, "predict_eps");
    return eps;
}

AnalyticGaussianModel::AnalyticGaussianModel(const NoiseSchedule& schedule, double mean, double variance)
    : schedule_(&schedule), scalar_mean_(mean), variance_(variance) {
    if (!(variance > 0.0)) throw InvalidArgument("AnalyticGaussianModel: variance must be positive");
}

AnalyticGaussianModel::AnalyticGaussianModel(const NoiseSchedule& schedule, Tensor mean, double variance)
    : schedule_(&schedule), mean_(std::move(mean)), variance_(variance) {
    if (!(variance > 0.0)) throw InvalidArgument("AnalyticGaussianModel: variance must be positive");
}

std::vector<std::size_t> AnalyticGaussianModel::latent_shape() const {
    return mean_ ? mean_->shape() : std::vector<std::size_t>{};
}

Tensor AnalyticGaussianModel::eval(const Tensor& x, Step step) const {
    check_latent_shape(*this, x, "AnalyticGaussianModel");
    const double ab = schedule_->alpha_bar(step);
    const double gain = std::sqrt(1.0 - ab) / (ab * variance_ + 1.0 - ab);
    const double root_ab = std::sqrt(ab);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double mu = mean_ ? (*mean_)[i] : scalar_mean_;
        out[i] = gain * (x[i] - root_ab * mu);
    }
    return out;
}

std::vector<Tensor> AnalyticGaussianModel::predict_batch(std::span<const Tensor> xs, Step step) const {
    std::vector<Tensor> out;
    out.reserve(xs.size());
    for (const Tensor& x : xs) out.push_back(eval(x, step));
    return out;
}

std::vector<Tensor> CountingModel::predict_batch(std::span<const Tensor> xs, Step step) const {
    count_.fetch_add(xs.size());
    return inner_->predict_batch(xs, step);
}

}  // namespace invad
