#include "invad/diffusion.hpp"

#include <cmath>
#include <string>

#include "invad/error.hpp"

namespace invad {

namespace {

void check_subset(const NoiseSchedule& schedule, const TimestepSubset& subset) {
    if (subset.steps.empty()) throw InvalidArgument("empty timestep subset");
    Step prev = kCleanStep;
    for (Step s : subset.steps) {
        if (s <= prev || s >= schedule.total_steps()) {
            throw InvalidArgument("timestep subset must be strictly ascending within [0, T)");
        }
        prev = s;
    }
}

Tensor transfer(const Tensor& x, const Tensor& eps, double ab_from, double ab_to) {
    const double root_from = std::sqrt(ab_from);
    const double noise_from = std::sqrt(1.0 - ab_from);
    const double root_to = std::sqrt(ab_to);
    const double noise_to = std::sqrt(1.0 - ab_to);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = (x[i] - noise_from * eps[i]) / root_from;
        out[i] = root_to * f + noise_to * eps[i];
    }
    return out;
}

// One DDIM move for every sample of a batch; direction checked by the caller.
std::vector<Tensor> move_batch(const NoiseSchedule& schedule, const EpsilonModel& model, std::span<const Tensor> xs,
                               Step from, Step to) {
    if (from == to) return {xs.begin(), xs.end()};
    for (const Tensor& x : xs) check_latent_shape(model, x, "ddim step");
    const std::vector<Tensor> eps = model.predict_batch(xs, schedule.clamp_trained(from));
    if (eps.size() != xs.size()) throw InvalidArgument("ddim step: model returned wrong batch size");
    const double ab_from = schedule.alpha_bar(from);
    const double ab_to = schedule.alpha_bar(to);
    std::vector<Tensor> out;
    out.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require_same_shape(eps[i], xs[i], "ddim step");
        require_finite(eps[i], "ddim step");
        out.push_back(transfer(xs[i], eps[i], ab_from, ab_to));
    }
    return out;
}

void check_step_range(const NoiseSchedule& schedule, Step s) {
    if (s < kCleanStep || s >= schedule.total_steps()) {
        throw InvalidArgument("timestep " + std::to_string(s) + " out of range");
    }
}

}  // namespace

Tensor q_sample(const NoiseSchedule& schedule, const Tensor& x0, Step t, const Tensor& eps) {
    require_same_shape(x0, eps, "q_sample");
    check_step_range(schedule, t);
    const double ab = schedule.alpha_bar(t);
    return lincomb(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

Tensor ddim_reverse_step(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& x, Step from,
                         Step to) {
    check_step_range(schedule, from);
    check_step_range(schedule, to);
    if (to > from) throw InvalidArgument("ddim_reverse_step: timesteps must descend");
    return std::move(move_batch(schedule, model, std::span<const Tensor>(&x, 1), from, to).front());
}

Tensor ddim_invert_step(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& x, Step from,
                        Step to) {
    check_step_range(schedule, from);
    check_step_range(schedule, to);
    if (to < from) throw InvalidArgument("ddim_invert_step: timesteps must ascend");
    return std::move(move_batch(schedule, model, std::span<const Tensor>(&x, 1), from, to).front());
}

std::vector<Tensor> invert_batch(const NoiseSchedule& schedule, const EpsilonModel& model, std::span<const Tensor> z0,
                                 const TimestepSubset& subset) {
    check_subset(schedule, subset);
    std::vector<Tensor> z(z0.begin(), z0.end());
    Step from = kCleanStep;
    for (Step to : subset.steps) {
        z = move_batch(schedule, model, z, from, to);
        from = to;
    }
    return z;
}

std::vector<Tensor> ddim_sample_batch(const NoiseSchedule& schedule, const EpsilonModel& model,
                                      std::span<const Tensor> x_last, const TimestepSubset& subset) {
    check_subset(schedule, subset);
    std::vector<Tensor> x(x_last.begin(), x_last.end());
    for (std::size_t i = subset.size(); i-- > 0;) {
        const Step to = i == 0 ? kCleanStep : subset.steps[i - 1];
        x = move_batch(schedule, model, x, subset.steps[i], to);
    }
    return x;
}

int perturbation_index(double ratio, std::size_t subset_size) {
    if (!(ratio > 0.0) || ratio > 1.0) throw InvalidArgument("perturbation ratio must be in (0, 1]");
    return static_cast<int>(std::floor(ratio * static_cast<double>(subset_size) + 1e-9));
}

std::vector<Tensor> reconstruct_batch(const NoiseSchedule& schedule, const EpsilonModel& model,
                                      std::span<const Tensor> z0, const TimestepSubset& subset, double ratio,
                                      std::span<Rng> rngs) {
    check_subset(schedule, subset);
    if (rngs.size() != z0.size()) throw InvalidArgument("reconstruct: one rng per sample required");
    const int k = perturbation_index(ratio, subset.size());
    if (k < 1) {
        throw InvalidArgument("reconstruct: ratio " + std::to_string(ratio) + " selects no step of a " +
                              std::to_string(subset.size()) + "-step subset");
    }
    const Step start = subset.steps[static_cast<std::size_t>(k - 1)];
    std::vector<Tensor> x;
    x.reserve(z0.size());
    for (std::size_t i = 0; i < z0.size(); ++i) {
        Tensor eps(z0[i].shape());
        for (double& v : eps.values()) v = rngs[i].gaussian();
        x.push_back(q_sample(schedule, z0[i], start, eps));
    }
    for (int i = k - 1; i >= 0; --i) {
        const Step to = i == 0 ? kCleanStep : subset.steps[static_cast<std::size_t>(i - 1)];
        x = move_batch(schedule, model, x, subset.steps[static_cast<std::size_t>(i)], to);
    }
    return x;
}

Tensor ddim_sample(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& x_last,
                   const TimestepSubset& subset) {
    return std::move(ddim_sample_batch(schedule, model, std::span<const Tensor>(&x_last, 1), subset).front());
}

Tensor invert(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& z0,
              const TimestepSubset& subset) {
    return std::move(invert_batch(schedule, model, std::span<const Tensor>(&z0, 1), subset).front());
}

Tensor reconstruct(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& z0,
                   const TimestepSubset& subset, double ratio, Rng& rng) {
    return std::move(
        reconstruct_batch(schedule, model, std::span<const Tensor>(&z0, 1), subset, ratio, std::span<Rng>(&rng, 1))
            .front());
}

}  // namespace invad
