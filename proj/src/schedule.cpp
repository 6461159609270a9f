#include "invad/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "invad/error.hpp"

namespace invad {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, double beta_first, double beta_last)
    : betas_(std::move(betas)), beta_first_(beta_first), beta_last_(beta_last) {
    alpha_bars_.resize(betas_.size() + 1);
    alpha_bars_[0] = 1.0;
    for (std::size_t t = 0; t < betas_.size(); ++t) alpha_bars_[t + 1] = alpha_bars_[t] * (1.0 - betas_[t]);
}

NoiseSchedule NoiseSchedule::linear(int total_steps, double beta_first, double beta_last) {
    if (total_steps < 1) throw InvalidArgument("linear_schedule: T must be >= 1");
    if (!(beta_first > 0.0) || !(beta_first <= beta_last) || !(beta_last < 1.0)) {
        throw InvalidArgument("linear_schedule: need 0 < beta1 <= betaT < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(total_steps));
    for (int t = 0; t < total_steps; ++t) {
        const double frac = total_steps == 1 ? 0.0 : static_cast<double>(t) / (total_steps - 1);
        betas[static_cast<std::size_t>(t)] = beta_first + (beta_last - beta_first) * frac;
    }
    return NoiseSchedule(std::move(betas), beta_first, beta_last);
}

double NoiseSchedule::beta(Step s) const {
    if (s < 0 || s >= total_steps()) throw InvalidArgument("beta: step " + std::to_string(s) + " out of range");
    return betas_[static_cast<std::size_t>(s)];
}

double NoiseSchedule::alpha_bar(Step s) const {
    if (s < kCleanStep || s >= total_steps()) {
        throw InvalidArgument("alpha_bar: step " + std::to_string(s) + " out of range");
    }
    return alpha_bars_[static_cast<std::size_t>(s + 1)];
}

double NoiseSchedule::ode_p(Step s) const { return std::sqrt(1.0 / alpha_bar(s) - 1.0); }

std::string_view to_string(SubsetPolicy policy) {
    switch (policy) {
        case SubsetPolicy::Uniform: return "uniform";
        case SubsetPolicy::Quad: return "quad";
        case SubsetPolicy::Cube: return "cube";
        case SubsetPolicy::Exp: return "exp";
    }
    return "?";
}

SubsetPolicy parse_subset_policy(std::string_view name) {
    if (name == "uniform") return SubsetPolicy::Uniform;
    if (name == "quad") return SubsetPolicy::Quad;
    if (name == "cube") return SubsetPolicy::Cube;
    if (name == "exp") return SubsetPolicy::Exp;
    throw InvalidArgument("unknown subset policy '" + std::string(name) + "'");
}

double subset_warp(SubsetPolicy policy, double u) {
    switch (policy) {
        case SubsetPolicy::Uniform: return u;
        case SubsetPolicy::Quad: return u * u;
        case SubsetPolicy::Cube: return u * u * u;
        case SubsetPolicy::Exp: return std::expm1(5.0 * u) / std::expm1(5.0);
    }
    return u;
}

TimestepSubset make_subset(int total_steps, int count, SubsetPolicy policy) {
    if (total_steps < 1) throw InvalidArgument("make_subset: T must be >= 1");
    if (count < 1 || count > total_steps) {
        throw InvalidArgument("make_subset: need 1 <= S <= T (S=" + std::to_string(count) +
                              ", T=" + std::to_string(total_steps) + ")");
    }
    TimestepSubset subset;
    subset.policy = policy;
    subset.steps.reserve(static_cast<std::size_t>(count));
    for (int i = 1; i <= count; ++i) {
        long long ceiled;
        if (policy == SubsetPolicy::Uniform) {
            const long long num = static_cast<long long>(i) * total_steps;
            ceiled = (num + count - 1) / count;
        } else {
            const double x = subset_warp(policy, static_cast<double>(i) / count) * total_steps;
            const double nearest = std::round(x);
            ceiled = static_cast<long long>(std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x));
        }
        if (i == count) ceiled = total_steps;
        const Step step = static_cast<Step>(std::max(ceiled, 1LL) - 1);
        if (subset.steps.empty() || step > subset.steps.back()) subset.steps.push_back(step);
    }
    return subset;
}

}  // namespace invad
