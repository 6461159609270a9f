#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace invad {

/// Timestep index. Trained steps are 0..T-1; kCleanStep is the virtual
/// clean-data endpoint with alpha_bar = 1 where inversion starts and sampling ends.
using Step = int;
inline constexpr Step kCleanStep = -1;

/// Linear-beta noise schedule with cumulative signal retention alpha_bar.
class NoiseSchedule {
public:
    static NoiseSchedule linear(int total_steps, double beta_first, double beta_last);

    int total_steps() const noexcept { return static_cast<int>(betas_.size()); }
    double beta_first() const noexcept { return beta_first_; }
    double beta_last() const noexcept { return beta_last_; }

    /// beta for trained step s in [0, T).
    double beta(Step s) const;
    /// alpha_bar for s in [kCleanStep, T); alpha_bar(kCleanStep) == 1.
    double alpha_bar(Step s) const;

    /// ODE coordinates: p = sqrt(1/alpha_bar - 1), y = x / sqrt(alpha_bar).
    double ode_p(Step s) const;

    /// Nearest trained step, used when a model must be queried at the clean endpoint.
    Step clamp_trained(Step s) const noexcept { return s < 0 ? 0 : s; }

private:
    NoiseSchedule(std::vector<double> betas, double beta_first, double beta_last);

    std::vector<double> betas_;
    std::vector<double> alpha_bars_;  // alpha_bars_[0] is the clean endpoint
    double beta_first_;
    double beta_last_;
};

enum class SubsetPolicy { Uniform, Quad, Cube, Exp };

std::string_view to_string(SubsetPolicy policy);
SubsetPolicy parse_subset_policy(std::string_view name);
/// Warp g(u) on [0, 1] for a policy.
double subset_warp(SubsetPolicy policy, double u);

/// Strictly ascending trained steps whose last entry is T-1.
struct TimestepSubset {
    std::vector<Step> steps;
    SubsetPolicy policy = SubsetPolicy::Uniform;

    std::size_t size() const noexcept { return steps.size(); }
};

/// steps_i = ceil(g(i/S) * T) - 1 for i = 1..S, deduplicated.
///
/// The uniform policy is evaluated in exact integer arithmetic. Other
/// policies snap g(i/S)*T to the nearest integer when within 1e-9 before the
/// ceiling, so float noise cannot push an integral product up by one.
/// Non-uniform policies may collide at small i for large S; duplicates are
/// dropped, so the returned size can be below S.
TimestepSubset make_subset(int total_steps, int count, SubsetPolicy policy);

}  // namespace invad
