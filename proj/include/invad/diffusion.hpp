#pragma once

#include <span>
#include <vector>

#include "invad/eps_model.hpp"
#include "invad/rng.hpp"
#include "invad/schedule.hpp"
#include "invad/tensor.hpp"

namespace invad {

/// sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps. t may be kCleanStep (returns x0).
Tensor q_sample(const NoiseSchedule& schedule, const Tensor& x0, Step t, const Tensor& eps);

/// Deterministic DDIM transfer between two noise levels with a shared eps:
///   f   = (x - sqrt(1 - ab_from) * eps) / sqrt(ab_from)
///   out = sqrt(ab_to) * f + sqrt(1 - ab_to) * eps
/// eps is always evaluated at `from`, clamped to the first trained step when
/// `from` is the clean endpoint. from == to is the identity (no evaluation).
///
/// Denoising direction: from > to.
Tensor ddim_reverse_step(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& x, Step from, Step to);
/// Noising (inversion) direction: from < to.
Tensor ddim_invert_step(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& x, Step from, Step to);

/// DDIM sampling from steps.back() down the subset to the clean endpoint.
/// Exactly subset.size() model evaluations per sample.
Tensor ddim_sample(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& x_last,
                   const TimestepSubset& subset);

/// DDIM inversion from the clean endpoint up through every subset step.
/// Exactly subset.size() model evaluations per sample.
Tensor invert(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& z0, const TimestepSubset& subset);

/// Number of subset steps a reconstruction with perturbation ratio r
/// traverses: floor(r * S), with a 1e-9 guard against float noise. Zero means
/// the (r, S) combination is infeasible.
int perturbation_index(double ratio, std::size_t subset_size);

/// Reconstruction baseline: q_sample z0 to steps[k-1] with fresh noise from
/// rng, then DDIM-denoise down steps[k-1], ..., steps[0], clean.
/// Exactly k model evaluations. Throws InvalidArgument when k == 0.
Tensor reconstruct(const NoiseSchedule& schedule, const EpsilonModel& model, const Tensor& z0,
                   const TimestepSubset& subset, double ratio, Rng& rng);

// Batched forms: every sample follows the same step sequence, so each step is
// one predict_batch call. Per-sample results agree with the single-sample
// forms up to reassociation inside batched model arithmetic.
std::vector<Tensor> invert_batch(const NoiseSchedule& schedule, const EpsilonModel& model, std::span<const Tensor> z0,
                                 const TimestepSubset& subset);
std::vector<Tensor> ddim_sample_batch(const NoiseSchedule& schedule, const EpsilonModel& model,
                                      std::span<const Tensor> x_last, const TimestepSubset& subset);
/// rngs[i] supplies the perturbation noise for z0[i].
std::vector<Tensor> reconstruct_batch(const NoiseSchedule& schedule, const EpsilonModel& model,
                                      std::span<const Tensor> z0, const TimestepSubset& subset, double ratio,
                                      std::span<Rng> rngs);

}  // namespace invad
