#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "invad/eps_model.hpp"
#include "invad/rng.hpp"

namespace invad {

struct MlpArch {
    std::vector<std::size_t> latent_shape;  // {C, h, w}
    int depth = 2;                          // residual blocks, >= 1
    int width = 256;                        // hidden width
    int cond_dim = 64;                      // time-conditioning width
    int time_dim = 32;                      // sinusoidal embedding size, even

    std::size_t input_dim() const;
    void validate() const;
};

/// Named contiguous slice of the flat parameter vector.
struct ParamGroup {
    std::string name;
    std::size_t offset;
    std::size_t size;
};

/// MLP noise predictor over the flattened latent.
///
///   emb   = [sin(f_k t'), cos(f_k t')],  t' = t / (T-1),  f_k log-spaced on [1, 1e4]
///   c     = silu(W_t emb + b_t)
///   h     = W_in x + b_in
///   block: (shift, scale, gate) = W_m c + b_m
///          u = h * (1 + scale) + shift
///          h = h + gate * (W_2 silu(W_1 u + b_1) + b_2)
///   out   = W_out (h * (1 + scale_f) + shift_f) + b_out,  (shift_f, scale_f) = W_f c + b_f
///
/// Modulation layers (W_m, b_m, W_f, b_f) start at zero, so every block is
/// the identity at initialization.
class MlpEpsModel final : public EpsilonModel {
public:
    /// All parameters zero.
    MlpEpsModel(MlpArch arch, int total_steps);

    /// Uniform(+-1/sqrt(fan_in)) weights, zero biases, zero modulation.
    static MlpEpsModel initialized(MlpArch arch, int total_steps, Rng& rng);

    /// Overwrites every parameter, modulation included, with Uniform(+-scale).
    void randomize_all(Rng& rng, double scale);

    const MlpArch& arch() const noexcept { return arch_; }
    int total_steps() const noexcept { return total_steps_; }
    std::size_t param_count() const noexcept { return params_.size(); }
    std::span<const double> params() const noexcept { return params_; }
    std::span<double> params() noexcept { return params_; }
    const std::vector<ParamGroup>& groups() const noexcept { return groups_; }

    std::vector<double> time_embedding(Step step) const;

    std::vector<std::size_t> latent_shape() const override { return arch_.latent_shape; }
    std::vector<Tensor> predict_batch(std::span<const Tensor> xs, Step step) const override;

    /// Per-sample steps.
    std::vector<Tensor> predict_steps(std::span<const Tensor> xs, std::span<const Step> steps) const;

    /// Mean over the batch of ||eps(x_b, t_b) - target_b||^2. When grad is
    /// non-null it receives d(loss)/d(params) in the flat parameter layout.
    double loss_and_grad(std::span<const Tensor> xs, std::span<const Step> steps, std::span<const Tensor> targets,
                         std::vector<double>* grad) const;

private:
    void build_layout();

    MlpArch arch_;
    int total_steps_;
    std::vector<double> params_;
    std::vector<ParamGroup> groups_;
};

}  // namespace invad
