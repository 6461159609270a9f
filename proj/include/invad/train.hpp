#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invad/mlp.hpp"
#include "invad/rng.hpp"
#include "invad/schedule.hpp"

namespace invad {

/// Optimizer and schedule settings. Loss weights are uniform (gamma = 1).
///
/// Defaults are desk-scale: the learning-rate shape (1:50 initial-to-peak,
/// 1:10 final-to-peak, warmup over ~13% of epochs, cosine decay, clip 1.0,
/// no weight decay) is common diffusion-training practice; epochs, batch size
/// and peak rate are sized for a small MLP on CPU.
struct TrainConfig {
    int epochs = 60;
    int batch_size = 64;
    double lr_initial = 4e-5;
    double lr_peak = 2e-3;
    double lr_final = 2e-4;
    double warmup_epochs = 8.0;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // global L2 norm; <= 0 disables
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Learning rate at a fractional epoch position: linear warmup from
/// lr_initial to lr_peak, then cosine decay to lr_final at the last epoch.
double learning_rate(const TrainConfig& cfg, double epoch_position);

/// Forward-diffused training batch: x_t = sqrt(ab) x0 + sqrt(1 - ab) eps.
struct NoisedBatch {
    std::vector<Step> steps;
    std::vector<Tensor> noised;
    std::vector<Tensor> noise;
};

/// Per sample, in order: step ~ Uniform{0..T-1} (or fixed_step), then eps
/// element by element from rng.gaussian().
NoisedBatch draw_noised_batch(std::span<const Tensor> clean, const NoiseSchedule& schedule, Rng& rng,
                              std::optional<Step> fixed_step = std::nullopt);

/// Monte-Carlo estimate of the eps-prediction loss: mean over the batch of
/// ||eps_theta(x_t, t) - eps||^2.
double epoch_loss(const EpsilonModel& model, std::span<const Tensor> batch, const NoiseSchedule& schedule, Rng& rng,
                  std::optional<Step> fixed_step = std::nullopt);

/// Decoupled-weight-decay Adam.
class AdamW {
public:
    AdamW(std::size_t n, const TrainConfig& cfg);
    void step(std::span<double> params, std::span<const double> grad, double lr);

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    long long t_ = 0;
};

struct TrainResult {
    MlpEpsModel model;
    std::vector<double> epoch_losses;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Trains an MLP on normal samples. Deterministic for a fixed cfg.seed.
/// Throws NumericFailure naming the epoch if the loss becomes non-finite.
TrainResult train_eps(std::span<const Tensor> normals, const NoiseSchedule& schedule, const MlpArch& arch,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::string worst_group;
    bool passed = false;
};

using GradientHook = std::function<void(const MlpEpsModel&, std::vector<double>&)>;

/// Compares reverse-mode gradients of the loss on a fixed noised batch with
/// central differences for every parameter, Richardson-extrapolated from
/// steps 1e-3 and 5e-4. Per-parameter error
/// is |a - f| / max(|a|, |f|, 1e-6). corrupt, when set, edits the
/// reverse-mode gradient before comparison.
GradCheckReport grad_check(const MlpEpsModel& model, const NoiseSchedule& schedule, double tol, std::uint64_t seed,
                           int batch_size = 4, const GradientHook& corrupt = {});

}  // namespace invad
