#include "invad/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "invad/diffusion.hpp"
#include "invad/error.hpp"

namespace invad {

namespace {

constexpr std::size_t kMaxGradCheckParams = 10000;
constexpr double kGradCheckStep = 1e-3;
constexpr double kGradCheckFloor = 1e-6;

enum StreamTag : std::uint64_t { kShuffleStream = 1, kNoiseStream = 2, kInitStream = 3, kCheckStream = 4 };

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (!(lr_peak > 0.0) || lr_initial < 0.0 || lr_final < 0.0) throw InvalidArgument("train: bad learning rates");
    if (warmup_epochs < 0.0 || warmup_epochs >= epochs) throw InvalidArgument("train: warmup must be in [0, epochs)");
    if (weight_decay < 0.0) throw InvalidArgument("train: weight_decay must be >= 0");
}

double learning_rate(const TrainConfig& cfg, double epoch_position) {
    if (epoch_position < cfg.warmup_epochs) {
        return cfg.lr_initial + (cfg.lr_peak - cfg.lr_initial) * epoch_position / cfg.warmup_epochs;
    }
    const double span = cfg.epochs - cfg.warmup_epochs;
    const double q = std::clamp((epoch_position - cfg.warmup_epochs) / span, 0.0, 1.0);
    return cfg.lr_final + (cfg.lr_peak - cfg.lr_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * q));
}

NoisedBatch draw_noised_batch(std::span<const Tensor> clean, const NoiseSchedule& schedule, Rng& rng,
                              std::optional<Step> fixed_step) {
    NoisedBatch batch;
    batch.steps.reserve(clean.size());
    batch.noised.reserve(clean.size());
    batch.noise.reserve(clean.size());
    for (const Tensor& x0 : clean) {
        const Step t = fixed_step ? *fixed_step
                                  : static_cast<Step>(rng.below(static_cast<std::uint64_t>(schedule.total_steps())));
        Tensor eps(x0.shape());
        for (double& v : eps.values()) v = rng.gaussian();
        batch.noised.push_back(q_sample(schedule, x0, t, eps));
        batch.steps.push_back(t);
        batch.noise.push_back(std::move(eps));
    }
    return batch;
}

double epoch_loss(const EpsilonModel& model, std::span<const Tensor> batch, const NoiseSchedule& schedule, Rng& rng,
                  std::optional<Step> fixed_step) {
    if (batch.empty()) throw InvalidArgument("epoch_loss: empty batch");
    const NoisedBatch nb = draw_noised_batch(batch, schedule, rng, fixed_step);
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Tensor pred = predict_eps(model, nb.noised[b], nb.steps[b]);
        total += (pred - nb.noise[b]).squared_norm();
    }
    const double loss = total / static_cast<double>(batch.size());
    if (!std::isfinite(loss)) throw NumericFailure("epoch_loss: non-finite loss");
    return loss;
}

AdamW::AdamW(std::size_t n, const TrainConfig& cfg)
    : m_(n, 0.0), v_(n, 0.0), beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * params[i]);
    }
}

TrainResult train_eps(std::span<const Tensor> normals, const NoiseSchedule& schedule, const MlpArch& arch,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (normals.empty()) throw InvalidArgument("train_eps: empty training set");
    for (const Tensor& x : normals) {
        if (x.shape() != arch.latent_shape) {
            throw InvalidArgument("train_eps: sample shape " + shape_string(x.shape()) + " does not match " +
                                  shape_string(arch.latent_shape));
        }
    }

    Rng init_rng(cfg.seed, kInitStream);
    TrainResult result{MlpEpsModel::initialized(arch, schedule.total_steps(), init_rng), {}};
    MlpEpsModel& model = result.model;
    AdamW optimizer(model.param_count(), cfg);

    const std::size_t n = normals.size();
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches = (n + batch_size - 1) / batch_size;
    std::vector<std::size_t> order(n);
    std::vector<double> grad;
    std::vector<Tensor> batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(cfg.seed, derive_stream({kShuffleStream, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_total = 0.0;
        for (std::size_t bi = 0; bi < batches; ++bi) {
            const std::size_t begin = bi * batch_size;
            const std::size_t end = std::min(n, begin + batch_size);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(normals[order[i]]);

            Rng noise_rng(cfg.seed, derive_stream({kNoiseStream, static_cast<std::uint64_t>(epoch), bi}));
            const NoisedBatch nb = draw_noised_batch(batch, schedule, noise_rng);
            const double loss = model.loss_and_grad(nb.noised, nb.steps, nb.noise, &grad);
            if (!std::isfinite(loss)) {
                throw NumericFailure("train_eps: non-finite loss in epoch " + std::to_string(epoch));
            }
            epoch_total += loss * static_cast<double>(end - begin);

            if (cfg.grad_clip > 0.0) {
                double sq = 0.0;
                for (double g : grad) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > cfg.grad_clip) {
                    const double s = cfg.grad_clip / norm;
                    for (double& g : grad) g *= s;
                }
            }
            const double position = epoch + static_cast<double>(bi) / static_cast<double>(batches);
            optimizer.step(model.params(), grad, learning_rate(cfg, position));
        }
        const double epoch_mean = epoch_total / static_cast<double>(n);
        if (!std::isfinite(epoch_mean)) {
            throw NumericFailure("train_eps: non-finite loss in epoch " + std::to_string(epoch));
        }
        result.epoch_losses.push_back(epoch_mean);
        if (on_epoch) on_epoch(epoch, epoch_mean);
    }
    return result;
}

GradCheckReport grad_check(const MlpEpsModel& model, const NoiseSchedule& schedule, double tol, std::uint64_t seed,
                           int batch_size, const GradientHook& corrupt) {
    if (model.param_count() > kMaxGradCheckParams) {
        throw InvalidArgument("grad_check: model has " + std::to_string(model.param_count()) +
                              " parameters, limit is " + std::to_string(kMaxGradCheckParams));
    }
    if (batch_size < 1) throw InvalidArgument("grad_check: batch_size must be >= 1");
    if (schedule.total_steps() != model.total_steps()) throw InvalidArgument("grad_check: schedule/model T mismatch");

    Rng rng(seed, kCheckStream);
    std::vector<Tensor> clean;
    for (int b = 0; b < batch_size; ++b) {
        Tensor x(model.arch().latent_shape);
        for (double& v : x.values()) v = rng.gaussian();
        clean.push_back(std::move(x));
    }
    const NoisedBatch nb = draw_noised_batch(clean, schedule, rng);

    std::vector<double> analytic;
    model.loss_and_grad(nb.noised, nb.steps, nb.noise, &analytic);
    if (corrupt) corrupt(model, analytic);

    MlpEpsModel probe = model;
    const Tensor start({model.param_count()}, std::vector<double>(model.params().begin(), model.params().end()));
    const auto loss_at = [&](const Tensor& p) {
        std::copy(p.values().begin(), p.values().end(), probe.params().begin());
        return probe.loss_and_grad(nb.noised, nb.steps, nb.noise, nullptr);
    };
    // Richardson combination of two central differences cancels the h^2
    // term, so a step large enough to keep round-off small stays accurate.
    const Tensor coarse = finite_diff_grad(loss_at, start, kGradCheckStep);
    const Tensor fine = finite_diff_grad(loss_at, start, 0.5 * kGradCheckStep);
    const Tensor numeric = lincomb(4.0 / 3.0, fine, -1.0 / 3.0, coarse);

    GradCheckReport report;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), kGradCheckFloor});
        const double err = std::abs(analytic[i] - numeric[i]) / denom;
        if (!(err <= report.max_rel_error)) {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    for (const ParamGroup& g : model.groups()) {
        if (report.worst_index >= g.offset && report.worst_index < g.offset + g.size) report.worst_group = g.name;
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace invad
