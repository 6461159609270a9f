#include "invad/scoring.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "invad/error.hpp"

namespace invad {

namespace {

void require_latent(const Tensor& t, const char* context) {
    if (t.rank() != 3) {
        throw InvalidArgument(std::string(context) + ": expected a C x h x w latent, got " + shape_string(t.shape()));
    }
}

double squared_pixel_norm(const Tensor& z, std::size_t y, std::size_t x) {
    double s = 0.0;
    for (std::size_t c = 0; c < z.dim(0); ++c) s += z.at(c, y, x) * z.at(c, y, x);
    return s;
}

AnomalyResult finish(Tensor low, double score, std::size_t out_height, std::size_t out_width, ScoreMode mode) {
    AnomalyResult r;
    r.map = bilinear_upsample(low, out_height, out_width);
    r.low_map = std::move(low);
    r.score = score;
    r.mode = mode;
    if (!std::isfinite(score)) throw NumericFailure("anomaly score is not finite");
    return r;
}

}  // namespace

std::string_view to_string(ScoreMode mode) {
    switch (mode) {
        case ScoreMode::Nll: return "nll";
        case ScoreMode::Diff: return "diff";
        case ScoreMode::Combined: return "combined";
        case ScoreMode::Recon: return "recon";
        case ScoreMode::Mahalanobis: return "mahalanobis";
    }
    return "?";
}

ScoreMode parse_score_mode(std::string_view name) {
    if (name == "nll") return ScoreMode::Nll;
    if (name == "diff") return ScoreMode::Diff;
    if (name == "combined") return ScoreMode::Combined;
    if (name == "recon") return ScoreMode::Recon;
    if (name == "mahalanobis") return ScoreMode::Mahalanobis;
    throw InvalidArgument("unknown scoring mode '" + std::string(name) + "'");
}

Tensor norm_map(const Tensor& latent) {
    require_latent(latent, "norm_map");
    Tensor out = Tensor::map2d(latent.dim(1), latent.dim(2));
    for (std::size_t y = 0; y < latent.dim(1); ++y) {
        for (std::size_t x = 0; x < latent.dim(2); ++x) out.at(y, x) = std::sqrt(squared_pixel_norm(latent, y, x));
    }
    return out;
}

Tensor nll_map(const Tensor& latent) {
    require_latent(latent, "nll_map");
    const double constant = 0.5 * static_cast<double>(latent.dim(0)) * std::log(2.0 * std::numbers::pi);
    Tensor out = Tensor::map2d(latent.dim(1), latent.dim(2));
    for (std::size_t y = 0; y < latent.dim(1); ++y) {
        for (std::size_t x = 0; x < latent.dim(2); ++x) out.at(y, x) = 0.5 * squared_pixel_norm(latent, y, x) + constant;
    }
    return out;
}

double image_score(const Tensor& low_map, const Tensor* latent, ScoreMode mode) {
    switch (mode) {
        case ScoreMode::Diff: return low_map.max() - low_map.min();
        case ScoreMode::Combined: return low_map.max() - low_map.min() + low_map.sum();
        case ScoreMode::Nll:
            if (!latent) throw InvalidArgument("image_score: nll mode needs the latent");
            return nll_map(*latent).sum();
        case ScoreMode::Recon:
        case ScoreMode::Mahalanobis: return low_map.max();
    }
    throw InvalidArgument("image_score: unknown mode");
}

AnomalyResult anomaly_result(const Tensor& latent, std::size_t out_height, std::size_t out_width, ScoreMode mode) {
    Tensor low;
    switch (mode) {
        case ScoreMode::Nll: low = nll_map(latent); break;
        case ScoreMode::Diff:
        case ScoreMode::Combined: low = norm_map(latent); break;
        default: throw InvalidArgument("anomaly_result: mode '" + std::string(to_string(mode)) + "' does not score latents");
    }
    const double score = mode == ScoreMode::Nll ? low.sum() : image_score(low, &latent, mode);
    return finish(std::move(low), score, out_height, out_width, mode);
}

AnomalyResult recon_score(const Tensor& z0, const Tensor& z0_hat, std::size_t out_height, std::size_t out_width) {
    require_latent(z0, "recon_score");
    require_same_shape(z0, z0_hat, "recon_score");
    const std::size_t channels = z0.dim(0);
    Tensor low = Tensor::map2d(z0.dim(1), z0.dim(2));
    for (std::size_t y = 0; y < z0.dim(1); ++y) {
        for (std::size_t x = 0; x < z0.dim(2); ++x) {
            double s = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
                const double d = z0.at(c, y, x) - z0_hat.at(c, y, x);
                s += d * d;
            }
            low.at(y, x) = s / static_cast<double>(channels);
        }
    }
    const double score = low.max();
    return finish(std::move(low), score, out_height, out_width, ScoreMode::Recon);
}

LocationStats fit_location_stats(std::span<const Tensor> normals) {
    if (normals.size() < 2) throw InvalidArgument("fit_location_stats: need at least 2 normal samples");
    const Tensor& first = normals.front();
    require_latent(first, "fit_location_stats");
    LocationStats stats;
    stats.mean = Tensor(first.shape());
    stats.variance = Tensor(first.shape());
    for (const Tensor& z : normals) {
        require_same_shape(z, first, "fit_location_stats");
        for (std::size_t i = 0; i < z.size(); ++i) stats.mean[i] += z[i];
    }
    const double n = static_cast<double>(normals.size());
    for (double& m : stats.mean.values()) m /= n;
    for (const Tensor& z : normals) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double d = z[i] - stats.mean[i];
            stats.variance[i] += d * d;
        }
    }
    for (double& v : stats.variance.values()) {
        v /= n - 1.0;
        if (v < LocationStats::kVarianceFloor) {
            v = LocationStats::kVarianceFloor;
            ++stats.floored;
        }
    }
    return stats;
}

AnomalyResult mahalanobis_score(const LocationStats& stats, const Tensor& features, std::size_t out_height,
                                std::size_t out_width) {
    require_same_shape(features, stats.mean, "mahalanobis_score");
    Tensor low = Tensor::map2d(features.dim(1), features.dim(2));
    for (std::size_t c = 0; c < features.dim(0); ++c) {
        for (std::size_t y = 0; y < features.dim(1); ++y) {
            for (std::size_t x = 0; x < features.dim(2); ++x) {
                const double d = features.at(c, y, x) - stats.mean.at(c, y, x);
                low.at(y, x) += d * d / stats.variance.at(c, y, x);
            }
        }
    }
    const double score = low.max();
    return finish(std::move(low), score, out_height, out_width, ScoreMode::Mahalanobis);
}

}  // namespace invad
