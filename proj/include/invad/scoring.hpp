#pragma once

#include <span>
#include <string_view>

#include "invad/tensor.hpp"

namespace invad {

/// How a latent (or a pair of latents) is turned into a map and a score.
///   Nll         per-pixel -log N(z; 0, I_C); score = sum of the map
///   Diff        norm map; score = max - min
///   Combined    norm map; score = max - min + sum
///   Recon       channel-mean squared error between z0 and its reconstruction; score = max
///   Mahalanobis per-location diagonal Mahalanobis distance of raw features; score = max
enum class ScoreMode { Nll, Diff, Combined, Recon, Mahalanobis };

std::string_view to_string(ScoreMode mode);
ScoreMode parse_score_mode(std::string_view name);

struct AnomalyResult {
    double score = 0.0;
    Tensor map;      // H x W
    Tensor low_map;  // h x w, before upsampling
    ScoreMode mode = ScoreMode::Combined;
};

/// A[i, j] = ||z[:, i, j]||_2
Tensor norm_map(const Tensor& latent);
/// A[i, j] = 0.5 * ||z[:, i, j]||^2 + (C / 2) * ln(2 pi)
Tensor nll_map(const Tensor& latent);

/// Image-level score from a low-resolution map. Nll needs the latent; Diff
/// and Combined read only low_map. Baseline modes take the map maximum.
double image_score(const Tensor& low_map, const Tensor* latent, ScoreMode mode);

/// Scores a terminal latent: norm map (Diff, Combined) or NLL map (Nll),
/// bilinearly upsampled to out_height x out_width.
AnomalyResult anomaly_result(const Tensor& latent, std::size_t out_height, std::size_t out_width, ScoreMode mode);

AnomalyResult recon_score(const Tensor& z0, const Tensor& z0_hat, std::size_t out_height, std::size_t out_width);

/// Per-location, per-channel mean and variance of normal features.
struct LocationStats {
    Tensor mean;
    Tensor variance;            // unbiased, floored at kVarianceFloor
    std::size_t floored = 0;    // entries raised to the floor
    static constexpr double kVarianceFloor = 1e-6;
};

LocationStats fit_location_stats(std::span<const Tensor> normals);

/// A[i, j] = sum_c (z[c,i,j] - mean[c,i,j])^2 / variance[c,i,j]
AnomalyResult mahalanobis_score(const LocationStats& stats, const Tensor& features, std::size_t out_height,
                                std::size_t out_width);

}  // namespace invad
