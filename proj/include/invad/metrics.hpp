#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "invad/tensor.hpp"

namespace invad {

/// Scores with binary labels, 1 = anomalous.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;

    void validate() const;
    std::size_t positives() const;
};

/// P(score_pos > score_neg) + 0.5 * P(tie). Throws UndefinedMetric unless both classes occur.
double au_roc(const ScoredSet& set);

/// Mean precision at the rank of each positive. Ranking is by descending
/// score; equal scores keep their input order (stable sort).
double average_precision(const ScoredSet& set);

/// Maximum of 2TP / (2TP + FP + FN) over thresholds "score >= s" for every distinct score s.
double f1_max(const ScoredSet& set);

/// Area under the per-region-overlap curve up to fpr_cap, divided by fpr_cap.
///
/// Regions are 4-connected components of each mask. For every distinct score
/// threshold t (pixels with score >= t are flagged) the curve has the point
/// (FPR over all mask-0 pixels, mean over regions of the flagged fraction of
/// the region). The curve starts at (0, 0) and is integrated with the
/// trapezoid rule, linearly interpolated at fpr_cap.
double au_pro(std::span<const Tensor> maps, std::span<const Tensor> masks, double fpr_cap = 0.3);

/// 4-connected components of mask != 0. Returns a label map (0 = background,
/// 1..n regions) and the region count.
std::pair<std::vector<int>, int> label_regions(const Tensor& mask);

struct MetricsReport {
    double auroc_img = 0.0;
    double ap_img = 0.0;
    double f1max_img = 0.0;
    double auroc_px = 0.0;
    double ap_px = 0.0;
    double f1max_px = 0.0;
    double aupro = 0.0;
    double mad = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
};

/// Image metrics on per-sample scores; pixel metrics pool every pixel of
/// every map. Pixel metrics (and therefore mad) are NaN when no mask has an
/// anomalous pixel.
MetricsReport evaluate_metrics(const ScoredSet& image, std::span<const Tensor> maps, std::span<const Tensor> masks,
                               double fpr_cap = 0.3);

}  // namespace invad
