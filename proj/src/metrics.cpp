#include "invad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "invad/error.hpp"

namespace invad {

void ScoredSet::validate() const {
    if (scores.size() != labels.size()) throw InvalidArgument("ScoredSet: scores/labels length mismatch");
    for (double s : scores) {
        if (!std::isfinite(s)) throw NumericFailure("ScoredSet: non-finite score");
    }
    for (auto l : labels) {
        if (l > 1) throw InvalidArgument("ScoredSet: labels must be 0 or 1");
    }
}

std::size_t ScoredSet::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

namespace {

std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double au_roc(const ScoredSet& set) {
    set.validate();
    const std::size_t pos = set.positives();
    const std::size_t neg = set.labels.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetric("au_roc needs both classes");

    std::vector<std::size_t> order(set.scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });

    // Twice the Mann-Whitney U statistic, kept integral so ties stay exact.
    std::uint64_t twice_u = 0;
    std::uint64_t neg_below = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t p = 0, n = 0;
        while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
            (set.labels[order[j]] ? p : n) += 1;
            ++j;
        }
        twice_u += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(const ScoredSet& set) {
    set.validate();
    const std::size_t pos = set.positives();
    if (pos == 0) throw UndefinedMetric("average_precision needs at least one positive");
    const auto order = descending_order(set.scores);
    double sum = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (set.labels[order[rank]]) {
            ++tp;
            sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
        }
    }
    return sum / static_cast<double>(pos);
}

double f1_max(const ScoredSet& set) {
    set.validate();
    const std::size_t pos = set.positives();
    if (pos == 0) throw UndefinedMetric("f1_max needs at least one positive");
    const auto order = descending_order(set.scores);
    std::size_t tp = 0, fp = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
            (set.labels[order[j]] ? tp : fp) += 1;
            ++j;
        }
        const std::size_t fn = pos - tp;
        const double f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
        best = std::max(best, f1);
        i = j;
    }
    return best;
}

std::pair<std::vector<int>, int> label_regions(const Tensor& mask) {
    if (mask.rank() != 2) throw InvalidArgument("label_regions: mask must be 2-D");
    const std::size_t h = mask.dim(0), w = mask.dim(1);
    std::vector<int> labels(h * w, 0);
    int count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (mask[start] == 0.0 || labels[start] != 0) continue;
        ++count;
        labels[start] = count;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / w, x = p % w;
            auto visit = [&](std::size_t q) {
                if (mask[q] != 0.0 && labels[q] == 0) {
                    labels[q] = count;
                    stack.push_back(q);
                }
            };
            if (y > 0) visit(p - w);
            if (y + 1 < h) visit(p + w);
            if (x > 0) visit(p - 1);
            if (x + 1 < w) visit(p + 1);
        }
    }
    return {std::move(labels), count};
}

double au_pro(std::span<const Tensor> maps, std::span<const Tensor> masks, double fpr_cap) {
    if (!(fpr_cap > 0.0) || fpr_cap > 1.0) throw InvalidArgument("au_pro: fpr_cap must be in (0, 1]");
    if (maps.size() != masks.size()) throw InvalidArgument("au_pro: maps/masks count mismatch");

    struct Pixel {
        double score;
        int region;  // -1 for normal pixels
    };
    std::vector<Pixel> pixels;
    std::vector<double> region_size;
    std::size_t normals = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        require_same_shape(maps[i], masks[i], "au_pro");
        if (maps[i].rank() != 2) throw InvalidArgument("au_pro: maps must be 2-D");
        const auto [labels, count] = label_regions(masks[i]);
        const int base = static_cast<int>(region_size.size());
        region_size.resize(region_size.size() + static_cast<std::size_t>(count), 0.0);
        for (std::size_t p = 0; p < labels.size(); ++p) {
            if (!std::isfinite(maps[i][p])) throw NumericFailure("au_pro: non-finite map value");
            const int region = labels[p] == 0 ? -1 : base + labels[p] - 1;
            if (region < 0) {
                ++normals;
            } else {
                region_size[static_cast<std::size_t>(region)] += 1.0;
            }
            pixels.push_back({maps[i][p], region});
        }
    }
    if (region_size.empty()) throw UndefinedMetric("au_pro: no anomalous region in any mask");
    if (normals == 0) throw UndefinedMetric("au_pro: no normal pixels");

    std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

    const double regions = static_cast<double>(region_size.size());
    double area = 0.0;
    double prev_fpr = 0.0, prev_pro = 0.0;
    double overlap_sum = 0.0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < pixels.size();) {
        std::size_t j = i;
        while (j < pixels.size() && pixels[j].score == pixels[i].score) {
            if (pixels[j].region < 0) {
                ++fp;
            } else {
                overlap_sum += 1.0 / region_size[static_cast<std::size_t>(pixels[j].region)];
            }
            ++j;
        }
        i = j;
        const double fpr = static_cast<double>(fp) / static_cast<double>(normals);
        const double pro = overlap_sum / regions;
        if (fpr >= fpr_cap) {
            const double t = fpr > prev_fpr ? (fpr_cap - prev_fpr) / (fpr - prev_fpr) : 0.0;
            const double pro_at_cap = prev_pro + t * (pro - prev_pro);
            area += (fpr_cap - prev_fpr) * (prev_pro + pro_at_cap) * 0.5;
            return area / fpr_cap;
        }
        area += (fpr - prev_fpr) * (prev_pro + pro) * 0.5;
        prev_fpr = fpr;
        prev_pro = pro;
    }
    // Unreachable: the lowest threshold flags every pixel, so fpr reaches 1.
    return area / fpr_cap;
}

std::string MetricsReport::csv_header() { return "auroc_img,ap_img,f1max_img,auroc_px,ap_px,f1max_px,aupro,mad"; }

std::string MetricsReport::csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", auroc_img, ap_img, f1max_img, auroc_px,
                  ap_px, f1max_px, aupro, mad);
    return buf;
}

MetricsReport evaluate_metrics(const ScoredSet& image, std::span<const Tensor> maps, std::span<const Tensor> masks,
                               double fpr_cap) {
    MetricsReport r;
    r.auroc_img = au_roc(image);
    r.ap_img = average_precision(image);
    r.f1max_img = f1_max(image);

    if (maps.size() != masks.size()) throw InvalidArgument("evaluate_metrics: maps/masks count mismatch");
    ScoredSet pixels;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        require_same_shape(maps[i], masks[i], "evaluate_metrics");
        for (std::size_t p = 0; p < maps[i].size(); ++p) {
            pixels.scores.push_back(maps[i][p]);
            pixels.labels.push_back(masks[i][p] != 0.0 ? 1 : 0);
        }
    }
    const std::size_t pos = pixels.positives();
    if (pos == 0 || pos == pixels.labels.size()) {
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        r.auroc_px = r.ap_px = r.f1max_px = r.aupro = r.mad = nan;
        return r;
    }
    r.auroc_px = au_roc(pixels);
    r.ap_px = average_precision(pixels);
    r.f1max_px = f1_max(pixels);
    r.aupro = au_pro(maps, masks, fpr_cap);
    r.mad = (r.auroc_img + r.ap_img + r.f1max_img + r.auroc_px + r.ap_px + r.f1max_px + r.aupro) / 7.0;
    return r;
}

}  // namespace invad
