#include "invad/synthbench.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "invad/error.hpp"
#include "invad/ften.hpp"

namespace invad {

namespace {

enum StreamTag : std::uint64_t { kMeanStream = 11, kTrainStream = 12, kTestStream = 13, kAnomalyStream = 14 };

constexpr int kWavesPerChannel = 3;
constexpr double kMaxWaveFrequency = 1.5;  // cycles across the grid

struct Rect {
    std::size_t h, w;
};

std::vector<Rect> feasible_rects(std::size_t height, std::size_t width, const SizeBucket& bucket) {
    std::vector<Rect> out;
    const double total = static_cast<double>(height * width);
    for (std::size_t rh = 1; rh <= height; ++rh) {
        for (std::size_t rw = 1; rw <= width; ++rw) {
            const double ratio = static_cast<double>(rh * rw) / total;
            if (ratio > bucket.lo && ratio <= bucket.hi) out.push_back({rh, rw});
        }
    }
    return out;
}

}  // namespace

std::vector<SizeBucket> default_size_buckets() {
    return {{"tiny", 0.0, 0.03}, {"small", 0.03, 0.08}, {"medium", 0.08, 0.2}, {"large", 0.2, 0.4}};
}

void BenchConfig::validate() const {
    if (channels == 0 || height == 0 || width == 0) throw InvalidArgument("bench: dimensions must be positive");
    if (n_train == 0) throw InvalidArgument("bench: n_train must be positive");
    if (n_test_normal == 0 || n_test_anomalous == 0) throw InvalidArgument("bench: test counts must be positive");
    if (smooth_radius < 0) throw InvalidArgument("bench: smooth_radius must be >= 0");
    const auto taps = static_cast<std::size_t>(2 * smooth_radius + 1);
    if (taps > height || taps > width) throw InvalidArgument("bench: smoothing window wider than the grid");
    if (!(noise_scale >= 0.0) || !(anomaly_magnitude >= 0.0)) throw InvalidArgument("bench: scales must be >= 0");
    if (buckets.empty()) throw InvalidArgument("bench: at least one size bucket required");
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const SizeBucket& b = buckets[i];
        if (!(b.lo >= 0.0) || !(b.lo < b.hi) || b.hi > 1.0) {
            throw InvalidArgument("bench: bucket '" + b.name + "' must satisfy 0 <= lo < hi <= 1");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (b.lo < buckets[j].hi && buckets[j].lo < b.hi) {
                throw InvalidArgument("bench: buckets '" + b.name + "' and '" + buckets[j].name + "' overlap");
            }
        }
        if (feasible_rects(height, width, b).empty()) {
            throw InvalidArgument("bench: bucket '" + b.name + "' has no feasible rectangle on the grid");
        }
    }
}

Tensor mean_field(const BenchConfig& cfg) {
    Rng rng(cfg.seed, kMeanStream);
    Tensor m = Tensor::latent(cfg.channels, cfg.height, cfg.width);
    for (std::size_t c = 0; c < cfg.channels; ++c) {
        for (int k = 0; k < kWavesPerChannel; ++k) {
            const double amp = cfg.mean_amplitude * rng.uniform(0.5, 1.0) / kWavesPerChannel;
            const double fy = rng.uniform(-kMaxWaveFrequency, kMaxWaveFrequency);
            const double fx = rng.uniform(-kMaxWaveFrequency, kMaxWaveFrequency);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (std::size_t y = 0; y < cfg.height; ++y) {
                for (std::size_t x = 0; x < cfg.width; ++x) {
                    const double arg = 2.0 * std::numbers::pi *
                                           (fy * static_cast<double>(y) / static_cast<double>(cfg.height) +
                                            fx * static_cast<double>(x) / static_cast<double>(cfg.width)) +
                                       phase;
                    m.at(c, y, x) += amp * std::sin(arg);
                }
            }
        }
    }
    return m;
}

Tensor box_smooth(const Tensor& latent, int radius) {
    if (latent.rank() != 3) throw InvalidArgument("box_smooth: expected C x h x w");
    if (radius < 0) throw InvalidArgument("box_smooth: radius must be >= 0");
    if (radius == 0) return latent;
    const std::size_t channels = latent.dim(0), h = latent.dim(1), w = latent.dim(2);
    const auto r = static_cast<long>(radius);
    const double taps = static_cast<double>(2 * radius + 1);
    auto wrap = [](long i, std::size_t n) { return static_cast<std::size_t>(((i % static_cast<long>(n)) + static_cast<long>(n)) % static_cast<long>(n)); };
    Tensor rows(latent.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (long dx = -r; dx <= r; ++dx) s += latent.at(c, y, wrap(static_cast<long>(x) + dx, w));
                rows.at(c, y, x) = s;
            }
        }
    }
    Tensor out(latent.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (long dy = -r; dy <= r; ++dy) s += rows.at(c, wrap(static_cast<long>(y) + dy, h), x);
                out.at(c, y, x) = s / taps;
            }
        }
    }
    return out;
}

Tensor gen_normal(const BenchConfig& cfg, const Tensor& mean, Rng& rng) {
    if (mean.shape() != cfg.latent_shape()) throw InvalidArgument("gen_normal: mean field shape mismatch");
    Tensor eps(cfg.latent_shape());
    for (double& v : eps.values()) v = rng.gaussian();
    return lincomb(1.0, mean, cfg.noise_scale, box_smooth(eps, cfg.smooth_radius));
}

InjectedAnomaly inject_anomaly(const Tensor& features, const SizeBucket& bucket, double magnitude, Rng& rng) {
    if (features.rank() != 3) throw InvalidArgument("inject_anomaly: expected C x h x w");
    const std::size_t channels = features.dim(0), h = features.dim(1), w = features.dim(2);
    const auto rects = feasible_rects(h, w, bucket);
    if (rects.empty()) {
        throw InvalidArgument("inject_anomaly: bucket '" + bucket.name + "' infeasible on a " + std::to_string(h) +
                              "x" + std::to_string(w) + " grid");
    }
    const Rect rect = rects[rng.below(rects.size())];
    const std::size_t top = rng.below(h - rect.h + 1);
    const std::size_t left = rng.below(w - rect.w + 1);

    std::vector<double> u(channels);
    double norm = 0.0;
    while (norm == 0.0) {
        norm = 0.0;
        for (double& v : u) {
            v = rng.gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
    }
    for (double& v : u) v /= norm;

    InjectedAnomaly out{features, Tensor::map2d(h, w), u};
    for (std::size_t y = top; y < top + rect.h; ++y) {
        for (std::size_t x = left; x < left + rect.w; ++x) {
            out.mask.at(y, x) = 1.0;
            for (std::size_t c = 0; c < channels; ++c) out.features.at(c, y, x) += magnitude * u[c];
        }
    }
    return out;
}

Dataset make_dataset(const BenchConfig& cfg) {
    cfg.validate();
    const Tensor mean = mean_field(cfg);
    Dataset data;
    data.train.reserve(cfg.n_train);
    for (std::size_t i = 0; i < cfg.n_train; ++i) {
        Rng rng(cfg.seed, derive_stream({kTrainStream, i}));
        data.train.push_back(gen_normal(cfg, mean, rng));
    }
    const std::size_t n_test = cfg.n_test_normal + cfg.n_test_anomalous;
    data.test.reserve(n_test);
    for (std::size_t i = 0; i < n_test; ++i) {
        Rng rng(cfg.seed, derive_stream({kTestStream, i}));
        Tensor base = gen_normal(cfg, mean, rng);
        if (i < cfg.n_test_normal) {
            data.test.push_back({std::move(base), 0, Tensor::map2d(cfg.height, cfg.width), ""});
            continue;
        }
        const SizeBucket& bucket = cfg.buckets[(i - cfg.n_test_normal) % cfg.buckets.size()];
        Rng anomaly_rng(cfg.seed, derive_stream({kAnomalyStream, i}));
        InjectedAnomaly a = inject_anomaly(base, bucket, cfg.anomaly_magnitude, anomaly_rng);
        data.test.push_back({std::move(a.features), 1, std::move(a.mask), bucket.name});
    }
    return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_ften(dir / "train.ften", data.train);
    std::vector<Tensor> features, masks;
    for (const LabeledSample& s : data.test) {
        features.push_back(s.features);
        masks.push_back(s.mask);
    }
    write_ften(dir / "test.ften", features);
    write_ften_masks(dir / "test_masks.ften", masks);
    std::ofstream csv(dir / "labels.csv");
    csv << "sample_index,label,mask_file\n";
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        csv << i << ',' << static_cast<int>(data.test[i].label) << ",test_masks.ften\n";
    }
    if (!csv) throw std::runtime_error("write failed: " + (dir / "labels.csv").string());
}

std::vector<LabeledSample> read_test_split(const std::filesystem::path& features,
                                           const std::filesystem::path& labels_csv) {
    std::vector<Tensor> feats = read_ften(features);
    std::ifstream csv(labels_csv);
    if (!csv) throw std::runtime_error("cannot open " + labels_csv.string());

    std::vector<LabeledSample> out(feats.size());
    std::vector<bool> seen(feats.size(), false);
    std::map<std::string, std::vector<Tensor>> mask_files;
    std::string line;
    std::size_t offset = 0;
    bool header = true;
    while (std::getline(csv, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("sample_index", 0) == 0) continue;
        }
        std::stringstream row(line);
        std::string idx_s, label_s, mask_s;
        std::getline(row, idx_s, ',');
        std::getline(row, label_s, ',');
        std::getline(row, mask_s, ',');
        std::size_t idx = 0;
        int label = 0;
        try {
            idx = std::stoul(idx_s);
            label = std::stoi(label_s);
        } catch (const std::exception&) {
            throw FormatError(labels_csv.string() + ": malformed row '" + line + "'", line_offset);
        }
        if (idx >= feats.size() || (label != 0 && label != 1) || seen[idx]) {
            throw FormatError(labels_csv.string() + ": bad index or label in row '" + line + "'", line_offset);
        }
        seen[idx] = true;
        LabeledSample& s = out[idx];
        s.label = static_cast<std::uint8_t>(label);
        s.mask = Tensor::map2d(feats[idx].dim(1), feats[idx].dim(2));
        if (!mask_s.empty()) {
            auto it = mask_files.find(mask_s);
            if (it == mask_files.end()) {
                it = mask_files.emplace(mask_s, read_ften_masks(labels_csv.parent_path() / mask_s)).first;
            }
            if (idx >= it->second.size() || it->second[idx].shape() != s.mask.shape()) {
                throw FormatError(labels_csv.string() + ": mask record missing or mis-shaped for sample " +
                                      std::to_string(idx),
                                  line_offset);
            }
            s.mask = it->second[idx];
        }
    }
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (!seen[i]) throw FormatError(labels_csv.string() + ": no label for sample " + std::to_string(i), offset);
        out[i].features = std::move(feats[i]);
    }
    return out;
}

}  // namespace invad
