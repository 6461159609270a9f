#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "invad/rng.hpp"
#include "invad/tensor.hpp"

namespace invad {

/// Anomalous-pixel-ratio range (lo, hi] for injected defects.
struct SizeBucket {
    std::string name;
    double lo;
    double hi;
};

std::vector<SizeBucket> default_size_buckets();

/// Synthetic feature-space benchmark.
///
/// Normal sample: z = M + noise_scale * smooth(eps), eps ~ N(0, I).
///   M       sum of three random low-frequency plane waves per channel with
///           amplitude mean_amplitude, fixed by seed
///   smooth  separable box blur of radius smooth_radius with circular
///           (wrap-around) windows, scaled by (2r + 1) so every pixel keeps
///           unit variance. Wrapping keeps the covariance full rank; truncated
///           border windows leave null directions on small grids.
/// Anomaly: an axis-aligned rectangle whose area ratio lies in the bucket
/// receives anomaly_magnitude * u for a random unit channel direction u.
struct BenchConfig {
    std::size_t channels = 8;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t n_train = 1000;
    std::size_t n_test_normal = 100;
    std::size_t n_test_anomalous = 100;
    int smooth_radius = 1;
    double noise_scale = 1.0;
    double mean_amplitude = 1.0;
    double anomaly_magnitude = 3.0;
    std::vector<SizeBucket> buckets = default_size_buckets();
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<std::size_t> latent_shape() const { return {channels, height, width}; }
};

struct LabeledSample {
    Tensor features;
    std::uint8_t label = 0;
    Tensor mask;  // h x w, 1 inside the anomaly
    std::string bucket;
};

struct InjectedAnomaly {
    Tensor features;
    Tensor mask;
    std::vector<double> direction;  // unit vector over channels
};

struct Dataset {
    std::vector<Tensor> train;
    std::vector<LabeledSample> test;
};

Tensor mean_field(const BenchConfig& cfg);
Tensor box_smooth(const Tensor& latent, int radius);

/// One normal sample drawn from rng.
Tensor gen_normal(const BenchConfig& cfg, const Tensor& mean, Rng& rng);

/// Throws InvalidArgument when no rectangle of the feature grid has an area
/// ratio inside the bucket.
InjectedAnomaly inject_anomaly(const Tensor& features, const SizeBucket& bucket, double magnitude, Rng& rng);

/// Train: n_train normals. Test: n_test_normal normals followed by
/// n_test_anomalous anomalies cycling through the buckets. Each sample uses
/// its own stream derived from (seed, split, index).
Dataset make_dataset(const BenchConfig& cfg);

/// Writes train.ften, test.ften, test_masks.ften and labels.csv into dir.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Reads a test split: features FTEN plus a labels CSV
/// (sample_index,label,mask_file). mask_file, relative to the CSV, names an
/// FTEN mask file whose record sample_index is the sample's mask; an empty
/// field means no mask (all zero).
std::vector<LabeledSample> read_test_split(const std::filesystem::path& features,
                                           const std::filesystem::path& labels_csv);

}  // namespace invad
