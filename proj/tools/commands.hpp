#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "invad/diffusion.hpp"
#include "invad/metrics.hpp"
#include "invad/mlp.hpp"
#include "invad/schedule.hpp"
#include "invad/scoring.hpp"
#include "invad/synthbench.hpp"
#include "invad/train.hpp"

namespace invad::cli {

/// Every recognised key with its default value. A user config may only use
/// keys that appear here (ConfigError otherwise).
nlohmann::json default_config();

/// default_config() with `overrides` merged in (RFC 7386 merge patch), after
/// checking that every override key exists and has a compatible type.
nlohmann::json merge_config(const nlohmann::json& overrides);

/// Sets a dotted key ("train.epochs") to a value parsed as JSON, or as a
/// string when it does not parse.
void set_dotted(nlohmann::json& config, const std::string& key, const std::string& value);

struct RunConfig {
    int total_steps = 1000;
    double beta_first = 1e-4;
    double beta_last = 0.02;
    int subset_size = 3;
    SubsetPolicy policy = SubsetPolicy::Uniform;
    ScoreMode mode = ScoreMode::Combined;
    double recon_ratio = 0.4;
    std::size_t output_size = 0;  // 0: 4 * (h - 1) + 1
    double fpr_cap = 0.3;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    std::filesystem::path model_path;  // empty: out_dir / "model.ivad"
    std::filesystem::path data_dir;    // empty: synthetic benchmark
    BenchConfig bench;
    MlpArch arch;
    TrainConfig train;
    std::vector<int> grid_steps;
    std::vector<double> grid_ratios;
    std::vector<int> scoring_steps;
    int histogram_bins = 20;
    std::vector<int> schedule_steps;
    std::filesystem::path invert_input;
    std::filesystem::path invert_output;

    /// Typed view of a merged config. Throws ConfigError on bad values.
    static RunConfig from_json(const nlohmann::json& merged);
    std::filesystem::path model_file() const;
    NoiseSchedule schedule() const;
};

/// Normal training features and labelled test samples, from data_dir or
/// generated from the bench config.
struct Data {
    std::vector<Tensor> train;
    std::vector<LabeledSample> test;
};
Data load_data(const RunConfig& cfg, bool need_train, bool need_test);

/// Worker count from INVAD_THREADS (default 1). Results never depend on it.
unsigned thread_count();

/// Samples are processed in fixed chunks of this size, one predict_batch per
/// step and chunk, so outputs do not depend on the thread count.
inline constexpr std::size_t kChunk = 32;

std::vector<Tensor> invert_all(const NoiseSchedule& schedule, const EpsilonModel& model,
                               const std::vector<Tensor>& latents, const TimestepSubset& subset,
                               std::vector<std::uint64_t>* nfe = nullptr);

/// Reconstructions with per-sample noise streams keyed by (S, ratio, index).
std::vector<Tensor> reconstruct_all(const NoiseSchedule& schedule, const EpsilonModel& model,
                                    const std::vector<Tensor>& latents, const TimestepSubset& subset, double ratio,
                                    std::uint64_t seed, std::vector<std::uint64_t>* nfe = nullptr);

/// Binary h x w mask to H x W: bilinear upsampling thresholded at 0.5.
Tensor upsample_mask(const Tensor& mask, std::size_t out_height, std::size_t out_width);

std::size_t output_size(const RunConfig& cfg, std::size_t h);

/// Image-level AU-ROC of inversion scoring at one subset.
double inversion_auroc(const RunConfig& cfg, const NoiseSchedule& schedule, const EpsilonModel& model,
                       const std::vector<LabeledSample>& test, const TimestepSubset& subset, ScoreMode mode);

// Commands. Each writes its outputs plus the merged config (config.json)
// into cfg.out_dir and returns the path of its main CSV.
std::filesystem::path cmd_gen_data(const nlohmann::json& merged);
std::filesystem::path cmd_train(const nlohmann::json& merged);
std::filesystem::path cmd_eval(const nlohmann::json& merged);
std::filesystem::path cmd_grid(const nlohmann::json& merged);
std::filesystem::path cmd_ablate_scoring(const nlohmann::json& merged);
std::filesystem::path cmd_ablate_schedule(const nlohmann::json& merged);
std::filesystem::path cmd_invert(const nlohmann::json& merged);

}  // namespace invad::cli
