#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "invad/error.hpp"
#include "invad/ften.hpp"
#include "invad/model_io.hpp"

namespace invad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kReconStreamTag = 0x7265636fULL;

json bench_json(const BenchConfig& b) {
    return {{"channels", b.channels},
            {"height", b.height},
            {"width", b.width},
            {"n_train", b.n_train},
            {"n_test_normal", b.n_test_normal},
            {"n_test_anomalous", b.n_test_anomalous},
            {"smooth_radius", b.smooth_radius},
            {"noise_scale", b.noise_scale},
            {"mean_amplitude", b.mean_amplitude},
            {"anomaly_magnitude", b.anomaly_magnitude},
            {"seed", b.seed}};
}

bool compatible(const json& def, const json& value) {
    if (def.is_number()) return value.is_number();
    if (def.is_string()) return value.is_string();
    if (def.is_array()) return value.is_array();
    if (def.is_boolean()) return value.is_boolean();
    if (def.is_object()) return value.is_object();
    return false;
}

void check_keys(const json& def, const json& over, const std::string& prefix) {
    if (!over.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!def.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        const json& d = def.at(it.key());
        if (!compatible(d, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
        if (d.is_object()) check_keys(d, it.value(), key);
    }
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

std::size_t get_size(const json& j, const char* key) {
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

int get_int(const json& j, const char* key) {
    const json& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(std::string("config key '") + key + "' must be an integer");
    return v.get<int>();
}

std::vector<int> get_steps(const json& j, const char* key) {
    std::vector<int> out;
    for (const json& v : j.at(key)) {
        if (!v.is_number_integer() || v.get<int>() < 1) {
            throw ConfigError(std::string("config key '") + key + "' must list positive integers");
        }
        out.push_back(v.get<int>());
    }
    if (out.empty()) throw ConfigError(std::string("config key '") + key + "' is empty");
    return out;
}

// Runs fn(begin, end) over fixed chunks of [0, n) on thread_count() workers.
void for_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), chunks));
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c * kChunk, std::min(n, (c + 1) * kChunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t c = next++; c < chunks; c = next++) {
                try {
                    fn(c * kChunk, std::min(n, (c + 1) * kChunk));
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string cell(double auroc) { return fmt("%.6f", auroc); }

RunConfig prepare(const json& merged) {
    RunConfig cfg = RunConfig::from_json(merged);
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "config.json", merged.dump(2) + "\n");
    return cfg;
}

std::vector<Tensor> features_of(const std::vector<LabeledSample>& samples) {
    std::vector<Tensor> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.features);
    return out;
}

ScoredSet image_set(const std::vector<LabeledSample>& test, const std::vector<double>& scores) {
    ScoredSet set;
    set.scores = scores;
    for (const auto& s : test) set.labels.push_back(s.label);
    return set;
}

struct LoadedModel {
    NoiseSchedule schedule;
    MlpEpsModel model;
};

LoadedModel load_checked(const RunConfig& cfg, const std::vector<std::size_t>& data_shape) {
    SavedModel saved = load_model(cfg.model_file());
    const NoiseSchedule& s = saved.schedule;
    if (s.total_steps() != cfg.total_steps || s.beta_first() != cfg.beta_first || s.beta_last() != cfg.beta_last) {
        throw ConfigError("schedule in config does not match " + cfg.model_file().string());
    }
    if (saved.model.latent_shape() != data_shape) {
        throw InvalidArgument("model latent shape " + shape_string(saved.model.latent_shape()) +
                              " does not match data shape " + shape_string(data_shape));
    }
    return {std::move(saved.schedule), std::move(saved.model)};
}

std::vector<std::size_t> data_shape(const Data& d) {
    if (!d.test.empty()) return d.test.front().features.shape();
    if (!d.train.empty()) return d.train.front().shape();
    throw InvalidArgument("no samples to evaluate");
}

std::string steps_header(const char* first, const std::vector<int>& steps) {
    std::string h = first;
    for (int s : steps) h += ",S=" + std::to_string(s);
    return h + "\n";
}

TimestepSubset subset_for(const RunConfig& cfg, int size, SubsetPolicy policy) {
    if (size > cfg.total_steps) {
        throw ConfigError("subset size " + std::to_string(size) + " exceeds T=" + std::to_string(cfg.total_steps));
    }
    return make_subset(cfg.total_steps, size, policy);
}

}  // namespace

json default_config() {
    const RunConfig d;
    const TrainConfig t;
    const MlpArch a;
    return {{"seed", 0},
            {"out_dir", "out"},
            {"model_path", ""},
            {"data_dir", ""},
            {"schedule", {{"T", 1000}, {"beta1", 1e-4}, {"betaT", 0.02}}},
            {"subset", {{"S", 3}, {"policy", "uniform"}}},
            {"mode", "combined"},
            {"recon_ratio", d.recon_ratio},
            {"output_size", 0},
            {"fpr_cap", d.fpr_cap},
            {"bench", bench_json(BenchConfig{})},
            {"model", {{"depth", a.depth}, {"width", 512}, {"cond_dim", a.cond_dim}, {"time_dim", a.time_dim}}},
            {"train",
             {{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lr_initial", t.lr_initial},
              {"lr_peak", t.lr_peak},
              {"lr_final", t.lr_final},
              {"warmup_epochs", t.warmup_epochs},
              {"weight_decay", t.weight_decay},
              {"grad_clip", t.grad_clip}}},
            {"grid", {{"steps", {3, 5, 10, 50, 100, 1000}}, {"ratios", {0.1, 0.2, 0.4, 0.6, 0.8}}}},
            {"ablate_scoring", {{"steps", {3, 5, 10, 50, 100, 1000}}, {"bins", 20}}},
            {"ablate_schedule", {{"steps", {3, 10, 100}}}},
            {"invert", {{"input", ""}, {"output", ""}}}};
}

json merge_config(const json& overrides) {
    json merged = default_config();
    if (overrides.is_null()) return merged;
    check_keys(merged, overrides, "");
    merged.merge_patch(overrides);
    return merged;
}

void set_dotted(json& config, const std::string& key, const std::string& value) {
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    json* node = &config;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("malformed config key '" + key + "'");
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = std::move(parsed);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    try {
        c.seed = get<std::uint64_t>(j, "seed");
        c.out_dir = get<std::string>(j, "out_dir");
        c.model_path = get<std::string>(j, "model_path");
        c.data_dir = get<std::string>(j, "data_dir");

        const json& s = j.at("schedule");
        c.total_steps = get_int(s, "T");
        c.beta_first = get<double>(s, "beta1");
        c.beta_last = get<double>(s, "betaT");
        NoiseSchedule::linear(c.total_steps, c.beta_first, c.beta_last);

        const json& sub = j.at("subset");
        c.subset_size = get_int(sub, "S");
        c.policy = parse_subset_policy(get<std::string>(sub, "policy"));
        if (c.subset_size < 1 || c.subset_size > c.total_steps) throw ConfigError("subset.S must be in [1, T]");

        c.mode = parse_score_mode(get<std::string>(j, "mode"));
        c.recon_ratio = get<double>(j, "recon_ratio");
        if (!(c.recon_ratio > 0.0) || c.recon_ratio > 1.0) throw ConfigError("recon_ratio must be in (0, 1]");
        c.output_size = get_size(j, "output_size");
        c.fpr_cap = get<double>(j, "fpr_cap");
        if (!(c.fpr_cap > 0.0) || c.fpr_cap > 1.0) throw ConfigError("fpr_cap must be in (0, 1]");

        const json& b = j.at("bench");
        c.bench.channels = get_size(b, "channels");
        c.bench.height = get_size(b, "height");
        c.bench.width = get_size(b, "width");
        c.bench.n_train = get_size(b, "n_train");
        c.bench.n_test_normal = get_size(b, "n_test_normal");
        c.bench.n_test_anomalous = get_size(b, "n_test_anomalous");
        c.bench.smooth_radius = get_int(b, "smooth_radius");
        c.bench.noise_scale = get<double>(b, "noise_scale");
        c.bench.mean_amplitude = get<double>(b, "mean_amplitude");
        c.bench.anomaly_magnitude = get<double>(b, "anomaly_magnitude");
        c.bench.seed = get<std::uint64_t>(b, "seed");
        c.bench.validate();

        const json& m = j.at("model");
        c.arch.depth = get_int(m, "depth");
        c.arch.width = get_int(m, "width");
        c.arch.cond_dim = get_int(m, "cond_dim");
        c.arch.time_dim = get_int(m, "time_dim");

        const json& t = j.at("train");
        c.train.epochs = get_int(t, "epochs");
        c.train.batch_size = get_int(t, "batch_size");
        c.train.lr_initial = get<double>(t, "lr_initial");
        c.train.lr_peak = get<double>(t, "lr_peak");
        c.train.lr_final = get<double>(t, "lr_final");
        c.train.warmup_epochs = get<double>(t, "warmup_epochs");
        c.train.weight_decay = get<double>(t, "weight_decay");
        c.train.grad_clip = get<double>(t, "grad_clip");
        c.train.seed = c.seed;
        c.train.validate();

        c.grid_steps = get_steps(j.at("grid"), "steps");
        for (const json& r : j.at("grid").at("ratios")) {
            if (!r.is_number() || !(r.get<double>() > 0.0) || r.get<double>() > 1.0) {
                throw ConfigError("grid.ratios must lie in (0, 1]");
            }
            c.grid_ratios.push_back(r.get<double>());
        }
        c.scoring_steps = get_steps(j.at("ablate_scoring"), "steps");
        c.histogram_bins = get_int(j.at("ablate_scoring"), "bins");
        if (c.histogram_bins < 1) throw ConfigError("ablate_scoring.bins must be positive");
        c.schedule_steps = get_steps(j.at("ablate_schedule"), "steps");
        c.invert_input = get<std::string>(j.at("invert"), "input");
        c.invert_output = get<std::string>(j.at("invert"), "output");
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    return c;
}

fs::path RunConfig::model_file() const { return model_path.empty() ? out_dir / "model.ivad" : model_path; }

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule::linear(total_steps, beta_first, beta_last); }

Data load_data(const RunConfig& cfg, bool need_train, bool need_test) {
    Data d;
    if (cfg.data_dir.empty()) {
        Dataset ds = make_dataset(cfg.bench);
        d.train = std::move(ds.train);
        d.test = std::move(ds.test);
    } else {
        if (need_train) d.train = read_ften(cfg.data_dir / "train.ften");
        if (need_test) d.test = read_test_split(cfg.data_dir / "test.ften", cfg.data_dir / "labels.csv");
    }
    if (need_train && d.train.size() < 2) throw InvalidArgument("training split needs at least two samples");
    if (need_test) {
        if (d.test.empty()) throw InvalidArgument("test split is empty");
        const auto shape = d.test.front().features.shape();
        for (const auto& s : d.test) {
            if (s.features.shape() != shape) throw InvalidArgument("test features have inconsistent shapes");
        }
        if (need_train && d.train.front().shape() != shape) {
            throw InvalidArgument("train and test feature shapes differ");
        }
    }
    return d;
}

unsigned thread_count() {
    const char* env = std::getenv("INVAD_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw ConfigError("INVAD_THREADS must be an integer in [1, 1024]");
    return static_cast<unsigned>(v);
}

std::vector<Tensor> invert_all(const NoiseSchedule& schedule, const EpsilonModel& model,
                               const std::vector<Tensor>& latents, const TimestepSubset& subset,
                               std::vector<std::uint64_t>* nfe) {
    std::vector<Tensor> out(latents.size());
    if (nfe) nfe->assign(latents.size(), 0);
    for_chunks(latents.size(), [&](std::size_t begin, std::size_t end) {
        const CountingModel counted(model);
        auto z = invert_batch(schedule, counted, std::span(latents).subspan(begin, end - begin), subset);
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = std::move(z[i - begin]);
            if (nfe) (*nfe)[i] = counted.evaluations() / (end - begin);
        }
    });
    return out;
}

std::vector<Tensor> reconstruct_all(const NoiseSchedule& schedule, const EpsilonModel& model,
                                    const std::vector<Tensor>& latents, const TimestepSubset& subset, double ratio,
                                    std::uint64_t seed, std::vector<std::uint64_t>* nfe) {
    std::vector<Tensor> out(latents.size());
    if (nfe) nfe->assign(latents.size(), 0);
    const auto ratio_key = static_cast<std::uint64_t>(std::llround(ratio * 1e6));
    for_chunks(latents.size(), [&](std::size_t begin, std::size_t end) {
        std::vector<Rng> rngs;
        for (std::size_t i = begin; i < end; ++i) {
            rngs.emplace_back(seed, derive_stream({kReconStreamTag, subset.size(), ratio_key, i}));
        }
        const CountingModel counted(model);
        auto z = reconstruct_batch(schedule, counted, std::span(latents).subspan(begin, end - begin), subset, ratio,
                                   rngs);
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = std::move(z[i - begin]);
            if (nfe) (*nfe)[i] = counted.evaluations() / (end - begin);
        }
    });
    return out;
}

Tensor upsample_mask(const Tensor& mask, std::size_t out_height, std::size_t out_width) {
    Tensor up = bilinear_upsample(mask, out_height, out_width);
    for (double& v : up.values()) v = v >= 0.5 ? 1.0 : 0.0;
    return up;
}

std::size_t output_size(const RunConfig& cfg, std::size_t h) {
    if (cfg.output_size != 0) {
        if (cfg.output_size < h) throw ConfigError("output_size is smaller than the feature map");
        return cfg.output_size;
    }
    return h <= 1 ? 1 : 4 * (h - 1) + 1;
}

namespace {

std::pair<std::size_t, std::size_t> out_dims(const RunConfig& cfg, const Tensor& features) {
    return {output_size(cfg, features.dim(1)), output_size(cfg, features.dim(2))};
}

// Per-sample results of one scoring pass.
struct Scored {
    std::vector<double> scores;
    std::vector<Tensor> maps;
    std::vector<std::uint64_t> nfe;
};

Scored score_inversion(const RunConfig& cfg, const NoiseSchedule& schedule, const EpsilonModel& model,
                       const std::vector<LabeledSample>& test, const TimestepSubset& subset, ScoreMode mode,
                       bool keep_maps) {
    Scored out;
    const auto latents = invert_all(schedule, model, features_of(test), subset, &out.nfe);
    const auto [height, width] = out_dims(cfg, test.front().features);
    for (const auto& z : latents) {
        AnomalyResult r = anomaly_result(z, height, width, mode);
        out.scores.push_back(r.score);
        if (keep_maps) out.maps.push_back(std::move(r.map));
    }
    return out;
}

double auroc_of(const std::vector<LabeledSample>& test, const std::vector<double>& scores) {
    return au_roc(image_set(test, scores));
}

}  // namespace

double inversion_auroc(const RunConfig& cfg, const NoiseSchedule& schedule, const EpsilonModel& model,
                       const std::vector<LabeledSample>& test, const TimestepSubset& subset, ScoreMode mode) {
    return auroc_of(test, score_inversion(cfg, schedule, model, test, subset, mode, false).scores);
}

fs::path cmd_gen_data(const json& merged) {
    const RunConfig cfg = prepare(merged);
    write_dataset(make_dataset(cfg.bench), cfg.out_dir);
    return cfg.out_dir / "labels.csv";
}

fs::path cmd_train(const json& merged) {
    const RunConfig cfg = prepare(merged);
    const Data data = load_data(cfg, true, false);
    MlpArch arch = cfg.arch;
    arch.latent_shape = data.train.front().shape();
    const NoiseSchedule schedule = cfg.schedule();
    const TrainResult result = train_eps(data.train, schedule, arch, cfg.train, [](int epoch, double loss) {
        std::fprintf(stderr, "epoch %d loss %.6f\n", epoch, loss);
    });
    save_model(cfg.model_file(), schedule, result.model);
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        csv += std::to_string(e) + "," + fmt("%.17g", result.epoch_losses[e]) + "\n";
    }
    const fs::path path = cfg.out_dir / "loss.csv";
    write_text(path, csv);
    return path;
}

fs::path cmd_eval(const json& merged) {
    const RunConfig cfg = prepare(merged);
    const bool mahalanobis = cfg.mode == ScoreMode::Mahalanobis;
    const Data data = load_data(cfg, mahalanobis, true);
    const auto [height, width] = out_dims(cfg, data.test.front().features);

    Scored scored;
    if (mahalanobis) {
        const LocationStats stats = fit_location_stats(data.train);
        if (stats.floored > 0) {
            std::fprintf(stderr, "warning: %zu feature variances floored at %g\n", stats.floored,
                         LocationStats::kVarianceFloor);
        }
        for (const auto& s : data.test) {
            AnomalyResult r = mahalanobis_score(stats, s.features, height, width);
            scored.scores.push_back(r.score);
            scored.maps.push_back(std::move(r.map));
            scored.nfe.push_back(0);
        }
    } else {
        const LoadedModel lm = load_checked(cfg, data_shape(data));
        const TimestepSubset subset = subset_for(cfg, cfg.subset_size, cfg.policy);
        if (cfg.mode == ScoreMode::Recon) {
            if (perturbation_index(cfg.recon_ratio, subset.size()) == 0) {
                throw ConfigError("recon_ratio selects no step at S=" + std::to_string(subset.size()));
            }
            const auto features = features_of(data.test);
            const auto recon =
                reconstruct_all(lm.schedule, lm.model, features, subset, cfg.recon_ratio, cfg.seed, &scored.nfe);
            for (std::size_t i = 0; i < features.size(); ++i) {
                AnomalyResult r = recon_score(features[i], recon[i], height, width);
                scored.scores.push_back(r.score);
                scored.maps.push_back(std::move(r.map));
            }
        } else {
            scored = score_inversion(cfg, lm.schedule, lm.model, data.test, subset, cfg.mode, true);
        }
    }

    std::vector<Tensor> masks;
    for (const auto& s : data.test) masks.push_back(upsample_mask(s.mask, height, width));
    const MetricsReport report = evaluate_metrics(image_set(data.test, scored.scores), scored.maps, masks, cfg.fpr_cap);

    std::string scores_csv = "sample_id,label,score,mode,nfe\n";
    const std::string mode(to_string(cfg.mode));
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        scores_csv += std::to_string(i) + "," + std::to_string(data.test[i].label) + "," +
                      fmt("%.17g", scored.scores[i]) + "," + mode + "," + std::to_string(scored.nfe[i]) + "\n";
    }
    write_text(cfg.out_dir / "scores.csv", scores_csv);
    const fs::path path = cfg.out_dir / "metrics.csv";
    write_text(path, MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
    return path;
}

fs::path cmd_grid(const json& merged) {
    const RunConfig cfg = prepare(merged);
    const Data data = load_data(cfg, false, true);
    const LoadedModel lm = load_checked(cfg, data_shape(data));
    const auto features = features_of(data.test);
    const auto [height, width] = out_dims(cfg, features.front());

    std::string csv = steps_header("row", cfg.grid_steps);
    for (double ratio : cfg.grid_ratios) {
        csv += "recon_r" + std::to_string(std::lround(ratio * 100));
        for (int steps : cfg.grid_steps) {
            const TimestepSubset subset = subset_for(cfg, steps, SubsetPolicy::Uniform);
            if (perturbation_index(ratio, subset.size()) == 0) {
                csv += ",n/a";
                continue;
            }
            const auto recon = reconstruct_all(lm.schedule, lm.model, features, subset, ratio, cfg.seed);
            std::vector<double> scores;
            for (std::size_t i = 0; i < features.size(); ++i) {
                scores.push_back(recon_score(features[i], recon[i], height, width).score);
            }
            csv += "," + cell(auroc_of(data.test, scores));
        }
        csv += "\n";
    }
    csv += "inversion";
    for (int steps : cfg.grid_steps) {
        const TimestepSubset subset = subset_for(cfg, steps, SubsetPolicy::Uniform);
        csv += "," + cell(inversion_auroc(cfg, lm.schedule, lm.model, data.test, subset, cfg.mode));
    }
    csv += "\n";
    const fs::path path = cfg.out_dir / "grid.csv";
    write_text(path, csv);
    return path;
}

fs::path cmd_ablate_scoring(const json& merged) {
    const RunConfig cfg = prepare(merged);
    const Data data = load_data(cfg, false, true);
    const LoadedModel lm = load_checked(cfg, data_shape(data));
    const auto features = features_of(data.test);
    const auto [height, width] = out_dims(cfg, features.front());
    const ScoreMode modes[] = {ScoreMode::Nll, ScoreMode::Diff, ScoreMode::Combined};

    // scores[mode][S index][sample]
    std::vector<std::vector<std::vector<double>>> scores(3);
    for (int steps : cfg.scoring_steps) {
        const auto latents = invert_all(lm.schedule, lm.model, features, subset_for(cfg, steps, SubsetPolicy::Uniform));
        for (std::size_t m = 0; m < 3; ++m) {
            std::vector<double> s;
            for (const auto& z : latents) s.push_back(anomaly_result(z, height, width, modes[m]).score);
            scores[m].push_back(std::move(s));
        }
    }

    std::string csv = steps_header("mode", cfg.scoring_steps);
    std::string hist = "mode,S,bin,lo,hi,normal,anomalous\n";
    for (std::size_t m = 0; m < 3; ++m) {
        const std::string name(to_string(modes[m]));
        csv += name;
        for (std::size_t k = 0; k < cfg.scoring_steps.size(); ++k) {
            const auto& s = scores[m][k];
            csv += "," + cell(auroc_of(data.test, s));

            const double lo = *std::min_element(s.begin(), s.end());
            const double hi = *std::max_element(s.begin(), s.end());
            const auto bins = static_cast<std::size_t>(cfg.histogram_bins);
            std::vector<std::size_t> normal(bins, 0), anomalous(bins, 0);
            for (std::size_t i = 0; i < s.size(); ++i) {
                std::size_t b = hi > lo ? static_cast<std::size_t>((s[i] - lo) / (hi - lo) * static_cast<double>(bins)) : 0;
                b = std::min(b, bins - 1);
                (data.test[i].label ? anomalous : normal)[b] += 1;
            }
            for (std::size_t b = 0; b < bins; ++b) {
                const double width_b = (hi - lo) / static_cast<double>(bins);
                hist += name + "," + std::to_string(cfg.scoring_steps[k]) + "," + std::to_string(b) + "," +
                        fmt("%.17g", lo + width_b * static_cast<double>(b)) + "," +
                        fmt("%.17g", b + 1 == bins ? hi : lo + width_b * static_cast<double>(b + 1)) + "," +
                        std::to_string(normal[b]) + "," + std::to_string(anomalous[b]) + "\n";
            }
        }
        csv += "\n";
    }
    write_text(cfg.out_dir / "score_histogram.csv", hist);
    const fs::path path = cfg.out_dir / "ablate_scoring.csv";
    write_text(path, csv);
    return path;
}

fs::path cmd_ablate_schedule(const json& merged) {
    const RunConfig cfg = prepare(merged);
    const Data data = load_data(cfg, false, true);
    const LoadedModel lm = load_checked(cfg, data_shape(data));
    std::string csv = steps_header("policy", cfg.schedule_steps);
    for (auto policy : {SubsetPolicy::Uniform, SubsetPolicy::Quad, SubsetPolicy::Cube, SubsetPolicy::Exp}) {
        csv += std::string(to_string(policy));
        for (int steps : cfg.schedule_steps) {
            csv += "," + cell(inversion_auroc(cfg, lm.schedule, lm.model, data.test, subset_for(cfg, steps, policy),
                                              cfg.mode));
        }
        csv += "\n";
    }
    const fs::path path = cfg.out_dir / "ablate_schedule.csv";
    write_text(path, csv);
    return path;
}

fs::path cmd_invert(const json& merged) {
    const RunConfig cfg = prepare(merged);
    if (cfg.invert_input.empty()) throw ConfigError("invert.input is required");
    const auto features = read_ften(cfg.invert_input);
    if (features.empty()) throw InvalidArgument(cfg.invert_input.string() + " holds no tensors");
    const LoadedModel lm = load_checked(cfg, features.front().shape());
    const auto latents = invert_all(lm.schedule, lm.model, features, subset_for(cfg, cfg.subset_size, cfg.policy));
    const fs::path out = cfg.invert_output.empty() ? cfg.out_dir / "latents.ften" : cfg.invert_output;
    write_ften(out, latents);
    return out;
}

}  // namespace invad::cli
