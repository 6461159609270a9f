// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when a criterion fails that is not listed as a known deviation.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "brute_oracles.hpp"
#include "commands.hpp"
#include "invad/diffusion.hpp"
#include "invad/eps_model.hpp"
#include "invad/ften.hpp"
#include "invad/metrics.hpp"
#include "invad/mlp.hpp"
#include "invad/schedule.hpp"
#include "invad/scoring.hpp"
#include "invad/train.hpp"
#include "oracle_values.hpp"

using namespace invad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tolerances and budgets.
constexpr double kLambdaTol = 1e-9;
constexpr double kRoundtripTol = 1e-2;
constexpr double kGradTol = 1e-4;
constexpr int kGradModels = 100;
constexpr double kOracleRatioTol = 0.05;
constexpr int kMetricInstances = 200;
constexpr double kAuproTol = 1e-9;
constexpr double kTrendNearBest = 0.02;  // criterion (a), AU-ROC units
constexpr double kTrendReconGap = 0.03;  // criterion (b)

constexpr double kLambdaBudget = 10.0;  // seconds
constexpr double kRoundtripBudget = 60.0;
constexpr double kGradBudget = 60.0;
constexpr double kOracleBudget = 300.0;
constexpr double kTrendBudget = 600.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

const NoiseSchedule& sched() {
    static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    return s;
}

Tensor gaussian_latent(Rng& r, std::size_t c, std::size_t h, std::size_t w) {
    Tensor t = Tensor::latent(c, h, w);
    for (double& v : t.values()) v = r.gaussian();
    return t;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome lambda_exactness() {
    Rng r(101, 0);
    const AnalyticGaussianModel model(sched(), 0.0, 1.0);
    double worst = 0.0;
    for (const auto& c : oracle::kSubsetCases) {
        const auto subset = make_subset(1000, c.size, parse_subset_policy(c.policy));
        const Tensor z0 = gaussian_latent(r, 4, 8, 8);
        const Tensor zT = invert(sched(), model, z0, subset);
        for (std::size_t i = 0; i < z0.size(); ++i) worst = std::max(worst, std::abs(zT[i] - c.lambda * z0[i]));
    }
    return {worst <= kLambdaTol, "max |zT - lambda z0| = " + fmt("%.3g", worst) + " over 12 subsets"};
}

Outcome roundtrip() {
    const AnalyticGaussianModel model(sched(), 0.0, 1.0);
    Rng r(102, 0);
    const Tensor xT = gaussian_latent(r, 4, 8, 8);
    std::vector<double> errs;
    for (int s : {10, 100, 1000}) {
        const auto subset = make_subset(1000, s, SubsetPolicy::Uniform);
        const Tensor back = invert(sched(), model, ddim_sample(sched(), model, xT, subset), subset);
        errs.push_back(std::sqrt((back - xT).squared_norm() / xT.squared_norm()));
    }
    const bool monotone = errs[0] > errs[1] && errs[1] > errs[2];
    return {monotone && errs[2] < kRoundtripTol, "relative error S=10/100/1000: " + fmt("%.3g", errs[0]) + " / " +
                                                     fmt("%.3g", errs[1]) + " / " + fmt("%.3g", errs[2])};
}

Outcome gradients() {
    Rng r(103, 0);
    double worst = 0.0;
    int passed = 0;
    for (int k = 0; k < kGradModels; ++k) {
        MlpArch a;
        a.latent_shape = {1 + r.below(3), 1 + r.below(3), 1 + r.below(3)};
        a.depth = 1 + static_cast<int>(r.below(2));
        a.width = 2 + static_cast<int>(r.below(7));
        a.cond_dim = 2 + static_cast<int>(r.below(4));
        a.time_dim = 2 * (1 + static_cast<int>(r.below(3)));
        auto m = MlpEpsModel::initialized(a, 1000, r);
        m.randomize_all(r, 0.5);
        const auto rep = grad_check(m, sched(), kGradTol, 1000 + static_cast<std::uint64_t>(k));
        worst = std::max(worst, rep.max_rel_error);
        passed += rep.passed ? 1 : 0;
    }
    return {passed == kGradModels && worst < kGradTol,
            std::to_string(passed) + "/" + std::to_string(kGradModels) + " models, max rel error " + fmt("%.3g", worst)};
}

Outcome train_to_oracle() {
    Rng data_rng(104, 0);
    std::vector<Tensor> normals;
    for (int i = 0; i < 2000; ++i) normals.push_back(gaussian_latent(data_rng, 8, 4, 4));
    MlpArch arch;
    arch.latent_shape = {8, 4, 4};
    TrainConfig cfg;
    cfg.seed = 104;
    const auto result = train_eps(normals, sched(), arch, cfg);

    // Under standard-normal data x_t ~ N(0, I) at every step.
    const AnalyticGaussianModel oracle_model(sched(), 0.0, 1.0);
    Rng r(105, 0);
    double err = 0.0, ref = 0.0;
    for (int i = 0; i < 4096; ++i) {
        const Step t = static_cast<Step>(r.below(1000));
        const Tensor x = gaussian_latent(r, 8, 4, 4);
        const Tensor want = oracle_model.predict(x, t);
        err += (result.model.predict(x, t) - want).squared_norm();
        ref += want.squared_norm();
    }
    const double ratio = err / ref;
    return {ratio < kOracleRatioTol, "E|eps - eps*|^2 / E|eps*|^2 = " + fmt("%.4f", ratio)};
}

Outcome metrics_oracles() {
    Rng r(106, 0);
    int exact = 0;
    for (int k = 0; k < kMetricInstances; ++k) {
        ScoredSet set;
        const std::size_t n = 2 + r.below(63);
        const std::uint64_t levels = 1 + r.below(20);
        for (std::size_t i = 0; i < n; ++i) {
            set.scores.push_back(static_cast<double>(r.below(levels)) / static_cast<double>(levels));
            set.labels.push_back(static_cast<std::uint8_t>(r.below(2)));
        }
        set.labels[0] = 1;
        set.labels[1] = 0;
        const bool same = au_roc(set) == brute::auroc(set.scores, set.labels) &&
                          average_precision(set) == brute::average_precision(set.scores, set.labels) &&
                          f1_max(set) == brute::f1_max(set.scores, set.labels);
        exact += same ? 1 : 0;
    }
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> maps, masks;
        for (int k = 0; k < 2; ++k) {
            Tensor map = Tensor::map2d(16, 16), mask = Tensor::map2d(16, 16);
            for (double& v : map.values()) v = r.uniform();
            const std::size_t rects = 1 + r.below(3);
            for (std::size_t q = 0; q < rects; ++q) {
                const std::size_t y0 = r.below(14), x0 = r.below(14);
                const std::size_t hh = 1 + r.below(3), ww = 1 + r.below(3);
                for (std::size_t y = y0; y < std::min<std::size_t>(16, y0 + hh); ++y) {
                    for (std::size_t x = x0; x < std::min<std::size_t>(16, x0 + ww); ++x) {
                        mask.at(y, x) = 1.0;
                        map.at(y, x) += 0.3 * r.uniform();
                    }
                }
            }
            maps.push_back(map);
            masks.push_back(mask);
        }
        for (double cap : {0.1, 0.3, 1.0}) worst = std::max(worst, std::abs(au_pro(maps, masks, cap) - brute::au_pro(maps, masks, cap)));
    }
    return {exact == kMetricInstances && worst <= kAuproTol,
            std::to_string(exact) + "/" + std::to_string(kMetricInstances) + " exact; AU-PRO max diff " + fmt("%.3g", worst)};
}

Outcome nfe_accounting() {
    Rng r(107, 0);
    const AnalyticGaussianModel inner(sched(), 0.0, 1.0);
    CountingModel counter(inner);
    std::vector<Tensor> batch;
    for (int i = 0; i < 5; ++i) batch.push_back(gaussian_latent(r, 2, 3, 3));

    invert_batch(sched(), counter, batch, make_subset(1000, 3, SubsetPolicy::Uniform));
    const double inv = static_cast<double>(counter.evaluations()) / 5.0;
    counter.reset();
    std::vector<Rng> rngs;
    for (std::uint64_t i = 0; i < 5; ++i) rngs.emplace_back(108, i);
    reconstruct_batch(sched(), counter, batch, make_subset(1000, 10, SubsetPolicy::Uniform), 0.4, rngs);
    const double rec = static_cast<double>(counter.evaluations()) / 5.0;
    return {inv == 3.0 && rec == 4.0, "invert S=3: " + fmt("%g", inv) + " per sample, reconstruct S=10 r=0.4: " + fmt("%g", rec)};
}

Outcome scoring_identities() {
    Rng r(109, 0);
    bool combined_ok = true;
    for (int k = 0; k < 50; ++k) {
        const Tensor z = gaussian_latent(r, 1 + r.below(8), 1 + r.below(8), 1 + r.below(8));
        double mx = -INFINITY, mn = INFINITY, sum = 0.0;
        for (std::size_t y = 0; y < z.dim(1); ++y) {
            for (std::size_t x = 0; x < z.dim(2); ++x) {
                double s = 0.0;
                for (std::size_t c = 0; c < z.dim(0); ++c) s += z.at(c, y, x) * z.at(c, y, x);
                const double v = std::sqrt(s);
                mx = std::max(mx, v);
                mn = std::min(mn, v);
                sum += v;
            }
        }
        combined_ok = combined_ok && anomaly_result(z, 29, 29, ScoreMode::Combined).score == mx - mn + sum;
    }

    Tensor pixel = Tensor::latent(2, 1, 1);
    pixel.at(0, 0, 0) = 3.0;
    pixel.at(1, 0, 0) = 4.0;
    const bool norm_ok = norm_map(pixel).at(0, 0) == 5.0;

    std::vector<Tensor> tensors;
    for (int k = 0; k < 3; ++k) {
        Tensor t = Tensor::latent(3, 4, 5);
        for (double& v : t.values()) v = static_cast<double>(static_cast<float>(r.gaussian()));
        tensors.push_back(t);
    }
    tensors[0].values()[0] = -0.0;
    tensors[0].values()[1] = static_cast<double>(std::numeric_limits<float>::denorm_min());
    tensors[0].values()[2] = static_cast<double>(std::numeric_limits<float>::max());
    const auto bytes = encode_ften(tensors);
    const auto back = decode_ften(bytes);
    bool ften_ok = back.size() == tensors.size() && encode_ften(back) == bytes;
    for (std::size_t k = 0; ften_ok && k < back.size(); ++k) {
        ften_ok = back[k].shape() == tensors[k].shape();
        for (std::size_t i = 0; ften_ok && i < back[k].size(); ++i) {
            ften_ok = std::bit_cast<std::uint64_t>(back[k][i]) == std::bit_cast<std::uint64_t>(tensors[k][i]);
        }
    }
    return {combined_ok && norm_ok && ften_ok, std::string("combined = max-min+sum ") + (combined_ok ? "yes" : "no") +
                                                   ", |(3,4)| = 5 " + (norm_ok ? "yes" : "no") + ", FTEN bit-exact " +
                                                   (ften_ok ? "yes" : "no")};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

Outcome few_step_trend(const fs::path& work) {
    json overrides = {{"out_dir", (work / "trend").string()}, {"grid", {{"steps", {3, 5, 10, 50, 100}}}}};
    const json merged = cli::merge_config(overrides);
    cli::cmd_train(merged);
    const auto rows = read_csv(cli::cmd_grid(merged));
    // Header: row,S=3,S=5,S=10,S=50,S=100. Last row: inversion.
    const auto& inv = rows.back();
    std::vector<double> inversion;
    for (std::size_t j = 1; j < inv.size(); ++j) inversion.push_back(std::stod(inv[j]));
    const double best = *std::max_element(inversion.begin(), inversion.end());
    const bool near_best = inversion[0] >= best - kTrendNearBest;

    bool recon_trails = true;
    std::string gaps;
    for (std::size_t j = 0; j < 3; ++j) {  // S = 3, 5, 10
        double best_recon = 0.0;
        for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
            if (rows[i][j + 1] != "n/a") best_recon = std::max(best_recon, std::stod(rows[i][j + 1]));
        }
        recon_trails = recon_trails && inversion[j] - best_recon >= kTrendReconGap;
        gaps += (j ? "/" : "") + fmt("%.1f", 100.0 * (inversion[j] - best_recon));
    }
    return {near_best && recon_trails, std::string("(a) ") + (near_best ? "pass" : "fail") + ": S=3 " +
                                           fmt("%.4f", inversion[0]) + " vs best " + fmt("%.4f", best) + "; (b) " +
                                           (recon_trails ? "pass" : "fail") + ": inversion minus best recon at S=3/5/10 = " +
                                           gaps + " points"};
}

Outcome determinism(const fs::path& work) {
    const json small = {{"bench", {{"n_train", 128}, {"n_test_normal", 16}, {"n_test_anomalous", 16}}},
                        {"model", {{"width", 32}}},
                        {"train", {{"epochs", 2}, {"warmup_epochs", 1.0}}},
                        {"grid", {{"steps", {3, 10}}, {"ratios", {0.4, 0.8}}}}};
    const fs::path model = work / "det_model" / "model.ivad";
    json cfg = small;
    cfg["out_dir"] = (work / "det_model").string();
    cli::cmd_train(cli::merge_config(cfg));

    std::array<std::string, 2> scores, metrics, grid;
    for (int run = 0; run < 2; ++run) {
        // The second run also changes the worker count.
        setenv("INVAD_THREADS", run == 0 ? "1" : "4", 1);
        json c = small;
        c["out_dir"] = (work / ("det_run" + std::to_string(run))).string();
        c["model_path"] = model.string();
        const json merged = cli::merge_config(c);
        const fs::path s = cli::cmd_eval(merged);
        scores[static_cast<std::size_t>(run)] = read_bytes(s);
        metrics[static_cast<std::size_t>(run)] = read_bytes(s.parent_path() / "metrics.csv");
        grid[static_cast<std::size_t>(run)] = read_bytes(cli::cmd_grid(merged));
    }
    unsetenv("INVAD_THREADS");
    const bool same = !scores[0].empty() && scores[0] == scores[1] && metrics[0] == metrics[1] && grid[0] == grid[1];
    return {same, std::string("scores.csv, metrics.csv, grid.csv ") + (same ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
    const fs::path work = fs::current_path() / "acceptance_work";
    fs::remove_all(work);
    fs::create_directories(work);

    struct Criterion {
        const char* name;
        double budget;  // seconds, 0 = none
        bool known_deviation;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"lambda_exactness", kLambdaBudget, false, lambda_exactness},
        {"roundtrip_convergence", kRoundtripBudget, false, roundtrip},
        {"gradient_correctness", kGradBudget, false, gradients},
        {"train_to_oracle", kOracleBudget, false, train_to_oracle},
        {"metrics_oracles", 0.0, false, metrics_oracles},
        {"few_step_trend", kTrendBudget, true, [&] { return few_step_trend(work); }},
        {"nfe_accounting", 0.0, false, nfe_accounting},
        {"scoring_identities", 0.0, false, scoring_identities},
        {"determinism", 0.0, false, [&] { return determinism(work); }},
    };

    int unexpected = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = c.budget <= 0.0 || secs < c.budget;
        const bool pass = out.pass && in_budget;
        std::string line = std::string(pass ? "PASS " : "FAIL ") + c.name + ": " + out.detail + " [" + fmt("%.1f", secs) + " s";
        if (c.budget > 0.0) line += " of " + fmt("%.0f", c.budget);
        line += "]";
        if (!pass && c.known_deviation) line += " (known deviation)";
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        if (!pass && !c.known_deviation) ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
