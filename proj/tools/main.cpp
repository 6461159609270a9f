#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "commands.hpp"
#include "invad/error.hpp"

namespace {

using nlohmann::json;

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kFormat = 3, kNumeric = 4, kInvalid = 5 };

json read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw invad::ConfigError("cannot open config file " + path);
    json j = json::parse(f, nullptr, false, true);
    if (j.is_discarded()) throw invad::ConfigError("config file " + path + " is not valid JSON");
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inversion-based anomaly detection with diffusion models"};
    app.require_subcommand(1);

    std::string config_path, out_dir, model_path, data_dir, policy, mode;
    std::vector<std::string> sets;
    std::int64_t seed = -1, steps = -1, epochs = -1;
    double ratio = -1.0;
    std::string input, output;

    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON run config");
        sub->add_option("-o,--out", out_dir, "output directory (out_dir)");
        sub->add_option("--seed", seed, "seed");
        sub->add_option("--data", data_dir, "directory with train.ften, test.ften, labels.csv (data_dir)");
        sub->add_option("--set", sets, "override any config key: key.path=value")->take_all();
    };
    auto with_model = [&](CLI::App* sub) {
        sub->add_option("-m,--model", model_path, "model file (model_path)");
        sub->add_option("-S,--steps", steps, "inversion steps (subset.S)");
        sub->add_option("--policy", policy, "uniform | quad | cube | exp (subset.policy)");
        sub->add_option("--mode", mode, "nll | diff | combined | recon | mahalanobis (mode)");
    };

    std::map<std::string, std::function<std::filesystem::path(const json&)>> handlers = {
        {"gen-data", invad::cli::cmd_gen_data},
        {"train", invad::cli::cmd_train},
        {"eval", invad::cli::cmd_eval},
        {"grid", invad::cli::cmd_grid},
        {"ablate-scoring", invad::cli::cmd_ablate_scoring},
        {"ablate-schedule", invad::cli::cmd_ablate_schedule},
        {"invert", invad::cli::cmd_invert},
    };
    const std::map<std::string, std::string> help = {
        {"gen-data", "write the synthetic benchmark as FTEN files"},
        {"train", "train the eps-network on normal features"},
        {"eval", "score the test split and write metrics"},
        {"grid", "image AU-ROC of reconstruction vs inversion over S and r"},
        {"ablate-scoring", "image AU-ROC of nll / diff / combined over S, plus score histograms"},
        {"ablate-schedule", "image AU-ROC per subset policy over S"},
        {"invert", "map FTEN features to terminal latents"},
    };
    for (const auto& [name, text] : help) {
        CLI::App* sub = app.add_subcommand(name, text);
        common(sub);
        if (name != "gen-data") with_model(sub);
        if (name == "train") sub->add_option("--epochs", epochs, "training epochs (train.epochs)");
        if (name == "eval") sub->add_option("--ratio", ratio, "perturbation ratio for mode=recon (recon_ratio)");
        if (name == "invert") {
            sub->add_option("-i,--input", input, "input FTEN (invert.input)");
            sub->add_option("--output", output, "output FTEN (invert.output)");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        json overrides = config_path.empty() ? json::object() : read_config_file(config_path);
        if (!overrides.is_object()) throw invad::ConfigError("config file must hold a JSON object");
        auto put = [&](const std::string& key, const json& value) { invad::cli::set_dotted(overrides, key, value.dump()); };
        if (!out_dir.empty()) put("out_dir", out_dir);
        if (!model_path.empty()) put("model_path", model_path);
        if (!data_dir.empty()) put("data_dir", data_dir);
        if (seed >= 0) put("seed", seed);
        if (steps >= 0) put("subset.S", steps);
        if (!policy.empty()) put("subset.policy", policy);
        if (!mode.empty()) put("mode", mode);
        if (epochs >= 0) put("train.epochs", epochs);
        if (ratio >= 0) put("recon_ratio", ratio);
        if (!input.empty()) put("invert.input", input);
        if (!output.empty()) put("invert.output", output);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw invad::ConfigError("--set expects key=value, got '" + s + "'");
            invad::cli::set_dotted(overrides, s.substr(0, eq), s.substr(eq + 1));
        }
        const json merged = invad::cli::merge_config(overrides);
        const std::string name = app.get_subcommands().front()->get_name();
        const auto written = handlers.at(name)(merged);
        std::printf("%s\n", written.string().c_str());
        return kOk;
    } catch (const invad::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const invad::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kFormat;
    } catch (const invad::NumericFailure& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kNumeric;
    } catch (const invad::InvalidArgument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return kInvalid;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kOther;
    }
}
