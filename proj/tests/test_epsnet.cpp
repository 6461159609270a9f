#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "invad/diffusion.hpp"
#include "invad/eps_model.hpp"
#include "invad/error.hpp"
#include "invad/mlp.hpp"
#include "invad/model_io.hpp"
#include "invad/train.hpp"
#include "stubs.hpp"

using namespace invad;

namespace {

const NoiseSchedule& sched() {
    static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    return s;
}

Tensor random_latent(Rng& r, std::size_t c, std::size_t h, std::size_t w) {
    Tensor t = Tensor::latent(c, h, w);
    for (double& v : t.values()) v = r.gaussian();
    return t;
}

MlpArch tiny_arch() {
    MlpArch a;
    a.latent_shape = {2, 2, 2};
    a.depth = 2;
    a.width = 6;
    a.cond_dim = 4;
    a.time_dim = 4;
    return a;
}

// Step where alpha_bar is closest to 0.5.
Step half_step() {
    Step best = 0;
    for (Step t = 0; t < 1000; ++t) {
        if (std::abs(sched().alpha_bar(t) - 0.5) < std::abs(sched().alpha_bar(best) - 0.5)) best = t;
    }
    return best;
}

}  // namespace

TEST_CASE("analytic model: standard normal gives sqrt(1 - ab) x") {
    const AnalyticGaussianModel m(sched(), 0.0, 1.0);
    const Step t = half_step();
    const double ab = sched().alpha_bar(t);
    const Tensor x({1, 1, 2}, std::vector<double>{1.0, 0.0});
    const Tensor e = predict_eps(m, x, t);
    CHECK(e[0] == doctest::Approx(std::sqrt(1.0 - ab)).epsilon(1e-15));
    CHECK(e[1] == 0.0);
    CHECK(std::abs(e[0] - std::sqrt(0.5)) < 1e-3);
}

TEST_CASE("analytic model: the scaled mean maps to zero noise") {
    Rng r(1, 0);
    const Tensor mu = random_latent(r, 2, 3, 3);
    const AnalyticGaussianModel m(sched(), mu, 2.0);
    for (Step t : {0, 250, 999}) {
        const Tensor e = predict_eps(m, scaled(std::sqrt(sched().alpha_bar(t)), mu), t);
        for (double v : e.values()) CHECK(std::abs(v) < 1e-15);
    }
}

TEST_CASE("analytic model: matches the finite-difference score of the marginal") {
    const double sigma2 = 4.0, mu = 1.0;
    const AnalyticGaussianModel m(sched(), mu, sigma2);
    Rng r(2, 0);
    for (Step t : {0, 100, 500, 999}) {
        const double ab = sched().alpha_bar(t);
        const double var = ab * sigma2 + 1.0 - ab;
        // log q_t(x) for x ~ N(sqrt(ab) mu, var I)
        auto log_q = [&](const Tensor& x) {
            double s = 0;
            for (double v : x.values()) {
                const double d = v - std::sqrt(ab) * mu;
                s += -0.5 * d * d / var - 0.5 * std::log(2 * M_PI * var);
            }
            return s;
        };
        const Tensor x = random_latent(r, 1, 2, 3);
        const Tensor score = finite_diff_grad(log_q, x, 1e-4);
        const Tensor e = predict_eps(m, x, t);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(e[i] + std::sqrt(1.0 - ab) * score[i]) < 1e-6);
    }
}

TEST_CASE("analytic model: linearity about the scaled mean") {
    const AnalyticGaussianModel m(sched(), 0.7, 1.5);
    Rng r(3, 0);
    const Step t = 400;
    const double c = std::sqrt(sched().alpha_bar(t)) * 0.7;
    const Tensor x = random_latent(r, 2, 2, 2);
    const double a = -2.5;
    Tensor moved = x;
    for (double& v : moved.values()) v = a * (v - c) + c;
    const Tensor lhs = predict_eps(m, moved, t);
    const Tensor rhs = scaled(a, predict_eps(m, x, t));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
}

TEST_CASE("predict_eps validates shapes and is deterministic") {
    Rng r(4, 0);
    const Tensor mu = random_latent(r, 2, 2, 2);
    const AnalyticGaussianModel m(sched(), mu, 1.0);
    CHECK_THROWS_AS(predict_eps(m, Tensor::latent(2, 2, 3), 0), InvalidArgument);
    const Tensor x = random_latent(r, 2, 2, 2);
    CHECK(predict_eps(m, x, 10) == predict_eps(m, x, 10));
    CHECK_THROWS_AS(AnalyticGaussianModel(sched(), 0.0, 0.0), InvalidArgument);

    auto mlp = MlpEpsModel::initialized(tiny_arch(), 1000, r);
    CHECK_THROWS_AS(predict_eps(mlp, Tensor::latent(1, 2, 2), 0), InvalidArgument);
    CHECK(predict_eps(mlp, x, 5) == predict_eps(mlp, x, 5));
}

TEST_CASE("epoch_loss: a model returning the drawn noise scores zero") {
    // Every clean sample is the same known x0, so the stub can recover eps.
    const Tensor x0({1, 2, 2}, std::vector<double>{0.5, -1.0, 2.0, 0.0});
    const stubs::FnModel oracle([&](const Tensor& xt, Step t) {
        const double ab = sched().alpha_bar(t);
        return scaled(1.0 / std::sqrt(1.0 - ab), lincomb(1.0, xt, -std::sqrt(ab), x0));
    });
    const std::vector<Tensor> batch(16, x0);
    Rng r(5, 0);
    CHECK(epoch_loss(oracle, batch, sched(), r) < 1e-20);
}

TEST_CASE("epoch_loss Monte-Carlo oracles") {
    Rng data(6, 0);
    std::vector<Tensor> batch;
    for (int i = 0; i < 10000; ++i) batch.push_back(random_latent(data, 1, 2, 2));
    const double n = 10000.0 * 4.0;

    SUBCASE("analytic model at a fixed step: per-element loss is alpha_bar") {
        const AnalyticGaussianModel m(sched(), 0.0, 1.0);
        for (Step t : {100, half_step(), 900}) {
            Rng r(7, static_cast<std::uint64_t>(t));
            const double ab = sched().alpha_bar(t);
            const double per_element = epoch_loss(m, batch, sched(), r, t) / 4.0;
            // (eps - eps*) ~ N(0, ab) per element, so its square has sd ab * sqrt(2).
            CHECK(std::abs(per_element - ab) < 4.0 * ab * std::sqrt(2.0 / n));
        }
    }
    SUBCASE("zero model: per-element loss is one") {
        const stubs::ScaleModel zero;
        Rng r(8, 0);
        const double per_element = epoch_loss(zero, batch, sched(), r) / 4.0;
        CHECK(std::abs(per_element - 1.0) < 4.0 * std::sqrt(2.0 / n));
    }
}

TEST_CASE("mlp: zero modulation makes every block the identity") {
    Rng r(9, 0);
    auto m = MlpEpsModel::initialized(tiny_arch(), 1000, r);
    // Remove the blocks' effect by hand: with zero gate the output is W_out h + b_out
    // where h = W_in x + b_in, independent of t.
    const Tensor x = random_latent(r, 2, 2, 2);
    CHECK(m.predict(x, 0) == m.predict(x, 999));
    m.randomize_all(r, 0.5);
    CHECK(!(m.predict(x, 0) == m.predict(x, 999)));
}

TEST_CASE("mlp: time embedding differs between steps") {
    const MlpEpsModel m(tiny_arch(), 1000);
    for (Step a : {0, 1, 500, 998}) CHECK(m.time_embedding(a) != m.time_embedding(a + 1));
    CHECK(m.time_embedding(3) == m.time_embedding(3));
}

TEST_CASE("mlp: architecture validation") {
    MlpArch a = tiny_arch();
    a.depth = 0;
    CHECK_THROWS_AS(MlpEpsModel(a, 1000), InvalidArgument);
    a = tiny_arch();
    a.time_dim = 3;
    CHECK_THROWS_AS(MlpEpsModel(a, 1000), InvalidArgument);
    a = tiny_arch();
    a.latent_shape = {4};
    CHECK_THROWS_AS(MlpEpsModel(a, 1000), InvalidArgument);
}

TEST_CASE("mlp: batched prediction agrees with single prediction") {
    Rng r(10, 0);
    auto m = MlpEpsModel::initialized(tiny_arch(), 1000, r);
    m.randomize_all(r, 0.4);
    std::vector<Tensor> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(random_latent(r, 2, 2, 2));
    const auto batch = m.predict_batch(xs, 321);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Tensor one = m.predict(xs[i], 321);
        for (std::size_t k = 0; k < one.size(); ++k) CHECK(batch[i][k] == doctest::Approx(one[k]).epsilon(1e-12));
    }
}

TEST_CASE("grad_check: random tiny model passes") {
    Rng r(11, 0);
    auto m = MlpEpsModel::initialized(tiny_arch(), 1000, r);
    m.randomize_all(r, 0.5);
    const auto report = grad_check(m, sched(), 1e-4, 1);
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("grad_check: a corrupted layer gradient fails") {
    Rng r(12, 0);
    auto m = MlpEpsModel::initialized(tiny_arch(), 1000, r);
    m.randomize_all(r, 0.5);
    const ParamGroup* fc1 = nullptr;
    for (const auto& g : m.groups()) {
        if (g.name == "block0.fc1.w") fc1 = &g;
    }
    REQUIRE(fc1 != nullptr);
    const auto report = grad_check(m, sched(), 1e-4, 1, 4, [&](const MlpEpsModel&, std::vector<double>& grad) {
        for (std::size_t i = 0; i < fc1->size; ++i) grad[fc1->offset + i] *= 1.01;
    });
    CHECK(!report.passed);
    CHECK(report.worst_group == "block0.fc1.w");
}

TEST_CASE("grad_check: refuses large models") {
    MlpArch a = tiny_arch();
    a.width = 200;
    const MlpEpsModel m(a, 1000);
    CHECK_THROWS_AS(grad_check(m, sched(), 1e-4, 1), InvalidArgument);
}

TEST_CASE("learning-rate schedule shape") {
    TrainConfig cfg;
    CHECK(learning_rate(cfg, 0.0) == doctest::Approx(cfg.lr_initial));
    CHECK(learning_rate(cfg, cfg.warmup_epochs) == doctest::Approx(cfg.lr_peak));
    CHECK(learning_rate(cfg, cfg.epochs) == doctest::Approx(cfg.lr_final));
    double prev = learning_rate(cfg, cfg.warmup_epochs);
    for (double e = cfg.warmup_epochs + 1; e <= cfg.epochs; e += 1.0) {
        const double lr = learning_rate(cfg, e);
        CHECK(lr <= prev);
        prev = lr;
    }
    cfg.warmup_epochs = cfg.epochs;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("train_eps: deterministic and the loss falls early") {
    Rng data(13, 0);
    std::vector<Tensor> normals;
    for (int i = 0; i < 512; ++i) normals.push_back(random_latent(data, 8, 4, 4));
    MlpArch arch;
    arch.latent_shape = {8, 4, 4};
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.warmup_epochs = 1;
    cfg.seed = 4;
    const auto a = train_eps(normals, sched(), arch, cfg);
    const auto b = train_eps(normals, sched(), arch, cfg);
    CHECK(a.epoch_losses == b.epoch_losses);
    CHECK(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));

    REQUIRE(a.epoch_losses.size() == 10);
    int upward = 0;
    for (std::size_t e = 1; e < a.epoch_losses.size(); ++e) {
        if (a.epoch_losses[e] > a.epoch_losses[e - 1]) {
            ++upward;
            CHECK(a.epoch_losses[e] <= 1.05 * a.epoch_losses[e - 1]);
        }
    }
    CHECK(upward <= 1);
    CHECK(a.epoch_losses.back() < a.epoch_losses.front());
}

TEST_CASE("train_eps: non-finite data fails naming the epoch") {
    std::vector<Tensor> normals(4, Tensor::latent(2, 2, 2, 1.0));
    normals[2][0] = std::numeric_limits<double>::infinity();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.warmup_epochs = 0;
    try {
        train_eps(normals, sched(), tiny_arch(), cfg);
        FAIL("expected NumericFailure");
    } catch (const NumericFailure& e) {
        CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
}

TEST_CASE("model file roundtrip and checksum") {
    Rng r(14, 0);
    auto m = MlpEpsModel::initialized(tiny_arch(), 1000, r);
    m.randomize_all(r, 0.3);
    auto bytes = encode_model(sched(), m);
    const auto back = decode_model(bytes);
    const auto q = quantize_params(m);
    CHECK(std::equal(q.params().begin(), q.params().end(), back.model.params().begin()));
    CHECK(back.schedule.alpha_bar(999) == sched().alpha_bar(999));
    CHECK(back.model.arch().latent_shape == m.arch().latent_shape);

    auto corrupt = bytes;
    corrupt[100] ^= 0x01;
    CHECK_THROWS_AS(decode_model(corrupt), FormatError);
    corrupt = bytes;
    corrupt[0] = 'X';
    try {
        decode_model(corrupt);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    bytes.pop_back();
    CHECK_THROWS_AS(decode_model(bytes), FormatError);

    const auto path = std::filesystem::temp_directory_path() / "invad_model_roundtrip.ivad";
    save_model(path, sched(), m);
    CHECK(load_model(path).model.param_count() == m.param_count());
    std::filesystem::remove(path);
}
