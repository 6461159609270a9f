#include <doctest.h>

#include <cmath>

#include "invad/error.hpp"
#include "invad/rng.hpp"
#include "invad/scoring.hpp"

using namespace invad;

namespace {

Tensor random_latent(Rng& r, std::size_t c, std::size_t h, std::size_t w) {
    Tensor t = Tensor::latent(c, h, w);
    for (double& v : t.values()) v = r.gaussian();
    return t;
}

// log N(v; 0, I) for one pixel, written directly from the density.
double gaussian_log_density(const std::vector<double>& v) {
    double log_p = 0.0;
    for (double x : v) log_p += std::log(std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI));
    return log_p;
}

}  // namespace

TEST_CASE("norm map") {
    CHECK(norm_map(Tensor::latent(3, 2, 2)) == Tensor::map2d(2, 2));
    Tensor z = Tensor::latent(2, 1, 1);
    z.at(0, 0, 0) = 3;
    z.at(1, 0, 0) = 4;
    CHECK(norm_map(z).at(0, 0) == 5.0);

    Rng r(1, 0);
    const Tensor big = random_latent(r, 3, 317, 317);
    const Tensor m = norm_map(big);
    const double n = static_cast<double>(m.size());
    // chi with 3 degrees of freedom: mean sqrt(2) Gamma(2) / Gamma(1.5), variance 3 - mean^2
    const double chi_mean = std::sqrt(2.0) * std::tgamma(2.0) / std::tgamma(1.5);
    CHECK(std::abs(m.sum() / n - chi_mean) < 4.0 * std::sqrt((3.0 - chi_mean * chi_mean) / n));
}

TEST_CASE("norm map scales with |a|") {
    Rng r(2, 0);
    const Tensor z = random_latent(r, 4, 3, 3);
    const Tensor a = norm_map(scaled(-2.0, z));
    const Tensor b = norm_map(z);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(2.0 * b[i]).epsilon(1e-15));
    CHECK(image_score(a, nullptr, ScoreMode::Diff) == doctest::Approx(2.0 * image_score(b, nullptr, ScoreMode::Diff)));
    CHECK(image_score(a, nullptr, ScoreMode::Combined) ==
          doctest::Approx(2.0 * image_score(b, nullptr, ScoreMode::Combined)));
}

TEST_CASE("nll map") {
    const double ln2pi = std::log(2.0 * M_PI);
    CHECK(nll_map(Tensor::latent(4, 1, 1))[0] == doctest::Approx(2.0 * ln2pi).epsilon(1e-15));
    CHECK(nll_map(Tensor::latent(1, 1, 1, 1.0))[0] == doctest::Approx(0.5 + 0.5 * ln2pi).epsilon(1e-15));

    Rng r(3, 0);
    const Tensor z = random_latent(r, 5, 4, 3);
    const Tensor m = nll_map(z);
    double total = 0.0;
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 3; ++x) {
            std::vector<double> px;
            for (std::size_t c = 0; c < 5; ++c) px.push_back(z.at(c, y, x));
            CHECK(std::abs(m.at(y, x) + gaussian_log_density(px)) < 1e-12);
            total -= gaussian_log_density(px);
        }
    }
    CHECK(std::abs(image_score(norm_map(z), &z, ScoreMode::Nll) - total) < 1e-9);
}

TEST_CASE("image scores") {
    const Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(image_score(a, nullptr, ScoreMode::Combined) == 13.0);
    CHECK(image_score(a, nullptr, ScoreMode::Diff) == 3.0);
    CHECK(image_score(Tensor::map2d(3, 3, 2.5), nullptr, ScoreMode::Diff) == 0.0);
    CHECK_THROWS_AS(image_score(a, nullptr, ScoreMode::Nll), InvalidArgument);
    CHECK_THROWS_AS(parse_score_mode("max"), InvalidArgument);
    for (auto m : {ScoreMode::Nll, ScoreMode::Diff, ScoreMode::Combined, ScoreMode::Recon, ScoreMode::Mahalanobis}) {
        CHECK(parse_score_mode(to_string(m)) == m);
    }
}

TEST_CASE("anomaly_result") {
    Rng r(4, 0);
    const Tensor z = random_latent(r, 3, 8, 8);

    const auto same = anomaly_result(z, 8, 8, ScoreMode::Combined);
    CHECK(same.map == same.low_map);

    const auto zero = anomaly_result(Tensor::latent(3, 8, 8), 29, 29, ScoreMode::Combined);
    CHECK(zero.score == 0.0);
    CHECK(zero.map == Tensor::map2d(29, 29));

    const auto res = anomaly_result(z, 29, 29, ScoreMode::Combined);
    CHECK(res.map.shape() == std::vector<std::size_t>{29, 29});
    CHECK(res.score == res.low_map.max() - res.low_map.min() + res.low_map.sum());
    const std::size_t low = res.low_map.argmax();
    const std::size_t high = res.map.argmax();
    CHECK(high / 29 == 4 * (low / 8));
    CHECK(high % 29 == 4 * (low % 8));

    const auto nll = anomaly_result(z, 29, 29, ScoreMode::Nll);
    CHECK(nll.low_map == nll_map(z));
    CHECK_THROWS_AS(anomaly_result(z, 7, 29, ScoreMode::Combined), InvalidArgument);
    CHECK_THROWS_AS(anomaly_result(z, 29, 29, ScoreMode::Recon), InvalidArgument);
}

TEST_CASE("anomaly_result: a hot pixel lands on its upsampled location") {
    for (auto [y, x] : {std::pair<std::size_t, std::size_t>{0, 0}, {3, 5}, {7, 7}}) {
        Tensor z = Tensor::latent(2, 8, 8);
        z.at(1, y, x) = 10.0;
        const auto res = anomaly_result(z, 29, 29, ScoreMode::Diff);
        CHECK(res.map.argmax() == (4 * y) * 29 + 4 * x);
    }
}

TEST_CASE("recon_score") {
    Rng r(5, 0);
    const Tensor z = random_latent(r, 3, 4, 4);
    const auto same = recon_score(z, z, 13, 13);
    CHECK(same.score == 0.0);

    Tensor bumped = z;
    bumped.at(2, 1, 3) += 2.0;
    const auto one = recon_score(z, bumped, 4, 4);
    CHECK(one.low_map.argmax() == 1 * 4 + 3);
    CHECK(one.score == doctest::Approx(4.0 / 3.0));

    const Tensor other = random_latent(r, 3, 4, 4);
    const auto res = recon_score(z, other, 13, 13);
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            double s = 0;
            for (std::size_t c = 0; c < 3; ++c) s += (z.at(c, y, x) - other.at(c, y, x)) * (z.at(c, y, x) - other.at(c, y, x));
            CHECK(std::abs(res.low_map.at(y, x) - s / 3.0) < 1e-12);
        }
    }
    CHECK(res.score == res.map.max());
    CHECK_THROWS_AS(recon_score(z, Tensor::latent(3, 4, 5), 13, 13), InvalidArgument);
}

TEST_CASE("mahalanobis baseline") {
    Rng r(6, 0);
    std::vector<Tensor> normals;
    for (int i = 0; i < 20; ++i) normals.push_back(random_latent(r, 3, 4, 4));
    const auto stats = fit_location_stats(normals);

    CHECK(mahalanobis_score(stats, stats.mean, 4, 4).low_map == Tensor::map2d(4, 4));

    const Tensor z = random_latent(r, 3, 4, 4);
    const auto res = mahalanobis_score(stats, z, 7, 7);
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            double expected = 0;
            for (std::size_t c = 0; c < 3; ++c) {
                double mean = 0, m2 = 0;
                for (const auto& n : normals) mean += n.at(c, y, x);
                mean /= 20.0;
                for (const auto& n : normals) m2 += (n.at(c, y, x) - mean) * (n.at(c, y, x) - mean);
                const double d = z.at(c, y, x) - mean;
                expected += d * d / (m2 / 19.0);
            }
            CHECK(std::abs(res.low_map.at(y, x) - expected) < 1e-9);
        }
    }
    CHECK(res.score == res.map.max());

    // Constant training features hit the floor; unit variance gives exactly one.
    std::vector<Tensor> flat(3, Tensor::latent(2, 1, 1, 1.0));
    flat[0].at(1, 0, 0) = -1.0;
    flat[2].at(1, 0, 0) = 0.0;
    flat[1].at(1, 0, 0) = 1.0;
    const auto fs = fit_location_stats(flat);
    CHECK(fs.floored == 1);
    CHECK(fs.variance.at(0, 0, 0) == LocationStats::kVarianceFloor);
    CHECK(fs.variance.at(1, 0, 0) == 1.0);
    Tensor probe = fs.mean;
    probe.at(1, 0, 0) += 1.0;
    CHECK(mahalanobis_score(fs, probe, 1, 1).score == 1.0);

    CHECK_THROWS_AS(fit_location_stats(std::vector<Tensor>(1, Tensor::latent(1, 1, 1))), InvalidArgument);
}
