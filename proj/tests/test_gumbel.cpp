#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cellscout/error.hpp"
#include "cellscout/gumbel.hpp"

using namespace cellscout;

TEST_CASE("softmax of [1,2] without noise") {
    const std::vector<double> logits = {1.0, 2.0};
    const auto p = noisy_softmax(logits, {}, 1.0);
    CHECK(p[0] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("low temperature approaches the argmax") {
    const std::vector<double> logits = {10.0, 0.0, 0.0};
    const auto p = noisy_softmax(logits, {}, 0.01);
    CHECK(p[0] > 0.999);
}

TEST_CASE("samples are positive and sum to one") {
    Rng rng(3);
    const std::vector<double> logits = {0.3, -1.2, 2.0, 0.0};
    for (int i = 0; i < 200; ++i) {
        const auto p = gumbel_softmax(logits, 0.5, rng);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        for (double x : p) CHECK(x > 0.0);
    }
}

TEST_CASE("uniform logits give uniform argmax frequencies") {
    Rng rng(11);
    const std::vector<double> logits = {0.0, 0.0, 0.0};
    std::array<int, 3> counts{};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto p = gumbel_softmax(logits, 0.7, rng);
        counts[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())]++;
    }
    for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.02);
}

TEST_CASE("gumbel argmax frequencies follow softmax of the logits") {
    Rng rng(12);
    const std::vector<double> logits = {std::log(0.5), std::log(0.3), std::log(0.2)};
    std::array<int, 3> counts{};
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto p = gumbel_softmax(logits, 1.0, rng);
        counts[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())]++;
    }
    CHECK(std::abs(counts[0] / double(n) - 0.5) < 0.015);
    CHECK(std::abs(counts[1] / double(n) - 0.3) < 0.015);
    CHECK(std::abs(counts[2] / double(n) - 0.2) < 0.015);
}

TEST_CASE("open uniform stays inside (0,1)") {
    Rng rng(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = open_uniform(rng);
        CHECK_UNARY(u > 0.0 && u < 1.0);
    }
}

TEST_CASE("invalid inputs") {
    Rng rng(1);
    const std::vector<double> bad = {0.0, std::nan("")};
    CHECK_THROWS_WITH_AS(gumbel_softmax(bad, 1.0, rng), doctest::Contains("NonFiniteLogits"), Error);
    const std::vector<double> ok = {0.0, 1.0};
    CHECK_THROWS_WITH_AS(gumbel_softmax(ok, 0.0, rng), doctest::Contains("InvalidTemperature"), Error);
}

TEST_CASE("sigmoid is stable at the extremes") {
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(0.0) == 0.5);
}
