#include <doctest.h>

#include <random>

#include "cellscout/error.hpp"
#include "cellscout/verification.hpp"
#include "oracles.hpp"

using namespace cellscout;

TEST_CASE("entropy examples") {
    CHECK(entropy(std::vector<int>{1, 1, 1, 1}) == 0.0);
    CHECK(entropy(std::vector<int>{0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(entropy(std::vector<int>{0, 0, 0, 1}) == doctest::Approx(0.8113).epsilon(1e-4));
    CHECK_THROWS_WITH_AS(entropy(std::vector<int>{}), doctest::Contains("EmptySet"), Error);
}

TEST_CASE("information gain examples") {
    const std::vector<double> v = {1, 2, 3, 10, 11, 12};
    const std::vector<int> y = {0, 0, 0, 1, 1, 1};
    CHECK(information_gain(v, y, 6.5) == doctest::Approx(1.0));
    CHECK(information_gain(v, y, 0.0) == 0.0);
    CHECK(information_gain(v, std::vector<int>(6, 1), 6.5) == 0.0);
    CHECK_THROWS_WITH_AS(information_gain(v, std::vector<int>{0, 1}, 1.0), doctest::Contains("LengthMismatch"), Error);
}

TEST_CASE("best threshold examples") {
    const auto a = best_threshold(std::vector<double>{1, 2, 3, 10, 11, 12}, std::vector<int>{0, 0, 0, 1, 1, 1});
    CHECK(a.threshold == 6.5);
    CHECK(a.ig == doctest::Approx(1.0));
    CHECK(a.direction == Direction::above);

    const auto tie = best_threshold(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 1, 0, 1});
    CHECK(tie.threshold == 1.5);
    CHECK(tie.ig == doctest::Approx(0.3113).epsilon(1e-4));

    const auto below = best_threshold(std::vector<double>{1, 2, 10, 11}, std::vector<int>{1, 1, 0, 0});
    CHECK(below.direction == Direction::below);

    CHECK_THROWS_WITH_AS(best_threshold(std::vector<double>{5, 5, 5}, std::vector<int>{0, 1, 0}),
                         doctest::Contains("DegenerateValues"), Error);
    CHECK_THROWS_WITH_AS(best_threshold(std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 1}),
                         doctest::Contains("SingleClass"), Error);
}

TEST_CASE("best threshold equals the exhaustive midpoint scan") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 99;
        std::vector<double> v(n);
        std::vector<int> y(n);
        // Small integer range forces many repeated values.
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = static_cast<double>(rng() % 15);
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        if (v[0] == v[1]) v[1] += 1;
        const auto got = best_threshold(v, y);
        const auto want = oracle::exhaustive_threshold(v, y);
        CHECK(got.threshold == want.threshold);
        CHECK(got.ig == doctest::Approx(want.ig).epsilon(1e-12));
    }
}

TEST_CASE("information gain is a rank statistic") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(30), w(30);
        std::vector<int> y(30);
        for (std::size_t i = 0; i < 30; ++i) {
            v[i] = n(rng);
            w[i] = std::exp(3 * v[i]) + 2;
            y[i] = static_cast<int>(i % 2);
        }
        CHECK(best_threshold(v, y).ig == doctest::Approx(best_threshold(w, y).ig).epsilon(1e-12));
    }
}

TEST_CASE("f1 and accuracy from the confusion table") {
    const Confusion c{2, 1, 1, 2};
    CHECK(f1_score(c) == doctest::Approx(2.0 / 3.0));
    CHECK(accuracy(c) == doctest::Approx(2.0 / 3.0));
    CHECK(f1_score(Confusion{0, 0, 0, 5}) == 0.0);
}

namespace {

ExpressionMatrix verification_matrix() {
    // g0 separates cells 0-2 (high) from 3-5 (low); g1 is noise; g2 is constant.
    return fixtures::matrix(6, 3, {9, 1, 4, 8, 5, 4, 7, 2, 4, 1, 6, 4, 2, 3, 4, 0, 4, 4});
}

}  // namespace

TEST_CASE("perfect separating gene scores one") {
    const auto x = verification_matrix();
    const auto r = evaluate_biomarker({"g0"}, {0, 1, 2}, {3, 4, 5}, x);
    CHECK(r.f1 == 1.0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.per_gene[0].direction == Direction::above);
    CHECK(r.per_gene[0].threshold == 4.5);
    const auto& c = r.confusion;
    CHECK(r.accuracy == doctest::Approx(double(c.tp + c.tn) / double(c.tp + c.fp + c.fn + c.tn)));
}

TEST_CASE("biomarker errors") {
    const auto x = verification_matrix();
    CHECK_THROWS_WITH_AS(evaluate_biomarker({"g0"}, {0, 1}, {1, 2}, x), doctest::Contains("OverlappingRegions"), Error);
    CHECK_THROWS_WITH_AS(evaluate_biomarker({"zz"}, {0}, {1}, x), doctest::Contains("UnknownGene"), Error);
    CHECK_THROWS_WITH_AS(evaluate_biomarker({}, {0}, {1}, x), doctest::Contains("EmptyBiomarker"), Error);
    CHECK_THROWS_WITH_AS(evaluate_biomarker({"g0"}, {}, {1}, x), doctest::Contains("EmptyRegion"), Error);
}

TEST_CASE("constant gene accepts every cell") {
    const auto x = verification_matrix();
    const auto alone = evaluate_biomarker({"g0"}, {0, 1, 2}, {3, 4, 5}, x);
    const auto with_flat = evaluate_biomarker({"g0", "g2"}, {0, 1, 2}, {3, 4, 5}, x);
    CHECK(with_flat.confusion.tp == alone.confusion.tp);
    CHECK(with_flat.per_gene[1].information_gain == 0.0);
}

TEST_CASE("refinement") {
    const auto x = verification_matrix();
    const auto base = evaluate_biomarker({"g0"}, {0, 1, 2}, {3, 4, 5}, x);
    const auto b = biomarker_of(base);
    const auto added = refine_biomarker(b, {"g1"}, {}, {0, 1, 2}, {3, 4, 5}, x);
    CHECK(added.per_gene.size() == 2);
    const auto back = refine_biomarker(biomarker_of(added), {}, {"g1"}, {0, 1, 2}, {3, 4, 5}, x);
    CHECK(to_json(back) == to_json(base));
    CHECK_THROWS_WITH_AS(refine_biomarker(b, {}, {"g0"}, {0}, {3}, x), doctest::Contains("EmptyBiomarker"), Error);
}

TEST_CASE("adding a gene never grows the predicted-positive set") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 10);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(20 * 4);
        for (double& e : v) e = u(rng);
        const auto x = fixtures::matrix(20, 4, v);
        const std::vector<std::size_t> pos = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        const std::vector<std::size_t> neg = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
        const auto one = evaluate_biomarker({"g0"}, pos, neg, x);
        const auto two = evaluate_biomarker({"g0", "g1"}, pos, neg, x);
        CHECK(two.confusion.tp + two.confusion.fp <= one.confusion.tp + one.confusion.fp);
        // The conjunction predicts positive only where both per-gene predicates hold.
        for (std::size_t p = 0; p < 20; ++p) {
            const bool in_two = two.per_gene[0].holds(x.at(p, 0)) && two.per_gene[1].holds(x.at(p, 1));
            if (in_two) CHECK(one.per_gene[0].holds(x.at(p, 0)));
        }
    }
}

TEST_CASE("metrics are invariant under a joint permutation of cells") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 10);
    std::vector<double> v(16 * 2);
    for (double& e : v) e = u(rng);
    const auto x = fixtures::matrix(16, 2, v);
    const auto a = evaluate_biomarker({"g0", "g1"}, {0, 1, 2, 3, 4, 5, 6, 7}, {8, 9, 10, 11, 12, 13, 14, 15}, x);
    const auto b = evaluate_biomarker({"g0", "g1"}, {7, 5, 3, 1, 6, 4, 2, 0}, {15, 8, 14, 9, 13, 10, 12, 11}, x);
    CHECK(a.f1 == b.f1);
    CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("verification result json round-trips") {
    const auto x = verification_matrix();
    const auto r = evaluate_biomarker({"g0", "g1"}, {0, 1, 2}, {3, 4, 5}, x);
    CHECK(to_json(verification_result_from_json(to_json(r))) == to_json(r));
}
