#include <doctest.h>

#include <cmath>
#include <random>

#include "cellscout/bench.hpp"
#include "cellscout/error.hpp"
#include "oracles.hpp"

using namespace cellscout;

namespace {

const std::vector<double> kFixture = {0, 0, 0, 1, 10, 0, 10, 1};
const std::vector<std::size_t> kFixtureLabels = {0, 0, 1, 1};

std::vector<double> rigid_motion(const std::vector<double>& pts, double angle, double tx, double ty) {
    std::vector<double> out(pts.size());
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::size_t i = 0; i < pts.size() / 2; ++i) {
        out[2 * i] = c * pts[2 * i] - s * pts[2 * i + 1] + tx;
        out[2 * i + 1] = s * pts[2 * i] + c * pts[2 * i + 1] + ty;
    }
    return out;
}

}  // namespace

TEST_CASE("cluster indices on the four-point fixture") {
    CHECK(std::abs(chi({kFixture, 2}, kFixtureLabels) - 200.0) < 1e-9);
    CHECK(std::abs(dbi({kFixture, 2}, kFixtureLabels) - 0.1) < 1e-9);
    CHECK(std::abs(dunn({kFixture, 2}, kFixtureLabels) - 10.0) < 1e-9);
}

TEST_CASE("duplicating every point keeps DBI and Dunn") {
    std::vector<double> pts = kFixture;
    pts.insert(pts.end(), kFixture.begin(), kFixture.end());
    std::vector<std::size_t> labels = kFixtureLabels;
    labels.insert(labels.end(), kFixtureLabels.begin(), kFixtureLabels.end());
    CHECK(dbi({pts, 2}, labels) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(dunn({pts, 2}, labels) == doctest::Approx(10.0).epsilon(1e-12));
    // BSS and WSS double, n - k grows from 2 to 6.
    CHECK(chi({pts, 2}, labels) == doctest::Approx(600.0).epsilon(1e-12));
}

TEST_CASE("degenerate clusters") {
    CHECK_THROWS_WITH_AS(dunn({std::vector<double>{0, 0, 1, 1}, 2}, {0, 1}), doctest::Contains("DegenerateClusters"),
                         Error);
    CHECK_THROWS_WITH_AS(chi({kFixture, 2}, {0, 0, 0, 0}), doctest::Contains("DegenerateClusters"), Error);
}

TEST_CASE("knn accuracy matches brute force") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 8 + rng() % 43;
        std::vector<double> pts(2 * m);
        for (double& x : pts) x = u(rng);
        std::vector<std::size_t> labels(m);
        for (std::size_t i = 0; i < m; ++i) labels[i] = rng() % 3;
        labels[0] = 0;
        labels[1] = 1;
        for (std::size_t k : {1u, 3u, 5u}) {
            CHECK(knn_clustering_accuracy({pts, 2}, labels, k) == oracle::knn_accuracy(pts, labels, k));
        }
    }
}

TEST_CASE("knn on separated blobs and random labels") {
    auto data = generate_synthetic({2, 50, 10, 3, 6.0, 0.5, 3});
    const auto pts = rigid_motion(kFixture, 0, 0, 0);
    CHECK(knn_clustering_accuracy({pts, 2}, kFixtureLabels, 1) == 1.0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> cloud(2000);
    for (double& x : cloud) x = u(rng);
    std::vector<std::size_t> labels(1000);
    for (auto& l : labels) l = rng() % 2;
    CHECK(std::abs(knn_clustering_accuracy({cloud, 2}, labels) - 0.5) < 0.1);
    CHECK_THROWS_WITH_AS(knn_clustering_accuracy({kFixture, 2}, kFixtureLabels, 4), doctest::Contains("TooFewPoints"),
                         Error);
}

TEST_CASE("linear classifier") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0, 0.3);
    std::vector<double> pts;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 100; ++i) {
        const std::size_t c = i % 3;
        const double cx[] = {0.0, 4.0, 2.0}, cy[] = {0.0, 0.0, 4.0};
        pts.push_back(cx[c] + n(rng));
        pts.push_back(cy[c] + n(rng));
        labels.push_back(c);
    }
    CHECK(linear_classification_accuracy({pts, 2}, labels, 1) == 1.0);
    CHECK(linear_classification_accuracy({pts, 2}, labels, 9) == linear_classification_accuracy({pts, 2}, labels, 9));

    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> cloud(2000);
    for (double& x : cloud) x = u(rng);
    std::vector<std::size_t> random(1000);
    for (auto& l : random) l = u(rng) < 0.7 ? 0 : 1;
    CHECK(std::abs(linear_classification_accuracy({cloud, 2}, random, 2) - 0.7) < 0.1);

    CHECK_THROWS_WITH_AS(linear_classification_accuracy({kFixture, 2}, {0, 0, 0, 1}, 1, 0.25),
                         doctest::Contains("MissingClassInTrain"), Error);
}

TEST_CASE("metrics are invariant under rigid motions") {
    auto data = generate_synthetic({3, 40, 12, 3, 3.0, 1.0, 5});
    const auto emb = embed_with_pca(normalize(data.matrix));
    const std::vector<double> base(emb.coords.begin(), emb.coords.end());
    const auto ref = evaluate_embedding(emb, data.labels, "pca");
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto moved = Embedding2D::from_coords(rigid_motion(base, 3.2 * u(rng), 50 * u(rng), 50 * u(rng)),
                                                    EmbeddingSource::pca);
        const auto r = evaluate_embedding(moved, data.labels, "pca");
        CHECK(std::abs(r.chi - ref.chi) < 1e-9 * std::max(1.0, ref.chi));
        CHECK(std::abs(r.dbi - ref.dbi) < 1e-9);
        CHECK(std::abs(r.dunn - ref.dunn) < 1e-9);
        CHECK(r.clustering_acc == ref.clustering_acc);
        CHECK(r.classification_acc == ref.classification_acc);
    }
}

TEST_CASE("synthetic generator") {
    SyntheticSpec spec{3, 50, 30, 4, 3.0, 1.0, 11};
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.matrix.n_cells() == 150);
    CHECK(a.labels[49] == 0);
    CHECK(a.labels[50] == 1);
    CHECK(a.labels[149] == 2);
    CHECK(std::vector<double>(a.matrix.values().begin(), a.matrix.values().end()) ==
          std::vector<double>(b.matrix.values().begin(), b.matrix.values().end()));
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t g : a.markers[s]) {
            double in = 0, out = 0;
            for (std::size_t p = 0; p < 150; ++p) (a.labels[p] == s ? in : out) += a.matrix.at(p, g);
            CHECK(in / 50.0 > out / 100.0);
        }
    }
    for (double v : a.matrix.values()) CHECK(v >= 0.0);

    spec.noise_sd = 0.0;
    const auto flat = generate_synthetic(spec);
    for (std::size_t q = 0; q < 30; ++q) CHECK(flat.matrix.at(0, q) == flat.matrix.at(49, q));

    spec.markers_per_state = 11;
    CHECK_THROWS_WITH_AS(generate_synthetic(spec), doctest::Contains("InvalidSpec"), Error);
}

TEST_CASE("benchmark is deterministic and separates trivial data") {
    auto data = generate_synthetic({2, 60, 20, 5, 6.0, 0.5, 2});
    const auto x = normalize(data.matrix);
    const auto pca = embed_with_pca(x);
    const auto a = run_benchmark(x, data.labels, pca, 3);
    const auto b = run_benchmark(x, data.labels, pca, 3);
    CHECK(format_benchmark_csv(a) == format_benchmark_csv(b));
    CHECK(a.pca.clustering_acc == 1.0);
}
