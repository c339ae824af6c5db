#include <doctest.h>

#include <random>

#include "cellscout/analytics.hpp"
#include "cellscout/error.hpp"
#include "oracles.hpp"

using namespace cellscout;

namespace {

std::vector<AssociationRelationship> assoc_from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t k = rows.front().size();
    std::vector<AssociationRelationship> out(k);
    for (std::size_t u = 0; u < k; ++u) {
        out[u].index = u;
        for (const auto& r : rows) out[u].relevance.push_back(r[u]);
    }
    return out;
}

}  // namespace

TEST_CASE("dominant labels take the argmax with ties to the lowest index") {
    const auto a = assoc_from_rows({{0.7, 0.3}, {0.5, 0.5}, {0.2, 0.8}});
    CHECK(dominant_labels(a) == std::vector<std::size_t>{0, 0, 1});
    const auto single = assoc_from_rows({{1.0}, {1.0}});
    CHECK(dominant_labels(single) == std::vector<std::size_t>{0, 0});
}

TEST_CASE("dbscan matches the brute-force reference") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + rng() % 46;
        std::vector<double> pts(2 * n);
        for (double& x : pts) x = u(rng);
        const double eps = 0.05 + 0.25 * u(rng);
        const std::size_t min_pts = 2 + rng() % 6;
        CHECK(dbscan({pts, 2}, eps, min_pts) == oracle::dbscan(pts, eps, min_pts));
    }
}

TEST_CASE("two blobs with distinct labels give two pure regions") {
    std::vector<double> pts;
    std::vector<std::size_t> labels;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 0.05);
    for (int i = 0; i < 10; ++i) {
        pts.push_back(n(rng));
        pts.push_back(n(rng));
        labels.push_back(0);
    }
    for (int i = 0; i < 10; ++i) {
        pts.push_back(5 + n(rng));
        pts.push_back(5 + n(rng));
        labels.push_back(1);
    }
    const auto regions = detect_pure_regions({pts, 2}, labels, 0.5, 3);
    REQUIRE(regions.size() == 2);
    CHECK(regions[0].association_index == 0);
    CHECK(regions[1].association_index == 1);
    CHECK(regions[0].cell_indices.size() == 10);
    CHECK(regions[1].centroid[0] == doctest::Approx(5.0).epsilon(0.05));
    for (const auto& r : regions)
        for (std::size_t p : r.cell_indices) CHECK(labels[p] == r.association_index);

    CHECK(detect_pure_regions({pts, 2}, labels, 0.5, 11).empty());
}

TEST_CASE("scattered mixed labels with a small radius give no regions") {
    std::vector<double> pts;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 30; ++i) {
        pts.push_back(i);
        pts.push_back(0);
        labels.push_back(static_cast<std::size_t>(i % 3));
    }
    CHECK(detect_pure_regions({pts, 2}, labels, 0.5, 2).empty());
    CHECK_THROWS_WITH_AS(detect_pure_regions({pts, 2}, labels, 0.0, 2), doctest::Contains("InvalidArgument"), Error);
}

TEST_CASE("upper quartile interpolates linearly") {
    CHECK(upper_quartile({1, 2, 3, 4, 5}) == 4.0);
    CHECK(upper_quartile({1, 2, 3, 4}) == doctest::Approx(3.25));
    CHECK(upper_quartile({7}) == 7.0);
}

TEST_CASE("relevance profile") {
    const auto a = assoc_from_rows({{0.2, 0.8}, {0.6, 0.4}, {0.5, 0.5}, {0.9, 0.1}});
    const auto one = relevance_profile({1}, a);
    CHECK(one.mean_relevance == std::vector<double>{0.6, 0.4});
    const double q3 = upper_quartile({0.2, 0.6, 0.5, 0.9, 0.8, 0.4, 0.5, 0.1});
    CHECK(one.q3 == q3);
    CHECK(one.rings[0] == doctest::Approx(0.6 / q3));

    // Union of disjoint regions is the size-weighted mean of their profiles.
    const auto left = relevance_profile({0, 1}, a);
    const auto right = relevance_profile({2}, a);
    const auto both = relevance_profile({0, 1, 2}, a);
    for (std::size_t u = 0; u < 2; ++u) {
        CHECK(both.mean_relevance[u] ==
              doctest::Approx((2 * left.mean_relevance[u] + right.mean_relevance[u]) / 3.0).epsilon(1e-12));
    }
    CHECK_THROWS_WITH_AS(relevance_profile({}, a), doctest::Contains("EmptyRegion"), Error);
}

TEST_CASE("ring counts equal mean over q3") {
    // 8 values with q3 exactly 0.5: a region at q3 draws one ring, at 2*q3 two.
    const auto a = assoc_from_rows({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {1.0, 0.0}});
    const double q3 = relevance_profile({0}, a).q3;
    REQUIRE(q3 == 0.5);
    CHECK(relevance_profile({0}, a).rings[0] == 1.0);
    CHECK(relevance_profile({3}, a).rings[0] == 2.0);
}

TEST_CASE("gene distribution bins over the dataset range") {
    const auto x = fixtures::matrix(6, 1, {0, 0, 0, 5, 10, 10});
    const auto h = gene_distribution({0, 1, 2, 3, 4, 5}, "g0", x, 5);
    CHECK(h.bin_edges == std::vector<double>{0, 2, 4, 6, 8, 10});
    const std::vector<double> expected = {1, 0, 1.0 / 3, 0, 2.0 / 3};
    for (std::size_t i = 0; i < 5; ++i) CHECK(h.densities[i] == doctest::Approx(expected[i]));

    const auto sub = gene_distribution({3}, "g0", x, 5);
    CHECK(sub.bin_edges == h.bin_edges);
    CHECK(sub.densities == std::vector<double>{0, 0, 1, 0, 0});

    const auto flat = fixtures::matrix(3, 1, {4, 4, 4});
    const auto f = gene_distribution({0, 1, 2}, "g0", flat, 4);
    CHECK(f.densities == std::vector<double>{1, 0, 0, 0});

    CHECK_THROWS_WITH_AS(gene_distribution({0}, "nope", x), doctest::Contains("UnknownGene"), Error);
    CHECK_THROWS_WITH_AS(gene_distribution({}, "g0", x), doctest::Contains("EmptyRegion"), Error);
}

TEST_CASE("top genes") {
    AssociationRelationship a;
    a.importance = {0.1, 1.0, 0.5, 0.9};
    const std::vector<std::string> names = {"gene0", "gene1", "gene2", "gene3"};
    const auto top = top_genes(a, names, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].first == "gene1");
    CHECK(top[1].first == "gene3");
    CHECK(top_genes(a, names, 10).size() == 4);

    a.importance = {1, 1, 1};
    const auto tied = top_genes(a, {"c", "a", "b"}, 3);
    CHECK(tied[0].first == "a");
    CHECK(tied[1].first == "b");
    CHECK(tied[2].first == "c");
}

TEST_CASE("regions validate and persist by cell id") {
    const auto x = fixtures::random_matrix(5, 2, 1);
    const auto r = make_region("r1", "sel", {3, 1}, RegionOrigin::lasso, 5);
    CHECK(r.cell_indices == std::vector<std::size_t>{1, 3});
    const auto back = region_from_json(to_json(r, x.cell_ids()), x);
    CHECK(back.cell_indices == r.cell_indices);
    CHECK(back.origin == RegionOrigin::lasso);
    CHECK(to_json(r, x.cell_ids())["cell_ids"] == nlohmann::json{"c1", "c3"});
    CHECK_THROWS_WITH_AS(make_region("r", "", {}, RegionOrigin::manual, 5), doctest::Contains("EmptyRegion"), Error);
    CHECK_THROWS_WITH_AS(make_region("r", "", {5}, RegionOrigin::manual, 5), doctest::Contains("IndexOutOfRange"), Error);
    CHECK_THROWS_WITH_AS(make_region("r", "", {1, 1}, RegionOrigin::manual, 5), doctest::Contains("DuplicateCell"), Error);
}
