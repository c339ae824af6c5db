#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cellscout/analytics.hpp"
#include "cellscout/bench.hpp"
#include "cellscout/error.hpp"
#include "cellscout/miner.hpp"
#include "oracles.hpp"

using namespace cellscout;

namespace {

struct Small {
    ExpressionMatrix matrix;
    MinerConfig config;
};

Small small_problem(std::size_t epochs = 30) {
    SyntheticSpec spec;
    spec.n_states = 2;
    spec.cells_per_state = 40;
    spec.n_genes = 20;
    spec.markers_per_state = 4;
    auto data = generate_synthetic(spec);
    MinerConfig c;
    c.k = 2;
    c.epochs = epochs;
    c.batch_size = 32;
    c.genes_per_expert = 4;
    c.latent_dim = 8;
    c.hidden_dim = 16;
    return {normalize(data.matrix), c};
}

}  // namespace

TEST_CASE("informativeness examples") {
    CHECK(informativeness(std::vector<std::size_t>{0, 0, 1, 1}, 2) == doctest::Approx(1.0));
    CHECK(informativeness(std::vector<std::size_t>{0, 0, 0, 0}, 2) == 0.0);
    CHECK(informativeness(std::vector<std::size_t>{0, 0, 0, 1}, 2) == doctest::Approx(0.8113).epsilon(1e-4));
}

TEST_CASE("training lowers the loss and is deterministic") {
    auto [x, c] = small_problem();
    const auto a = train(x, c);
    const auto b = train(x, c);
    REQUIRE(a.history.size() == c.epochs);
    // Compare the deterministic full-data objective before and after training.
    MoEModel init(x.n_genes(), c);
    Rng rng(c.seed);
    init.initialize(rng);
    LossBreakdown before, after;
    eval_loss_gradient(init, x, c, &before);
    eval_loss_gradient(a.model, x, c, &after);
    CHECK(after.total < before.total);
    CHECK(std::vector<double>(a.model.params().begin(), a.model.params().end()) ==
          std::vector<double>(b.model.params().begin(), b.model.params().end()));
    CHECK(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("associations are a distribution over experts per cell") {
    auto [x, c] = small_problem(5);
    const auto t = train(x, c);
    REQUIRE(t.associations.size() == c.k);
    for (std::size_t p = 0; p < x.n_cells(); ++p) {
        double s = 0;
        for (const auto& a : t.associations) s += a.relevance[p];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (const auto& a : t.associations) {
        CHECK(*std::max_element(a.importance.begin(), a.importance.end()) == doctest::Approx(1.0));
    }
    CHECK(t.embedding.size() == x.n_cells());
}

TEST_CASE("uniform gene logits give uniform importance") {
    const auto x = fixtures::random_matrix(8, 5, 1);
    MinerConfig c;
    c.k = 2;
    MoEModel model(5, c);
    Rng rng(1);
    model.initialize(rng);
    std::vector<double> params(model.params().begin(), model.params().end());
    const auto& g = model.layout().find("expert0.gene_logits");
    for (std::size_t q = 0; q < 5; ++q) params[g.offset + q] = 0.3;
    model.set_params(params);
    const auto assoc = extract_associations(model, x);
    for (double imp : assoc[0].importance) CHECK(imp == 1.0);
}

TEST_CASE("train validates its input") {
    auto [x, c] = small_problem(1);
    const auto raw = fixtures::matrix(10, 3, std::vector<double>(30, 1.0), false);
    CHECK_THROWS_WITH_AS(train(raw, c), doctest::Contains("NotNormalized"), Error);
    CHECK_THROWS_WITH_AS(train(fixtures::random_matrix(4, 5, 1), c), doctest::Contains("TooFewCells"), Error);
    c.k = 0;
    CHECK_THROWS_WITH_AS(train(x, c), doctest::Contains("InvalidConfig"), Error);
}

TEST_CASE("model json round-trips") {
    auto [x, c] = small_problem(3);
    const auto t = train(x, c);
    const auto j = to_json(t);
    const auto back = trained_model_from_json(j);
    CHECK(to_json(back).dump() == j.dump());
    auto bad = j;
    bad["version"] = "other/9";
    CHECK_THROWS_WITH_AS(trained_model_from_json(bad), doctest::Contains("UnsupportedVersion"), Error);
}

TEST_CASE("config json keeps defaults for missing fields") {
    const auto c = config_from_json(nlohmann::json{{"k", 5}, {"epochs", 12}});
    CHECK(c.k == 5);
    CHECK(c.epochs == 12);
    CHECK(c.batch_size == MinerConfig{}.batch_size);
    CHECK(std::isnan(c.lambda));
    CHECK(c.effective_lambda() == doctest::Approx(std::log(32.0)));
}

TEST_CASE("select_k with one candidate picks it") {
    auto [x, c] = small_problem(5);
    const auto report = select_k(x, c, {2});
    CHECK(report.chosen_k == 2);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].informativeness.has_value());
    const auto table = format_sweep_table(report);
    CHECK(table.find("chosen k: 2") != std::string::npos);
    CHECK_THROWS_WITH_AS(select_k(x, c, {3, 2}), doctest::Contains("InvalidArgument"), Error);
    CHECK_THROWS_WITH_AS(select_k(x, c, {1}), doctest::Contains("InvalidArgument"), Error);
}

TEST_CASE("dominant labels are permutation-equivariant") {
    auto [x, c] = small_problem(10);
    const auto t = train(x, c);
    const auto labels = dominant_labels(t.associations);
    std::vector<std::size_t> perm(x.n_cells());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(3);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> v;
    std::vector<std::string> ids;
    for (std::size_t p : perm) {
        v.insert(v.end(), x.row(p).begin(), x.row(p).end());
        ids.push_back(x.cell_ids()[p]);
    }
    const ExpressionMatrix shuffled(v, ids, x.gene_names(), true);
    const auto relabeled = dominant_labels(extract_associations(t.model, shuffled));
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(relabeled[i] == labels[perm[i]]);
}
