#include <doctest.h>

#include <numeric>

#include "cellscout/error.hpp"
#include "cellscout/loss.hpp"
#include "cellscout/miner.hpp"
#include "cellscout/moe_model.hpp"
#include "oracles.hpp"

using namespace cellscout;

namespace {

MinerConfig tiny_config(std::size_t k = 3) {
    MinerConfig c;
    c.k = k;
    c.latent_dim = 4;
    c.hidden_dim = 6;
    c.genes_per_expert = 4;
    return c;
}

MoEModel tiny_model(std::size_t n, const MinerConfig& c, std::uint64_t seed) {
    MoEModel model(n, c);
    Rng rng(seed);
    model.initialize(rng);
    return model;
}

std::vector<std::size_t> all(std::size_t m) {
    std::vector<std::size_t> v(m);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace

TEST_CASE("gating rows sum to one in both modes") {
    const auto x = fixtures::random_matrix(25, 7, 1);
    const auto c = tiny_config();
    const auto model = tiny_model(7, c, 2);
    Rng rng(5);
    for (Mode mode : {Mode::eval, Mode::train}) {
        const auto out = model.forward(x, all(25), 0.5, mode, &rng);
        for (std::size_t p = 0; p < 25; ++p) {
            double s = 0;
            for (std::size_t u = 0; u < 3; ++u) s += out.gating_weights[p * 3 + u];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
        for (double z : out.gene_gates) CHECK_UNARY(z >= 0.0 && z <= 1.0);
        CHECK(out.embedding.size() == 50);
    }
}

TEST_CASE("eval mode is deterministic and identical rows map to identical outputs") {
    const auto base = fixtures::random_matrix(10, 5, 3);
    auto v = std::vector<double>(base.values().begin(), base.values().end());
    for (std::size_t q = 0; q < 5; ++q) v[9 * 5 + q] = v[2 * 5 + q];
    const auto x = fixtures::matrix(10, 5, v);
    const auto c = tiny_config();
    const auto model = tiny_model(5, c, 7);
    const auto a = model.forward(x, all(10), 1.0, Mode::eval);
    const auto b = model.forward(x, all(10), 1.0, Mode::eval);
    CHECK(a.gating_weights == b.gating_weights);
    CHECK(a.embedding == b.embedding);
    for (std::size_t d = 0; d < 2; ++d) CHECK(a.embedding[9 * 2 + d] == a.embedding[2 * 2 + d]);
}

TEST_CASE("parallel forward and backward agree bitwise with the serial reference") {
    const auto x = fixtures::random_matrix(70, 9, 4);
    const auto c = tiny_config(4);
    const auto model = tiny_model(9, c, 8);
    Rng r1(3), r2(3);
    const auto a = model.forward(x, all(70), 0.7, Mode::train, &r1);
    const auto b = model.forward_serial(x, all(70), 0.7, Mode::train, &r2);
    CHECK(a.gating_weights == b.gating_weights);
    CHECK(a.gene_gates == b.gene_gates);
    CHECK(a.embedding == b.embedding);

    auto ctx = LossContext::build(x, c);
    ctx.delta = compute_delta({a.embedding, 2});
    const auto pairs = select_crc_pairs(a.embedding, ctx.delta, 500);
    const auto loss = compute_loss(a, x, ctx, pairs);
    CHECK(model.backward(x, a, loss.grads) == model.backward_serial(x, a, loss.grads));
}

TEST_CASE("forward rejects bad input") {
    const auto x = fixtures::random_matrix(5, 4, 1);
    const auto model = tiny_model(4, tiny_config(), 1);
    const std::vector<std::size_t> bad = {0, 9};
    CHECK_THROWS_WITH_AS(model.forward(x, bad, 1.0, Mode::eval), doctest::Contains("IndexOutOfRange"), Error);
    const auto wide = fixtures::random_matrix(5, 6, 1);
    CHECK_THROWS_WITH_AS(model.forward(wide, all(5), 1.0, Mode::eval), doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("analytic gradient matches central differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto x = fixtures::random_matrix(30, 8, seed);
        const auto c = tiny_config();
        const auto model = tiny_model(8, c, seed + 100);
        const auto r = gradient_check(model, x, c);
        CHECK(r.checked == model.layout().total());
        CHECK(r.max_relative_error < 1e-3);
    }
}

TEST_CASE("central-difference error shrinks when the step is halved") {
    const auto x = fixtures::random_matrix(20, 6, 9);
    const auto c = tiny_config();
    const auto model = tiny_model(6, c, 10);
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < model.layout().total(); i += 7) subset.push_back(i);
    const auto coarse = gradient_check(model, x, c, subset, 2e-2);
    const auto fine = gradient_check(model, x, c, subset, 1e-2);
    CHECK(fine.max_absolute_error < coarse.max_absolute_error);
}

TEST_CASE("tied genes receive equal gradients") {
    // Gene 1 duplicates gene 0 and every parameter touching them is tied.
    auto base = fixtures::random_matrix(24, 5, 5);
    std::vector<double> v(base.values().begin(), base.values().end());
    for (std::size_t p = 0; p < 24; ++p) v[p * 5 + 1] = v[p * 5 + 0];
    const auto x = fixtures::matrix(24, 5, v);
    const auto c = tiny_config();
    auto model = tiny_model(5, c, 6);
    std::vector<double> params(model.params().begin(), model.params().end());
    const auto& layout = model.layout();
    auto tie_columns = [&](const std::string& name) {
        const auto& b = layout.find(name);
        for (std::size_t r = 0; r < b.rows; ++r) params[b.offset + r * b.cols + 1] = params[b.offset + r * b.cols + 0];
    };
    tie_columns("gating.w1");
    for (std::size_t u = 0; u < c.k; ++u) {
        const auto prefix = "expert" + std::to_string(u) + ".";
        const auto& g = layout.find(prefix + "gene_logits");
        params[g.offset + 1] = params[g.offset + 0];
        tie_columns(prefix + "w1");
    }
    model.set_params(params);
    const auto grad = eval_loss_gradient(model, x, c);
    for (std::size_t u = 0; u < c.k; ++u) {
        const auto& g = layout.find("expert" + std::to_string(u) + ".gene_logits");
        CHECK(grad[g.offset + 1] == doctest::Approx(grad[g.offset + 0]).epsilon(1e-10));
    }
}

TEST_CASE("parameter layout is contiguous and named") {
    const auto c = tiny_config(2);
    const ParamLayout layout(7, 2, c.hidden_dim, c.latent_dim);
    std::size_t expected = 0;
    for (const auto& b : layout.blocks()) {
        CHECK(b.offset == expected);
        expected += b.size();
    }
    CHECK(layout.total() == expected);
    CHECK(layout.find("expert1.gene_logits").size() == 7);
    CHECK(layout.find("head.w2").rows == 2);
}
