#include "cellscout/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cellscout/error.hpp"
#include "cellscout/gumbel.hpp"

namespace cellscout {

namespace {

constexpr double kRateFloor = 1e-6;

}  // namespace

double binned_entropy(std::span<const double> values, std::size_t bins) {
    if (values.empty() || bins == 0) return 0.0;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return 0.0;
    std::vector<std::size_t> counts(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : values) {
        auto idx = static_cast<std::size_t>((v - lo) / width);
        counts[std::min(idx, bins - 1)] += 1;
    }
    double h = 0.0;
    const double total = static_cast<double>(values.size());
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double pr = static_cast<double>(c) / total;
        h -= pr * std::log2(pr);
    }
    return h;
}

LossContext LossContext::build(const ExpressionMatrix& matrix, const MinerConfig& config) {
    LossContext ctx;
    const std::size_t n = matrix.n_genes();
    ctx.gene_entropy.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        auto col = matrix.column(q);
        ctx.gene_entropy[q] = binned_entropy(col, config.bins);
    }
    const double total = std::accumulate(ctx.gene_entropy.begin(), ctx.gene_entropy.end(), 0.0);
    ctx.gene_weights.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        ctx.gene_weights[q] = total > 0.0 ? ctx.gene_entropy[q] / total : 1.0 / static_cast<double>(n);
    }
    ctx.lambda = config.effective_lambda();
    ctx.gamma = config.gamma;
    ctx.beta = config.beta;
    return ctx;
}

double compute_delta(kernels::PointView points, std::size_t neighbors) {
    if (points.size() <= neighbors) {
        throw Error("TooFewPoints", "need more than " + std::to_string(neighbors) + " points");
    }
    return kernels::mean_knn_distance(points, neighbors);
}

std::vector<CellPair> select_crc_pairs(std::span<const double> embedding, double delta, std::size_t max_pairs,
                                       Rng* rng) {
    const std::size_t b = embedding.size() / 2;
    std::vector<CellPair> pairs;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            if (kernels::squared_distance(embedding.data() + 2 * i, embedding.data() + 2 * j, 2) <= delta) {
                pairs.emplace_back(i, j);
            }
        }
    }
    if (pairs.size() > max_pairs) {
        if (rng != nullptr) {
            // Partial Fisher-Yates: the first max_pairs entries become a uniform sample.
            for (std::size_t i = 0; i < max_pairs; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
                std::swap(pairs[i], pairs[pick(*rng)]);
            }
        }
        pairs.resize(max_pairs);
    }
    return pairs;
}

LossResult compute_loss(const ForwardOutput& out, const ExpressionMatrix& matrix, const LossContext& context,
                        std::span<const CellPair> pairs) {
    const std::size_t B = out.batch, k = out.k, n = out.n_genes;
    const double inv_b = 1.0 / static_cast<double>(B);
    const std::vector<double>& w = out.gating_weights;
    const std::vector<double>& z = out.gene_gates;

    LossResult result;
    auto& grads = result.grads;
    grads.gating_weights.assign(B * k, 0.0);
    grads.gene_gates.assign(k * n, 0.0);

    // Activation a_pb and population sums.
    std::vector<double> act(B * n);
    std::vector<double> overall(n, 0.0);
    for (std::size_t p = 0; p < B; ++p) {
        const auto x = matrix.row(out.cells[p]);
        for (std::size_t q = 0; q < n; ++q) {
            act[p * n + q] = sigmoid(x[q]);
            overall[q] += act[p * n + q];
        }
    }
    for (double& v : overall) v = std::max(v * inv_b, kRateFloor);

    std::vector<double> mass(k, 0.0);       // R_u
    std::vector<double> act_sum(k * n, 0.0);  // S_ub
    for (std::size_t p = 0; p < B; ++p) {
        for (std::size_t u = 0; u < k; ++u) {
            const double wp = w[p * k + u];
            mass[u] += wp;
            double* s = act_sum.data() + u * n;
            const double* a = act.data() + p * n;
            for (std::size_t q = 0; q < n; ++q) s[q] += wp * a[q];
        }
    }

    // F and its partials with respect to S, R and the gates.
    double f_score = 0.0;
    std::vector<double> dS(k * n, 0.0), dR(k, 0.0);
    for (std::size_t u = 0; u < k; ++u) {
        if (!(mass[u] > 0.0)) continue;
        for (std::size_t q = 0; q < n; ++q) {
            const double s = act_sum[u * n + q];
            const double rate = std::max(s / mass[u], kRateFloor);
            const double log_lift = std::log(rate / overall[q]);
            const double gate = z[u * n + q];
            f_score += gate * s * log_lift * inv_b;
            grads.gene_gates[u * n + q] -= s * log_lift * inv_b;
            dS[u * n + q] = gate * (log_lift + 1.0) * inv_b;
            dR[u] -= gate * s / mass[u] * inv_b;
        }
    }
    for (std::size_t p = 0; p < B; ++p) {
        const double* a = act.data() + p * n;
        for (std::size_t u = 0; u < k; ++u) {
            double d = dR[u];
            const double* ds = dS.data() + u * n;
            for (std::size_t q = 0; q < n; ++q) d += a[q] * ds[q];
            grads.gating_weights[p * k + u] -= d;
        }
    }

    // Information retention.
    double mir = 0.0;
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t q = 0; q < n; ++q) {
            mir += z[u * n + q] * context.gene_weights[q] * inv_k;
            grads.gene_gates[u * n + q] -= context.lambda * context.gene_weights[q] * inv_k;
        }
    }
    mir = std::clamp(mir, 0.0, 1.0);

    // Representation constraint. A violating pair is weighted by how far inside
    // the delta ball it sits, so the penalty vanishes continuously at the boundary.
    grads.embedding.assign(B * 2, 0.0);
    double crc = 0.0;
    if (!pairs.empty() && context.delta > 0.0) {
        const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
        const double* e = out.embedding.data();
        for (const auto& [i, j] : pairs) {
            const double d2 = kernels::squared_distance(e + 2 * i, e + 2 * j, 2);
            const double depth = 1.0 - d2 / context.delta;
            if (depth <= 0.0) continue;
            double same = 0.0;
            for (std::size_t u = 0; u < k; ++u) same += w[i * k + u] * w[j * k + u];
            const double gap = context.gamma - same;
            if (gap <= 0.0) continue;
            crc += gap * gap * depth * inv_pairs;
            const double coef = -2.0 * gap * depth * inv_pairs * context.beta;
            for (std::size_t u = 0; u < k; ++u) {
                grads.gating_weights[i * k + u] += coef * w[j * k + u];
                grads.gating_weights[j * k + u] += coef * w[i * k + u];
            }
            const double coef_e = -2.0 * gap * gap * inv_pairs * context.beta / context.delta;
            for (std::size_t d = 0; d < 2; ++d) {
                const double diff = e[2 * i + d] - e[2 * j + d];
                grads.embedding[i * 2 + d] += coef_e * diff;
                grads.embedding[j * 2 + d] -= coef_e * diff;
            }
        }
    }

    result.breakdown.f_score = f_score;
    result.breakdown.mir = mir;
    result.breakdown.crc_penalty = crc;
    result.breakdown.total = -(f_score + context.lambda * mir) + context.beta * crc;
    return result;
}

}  // namespace cellscout
