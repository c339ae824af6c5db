#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cellscout/expression_matrix.hpp"
#include "cellscout/kernels.hpp"
#include "cellscout/moe_model.hpp"

/**
 * @file loss.hpp
 * @brief Training objective of the miner.
 *
 * total = -(F + lambda * I) + beta * CRC, minimized, where
 *
 *  - F is the discriminative power of the gated genes. With soft populations
 *    r_pu (gating weights), pi_u = mean_p r_pu, per-population activation
 *    rate e_u(b) = sum_p r_pu a_pb / sum_p r_pu and overall rate
 *    e(b) = mean_p a_pb, where a_pb = sigmoid(x_pb) is a cell's activation of
 *    gene b:  F = sum_u pi_u sum_b Imp_u(b) e_u(b) log(e_u(b) / e(b)).
 *  - I is information retention, H(B)/H(G), with binned per-gene marginal
 *    entropies: I = mean_u sum_b Imp_u(b) H(g_b) / sum_b H(g_b).
 *  - CRC is the squared-hinge violation max(0, gamma - p(Y_i = Y_j))^2,
 *    scaled by the pair's depth inside the neighborhood (1 - d_ij^2 / delta),
 *    averaged over cell pairs whose squared embedding distance d_ij^2 is
 *    <= delta, with p(Y_i = Y_j) = sum_u w_u(x_i) w_u(x_j).
 */

namespace cellscout {

struct LossBreakdown {
    double f_score = 0.0;
    double mir = 0.0;
    double crc_penalty = 0.0;
    double total = 0.0;
};

using CellPair = std::pair<std::size_t, std::size_t>;

/// Dataset-level constants the loss needs.
struct LossContext {
    std::vector<double> gene_entropy;  ///< binned marginal entropy per gene, bits
    std::vector<double> gene_weights;  ///< gene_entropy normalized to sum 1 (uniform if all zero)
    double lambda = 0.0;
    double gamma = 0.1;
    double beta = 1.0;
    double delta = 0.0;  ///< neighborhood scale for the constraint; set per epoch

    static LossContext build(const ExpressionMatrix& matrix, const MinerConfig& config);
};

struct LossResult {
    LossBreakdown breakdown;
    OutputGradients grads;  ///< d(total)/d(outputs)
};

/// Shannon entropy (bits) of values binned into `bins` equal-width bins over their range.
double binned_entropy(std::span<const double> values, std::size_t bins);

/**
 * Neighborhood scale: mean over points of the mean Euclidean distance to the
 * `neighbors` nearest other points. Throws `TooFewPoints` when there are not
 * more than `neighbors` points.
 */
double compute_delta(kernels::PointView points, std::size_t neighbors = 5);

/**
 * Batch-local pairs (i < j) with squared embedding distance <= delta. When
 * more than `max_pairs` qualify and `rng` is given, a uniform subsample of
 * `max_pairs` is drawn; without an RNG the first `max_pairs` are kept.
 */
std::vector<CellPair> select_crc_pairs(std::span<const double> embedding, double delta, std::size_t max_pairs,
                                       Rng* rng = nullptr);

/// Evaluates the objective and its gradient with respect to the forward outputs.
LossResult compute_loss(const ForwardOutput& out, const ExpressionMatrix& matrix, const LossContext& context,
                        std::span<const CellPair> pairs);

}  // namespace cellscout
