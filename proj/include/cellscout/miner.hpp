#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellscout/association.hpp"
#include "cellscout/embedding.hpp"
#include "cellscout/expression_matrix.hpp"
#include "cellscout/loss.hpp"
#include "cellscout/moe_model.hpp"

/**
 * @file miner.hpp
 * @brief Training loop and association extraction for the mixture-of-experts miner.
 */

namespace cellscout {

struct TrainedModel {
    MoEModel model;
    MinerConfig config;
    std::vector<AssociationRelationship> associations;
    Embedding2D embedding;
    double informativeness = 0.0;
    std::vector<LossBreakdown> history;
};

using EpochCallback = std::function<void(std::size_t epoch, std::size_t epochs, const LossBreakdown&)>;

/**
 * Runs the full optimization: per epoch the Gumbel temperature is annealed
 * geometrically, the neighborhood scale delta is recomputed from the current
 * eval-mode embedding, and every shuffled mini-batch takes one clipped
 * gradient-descent step on the total loss.
 *
 * Requires a normalized matrix with m >= 6 and n >= 2. Throws `TooFewCells`,
 * `TooFewGenes`, `NotNormalized`, `InvalidConfig` or `NonFiniteLoss`.
 * Deterministic for a given (matrix, config).
 */
TrainedModel train(const ExpressionMatrix& matrix, const MinerConfig& config, const EpochCallback& on_epoch = {});

/// Eval-mode relevance and importance for every expert, in expert order.
std::vector<AssociationRelationship> extract_associations(const MoEModel& model, const ExpressionMatrix& matrix);

/// Model layout of every cell (eval mode). Throws `DimensionMismatch`.
Embedding2D embed_with_model(const TrainedModel& trained, const ExpressionMatrix& matrix);
Embedding2D embed_with_model(const MoEModel& model, const ExpressionMatrix& matrix);

/// Normalized entropy of the dominant-label distribution: H / log2(k).
double informativeness(const std::vector<std::size_t>& labels, std::size_t k);
double informativeness(const std::vector<AssociationRelationship>& associations, std::size_t k);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t checked = 0;
};

/**
 * Compares the analytic gradient of the eval-mode total loss against central
 * differences with step `h` on `param_subset` (all parameters when empty).
 * delta and the constraint pairs are fixed from the unperturbed embedding so
 * the loss is a smooth function of the parameters.
 */
GradientCheckResult gradient_check(const MoEModel& model, const ExpressionMatrix& matrix, const MinerConfig& config,
                                   const std::vector<std::size_t>& param_subset = {}, double h = 1e-4);

/// Analytic gradient of the eval-mode loss over all cells (pairs fixed as in gradient_check).
std::vector<double> eval_loss_gradient(const MoEModel& model, const ExpressionMatrix& matrix, const MinerConfig& config,
                                       LossBreakdown* breakdown = nullptr);

struct KSweepRow {
    std::size_t k = 0;
    std::optional<double> informativeness;
    std::optional<double> final_loss;
    std::string error;
};

struct KSweepReport {
    std::vector<KSweepRow> rows;
    std::size_t chosen_k = 0;
    double epsilon = 0.01;
};

/**
 * Trains one model per candidate k (same seed) and picks the smallest k whose
 * informativeness is within `epsilon` of the best candidate. Failed candidates
 * are reported and skipped. Throws `InvalidArgument` for an empty or unsorted list
 * or any k < 2, and `SweepFailed` if every candidate fails.
 */
KSweepReport select_k(const ExpressionMatrix& matrix, const MinerConfig& config_template,
                      const std::vector<std::size_t>& k_candidates, double epsilon = 0.01,
                      const std::function<void(const KSweepRow&)>& on_row = {});

inline constexpr const char* kModelVersion = "cellscout-model/1";

nlohmann::json config_to_json(const MinerConfig& config);
/// Missing fields keep their defaults.
MinerConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LossBreakdown& loss);
nlohmann::json to_json(const TrainedModel& trained);
TrainedModel trained_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KSweepReport& report);
/// Plain-text table: one row per candidate k, then a "chosen k" line.
std::string format_sweep_table(const KSweepReport& report);

}  // namespace cellscout
