#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellscout/embedding.hpp"
#include "cellscout/expression_matrix.hpp"
#include "cellscout/kernels.hpp"

/**
 * @file bench.hpp
 * @brief Synthetic planted-state data and embedding quality metrics.
 */

namespace cellscout {

struct SyntheticSpec {
    std::size_t n_states = 3;
    std::size_t cells_per_state = 200;
    std::size_t n_genes = 60;
    std::size_t markers_per_state = 8;
    double marker_lift = 3.0;
    double noise_sd = 1.0;
    std::uint64_t seed = 7;
};

struct SyntheticData {
    ExpressionMatrix matrix;
    std::vector<std::size_t> labels;
    /// markers[s] = gene indices planted for state s; sets are disjoint.
    std::vector<std::vector<std::size_t>> markers;
};

/**
 * Cells are grouped by state (state 0 first). State s's markers are genes
 * [s * markers_per_state, (s + 1) * markers_per_state); a marker is drawn from
 * Normal(marker_lift, noise_sd) clipped at 0 in its own state and from
 * |Normal(0, noise_sd)| everywhere else, like every non-marker gene.
 * Throws `InvalidSpec`.
 */
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// KNN label propagation: each point is predicted by majority vote of its k
/// nearest other points (ties to the smallest label). Throws `TooFewPoints`.
double knn_clustering_accuracy(kernels::PointView points, const std::vector<std::size_t>& labels, std::size_t k = 5);

/**
 * Held-out accuracy of a one-vs-rest linear max-margin classifier trained by
 * subgradient descent on the regularized hinge loss. The split is a seeded
 * shuffle; throws `MissingClassInTrain` if a class is absent from the
 * training part.
 */
double linear_classification_accuracy(kernels::PointView points, const std::vector<std::size_t>& labels,
                                      std::uint64_t split_seed, double train_frac = 0.8);

/// Calinski-Harabasz: (BSS / (c - 1)) / (WSS / (N - c)).
double chi(kernels::PointView points, const std::vector<std::size_t>& labels);
/// Davies-Bouldin with S_i = mean distance to the centroid.
double dbi(kernels::PointView points, const std::vector<std::size_t>& labels);
/// Dunn: min inter-cluster point distance / max intra-cluster diameter.
double dunn(kernels::PointView points, const std::vector<std::size_t>& labels);

struct MetricReport {
    std::string method;
    double classification_acc = 0.0;
    double clustering_acc = 0.0;
    double chi = 0.0;
    double dbi = 0.0;
    double dunn = 0.0;
};

MetricReport evaluate_embedding(const Embedding2D& embedding, const std::vector<std::size_t>& labels,
                                const std::string& method, std::uint64_t split_seed = 1, std::size_t knn_k = 5);

struct BenchmarkReport {
    MetricReport model;
    MetricReport pca;
};

/// Scores the model embedding against the PCA baseline of the same matrix.
BenchmarkReport run_benchmark(const ExpressionMatrix& matrix, const std::vector<std::size_t>& labels,
                              const Embedding2D& model_embedding, std::uint64_t split_seed = 1);

/// method x metric table, header "method,classification_acc,clustering_acc,chi,dbi,dunn".
std::string format_benchmark_csv(const BenchmarkReport& report);
nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const BenchmarkReport& report);

}  // namespace cellscout
