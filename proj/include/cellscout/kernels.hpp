#pragma once

#include <cstddef>
#include <span>
#include <vector>

/**
 * @file kernels.hpp
 * @brief Data-parallel geometry kernels shared by the miner, analytics and
 * benchmark code.
 *
 * Every kernel exists twice: an OpenMP version in `cellscout::kernels` and a
 * plain loop in `cellscout::kernels::serial`. The serial versions are the
 * reference the tests compare against; results are bitwise identical because
 * each output element is computed by exactly one iteration in a fixed order.
 */

namespace cellscout::kernels {

/// Non-owning view of N points of dimension `dim`, stored row-major.
struct PointView {
    std::span<const double> data;
    std::size_t dim = 2;

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
    const double* point(std::size_t i) const { return data.data() + i * dim; }
};

double squared_distance(const double* a, const double* b, std::size_t dim);

/// Dense N x N squared Euclidean distance matrix.
std::vector<double> pairwise_sq_distances(PointView points);

/// For each point, indices of its `k` nearest other points ordered by
/// (distance, index). Result is N x k, row-major.
std::vector<std::size_t> knn_indices(PointView points, std::size_t k);

/// Mean over points of the mean Euclidean distance to their `k` nearest neighbors.
double mean_knn_distance(PointView points, std::size_t k);

/// Indices j != i with squared distance <= eps_sq, ascending.
std::vector<std::vector<std::size_t>> radius_neighbors(PointView points, double eps_sq);

namespace serial {

std::vector<double> pairwise_sq_distances(PointView points);
std::vector<std::size_t> knn_indices(PointView points, std::size_t k);
double mean_knn_distance(PointView points, std::size_t k);
std::vector<std::vector<std::size_t>> radius_neighbors(PointView points, double eps_sq);

}  // namespace serial

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace cellscout::kernels
