#include "cellscout/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cellscout::kernels {

double squared_distance(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

namespace {

// Shared per-row bodies so the serial and parallel drivers run identical arithmetic.

void distance_row(PointView points, std::size_t i, double* out) {
    const std::size_t n = points.size();
    for (std::size_t j = 0; j < n; ++j) out[j] = squared_distance(points.point(i), points.point(j), points.dim);
}

void knn_row(PointView points, std::size_t i, std::size_t k, std::vector<std::pair<double, std::size_t>>& scratch,
             std::size_t* out) {
    const std::size_t n = points.size();
    scratch.clear();
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        scratch.emplace_back(squared_distance(points.point(i), points.point(j), points.dim), j);
    }
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
    for (std::size_t r = 0; r < k; ++r) out[r] = scratch[r].second;
}

double knn_mean_row(PointView points, std::size_t i, std::size_t k, std::vector<double>& scratch) {
    const std::size_t n = points.size();
    scratch.clear();
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        scratch.push_back(squared_distance(points.point(i), points.point(j), points.dim));
    }
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
    double s = 0.0;
    for (std::size_t r = 0; r < k; ++r) s += std::sqrt(scratch[r]);
    return s / static_cast<double>(k);
}

void radius_row(PointView points, std::size_t i, double eps_sq, std::vector<std::size_t>& out) {
    const std::size_t n = points.size();
    out.clear();
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i && squared_distance(points.point(i), points.point(j), points.dim) <= eps_sq) out.push_back(j);
    }
}

double ordered_mean(const std::vector<double>& per_point) {
    double s = 0.0;
    for (double v : per_point) s += v;
    return s / static_cast<double>(per_point.size());
}

}  // namespace

std::vector<double> pairwise_sq_distances(PointView points) {
    const std::size_t n = points.size();
    std::vector<double> out(n * n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        distance_row(points, static_cast<std::size_t>(i), out.data() + static_cast<std::size_t>(i) * n);
    }
    return out;
}

std::vector<std::size_t> knn_indices(PointView points, std::size_t k) {
    const std::size_t n = points.size();
    k = std::min(k, n == 0 ? 0 : n - 1);
    std::vector<std::size_t> out(n * k);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
    {
        std::vector<std::pair<double, std::size_t>> scratch;
        scratch.reserve(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            knn_row(points, static_cast<std::size_t>(i), k, scratch, out.data() + static_cast<std::size_t>(i) * k);
        }
    }
    return out;
}

double mean_knn_distance(PointView points, std::size_t k) {
    const std::size_t n = points.size();
    k = std::min(k, n == 0 ? 0 : n - 1);
    if (k == 0) return 0.0;
    std::vector<double> per_point(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
    {
        std::vector<double> scratch;
        scratch.reserve(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            per_point[static_cast<std::size_t>(i)] = knn_mean_row(points, static_cast<std::size_t>(i), k, scratch);
        }
    }
    return ordered_mean(per_point);
}

std::vector<std::vector<std::size_t>> radius_neighbors(PointView points, double eps_sq) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> out(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        radius_row(points, static_cast<std::size_t>(i), eps_sq, out[static_cast<std::size_t>(i)]);
    }
    return out;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

std::vector<double> pairwise_sq_distances(PointView points) {
    const std::size_t n = points.size();
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i) distance_row(points, i, out.data() + i * n);
    return out;
}

std::vector<std::size_t> knn_indices(PointView points, std::size_t k) {
    const std::size_t n = points.size();
    k = std::min(k, n == 0 ? 0 : n - 1);
    std::vector<std::size_t> out(n * k);
    std::vector<std::pair<double, std::size_t>> scratch;
    for (std::size_t i = 0; i < n; ++i) knn_row(points, i, k, scratch, out.data() + i * k);
    return out;
}

double mean_knn_distance(PointView points, std::size_t k) {
    const std::size_t n = points.size();
    k = std::min(k, n == 0 ? 0 : n - 1);
    if (k == 0) return 0.0;
    std::vector<double> per_point(n);
    std::vector<double> scratch;
    for (std::size_t i = 0; i < n; ++i) per_point[i] = knn_mean_row(points, i, k, scratch);
    return ordered_mean(per_point);
}

std::vector<std::vector<std::size_t>> radius_neighbors(PointView points, double eps_sq) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) radius_row(points, i, eps_sq, out[i]);
    return out;
}

}  // namespace serial

}  // namespace cellscout::kernels
