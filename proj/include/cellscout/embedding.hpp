#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cellscout/expression_matrix.hpp"
#include "cellscout/kernels.hpp"

namespace cellscout {

enum class EmbeddingSource { model, pca };

std::string to_string(EmbeddingSource source);
EmbeddingSource embedding_source_from_string(const std::string& name);

struct PolarPoint {
    double r = 0.0;
    double theta = 0.0;  ///< [0, 2 pi); 0 at the origin
};

/// Per-cell 2D layout. `coords` is m x 2 row-major; `polar` mirrors it.
struct Embedding2D {
    std::vector<double> coords;
    std::vector<PolarPoint> polar;
    EmbeddingSource source = EmbeddingSource::model;

    std::size_t size() const { return coords.size() / 2; }
    kernels::PointView view() const { return {coords, 2}; }
    static Embedding2D from_coords(std::vector<double> coords, EmbeddingSource source);
};

PolarPoint to_polar(double x, double y);
std::vector<PolarPoint> to_polar(std::span<const double> coords);

/**
 * Projects the matrix onto its top `dims` principal components (eigenvectors
 * of the gene covariance). Each component's sign is fixed so that its
 * largest-magnitude loading is positive, which makes the output independent
 * of the eigensolver's arbitrary sign and of cell order.
 */
struct PcaResult {
    std::vector<double> scores;       ///< m x dims
    std::vector<double> components;   ///< dims x n, unit rows
    std::vector<double> variances;    ///< dims eigenvalues, descending
    std::vector<double> mean;         ///< n gene means
};

PcaResult principal_components(const ExpressionMatrix& matrix, std::size_t dims = 2);

/// PCA baseline layout. Throws `TooFewCells` for m < 3.
Embedding2D embed_with_pca(const ExpressionMatrix& matrix);

}  // namespace cellscout
