#include "cellscout/embedding.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "cellscout/error.hpp"

namespace cellscout {

std::string to_string(EmbeddingSource source) { return source == EmbeddingSource::model ? "model" : "pca"; }

EmbeddingSource embedding_source_from_string(const std::string& name) {
    if (name == "model") return EmbeddingSource::model;
    if (name == "pca") return EmbeddingSource::pca;
    throw Error("InvalidArgument", "unknown embedding source '" + name + "'");
}

PolarPoint to_polar(double x, double y) {
    PolarPoint p;
    p.r = std::hypot(x, y);
    if (p.r == 0.0) return p;
    double theta = std::atan2(y, x);
    if (theta < 0.0) theta += 2.0 * std::numbers::pi;
    if (theta >= 2.0 * std::numbers::pi) theta = 0.0;
    p.theta = theta;
    return p;
}

std::vector<PolarPoint> to_polar(std::span<const double> coords) {
    std::vector<PolarPoint> out(coords.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_polar(coords[2 * i], coords[2 * i + 1]);
    return out;
}

Embedding2D Embedding2D::from_coords(std::vector<double> coords, EmbeddingSource source) {
    for (double v : coords) {
        if (!std::isfinite(v)) throw Error("NonFiniteEmbedding", "embedding contains non-finite coordinates");
    }
    Embedding2D e;
    e.polar = to_polar(coords);
    e.coords = std::move(coords);
    e.source = source;
    return e;
}

PcaResult principal_components(const ExpressionMatrix& matrix, std::size_t dims) {
    const std::size_t m = matrix.n_cells(), n = matrix.n_genes();
    if (m < 3) throw Error("TooFewCells", "PCA needs at least 3 cells");
    dims = std::min(dims, n);

    Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t q = 0; q < n; ++q) x(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = matrix.at(p, q);
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(m - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("NumericalError", "covariance eigendecomposition failed");

    PcaResult result;
    result.mean.assign(mean.data(), mean.data() + n);
    result.components.resize(dims * n);
    result.variances.resize(dims);
    result.scores.resize(m * dims);
    for (std::size_t d = 0; d < dims; ++d) {
        // Eigen sorts eigenvalues ascending.
        const auto col = static_cast<Eigen::Index>(n - 1 - d);
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        result.variances[d] = std::max(0.0, solver.eigenvalues()(col));
        for (std::size_t q = 0; q < n; ++q) result.components[d * n + q] = v(static_cast<Eigen::Index>(q));
        const Eigen::VectorXd s = x * v;
        for (std::size_t p = 0; p < m; ++p) result.scores[p * dims + d] = s(static_cast<Eigen::Index>(p));
    }
    return result;
}

Embedding2D embed_with_pca(const ExpressionMatrix& matrix) {
    auto pca = principal_components(matrix, 2);
    std::vector<double> coords(matrix.n_cells() * 2, 0.0);
    const std::size_t dims = pca.variances.size();
    for (std::size_t p = 0; p < matrix.n_cells(); ++p) {
        for (std::size_t d = 0; d < dims; ++d) coords[p * 2 + d] = pca.scores[p * dims + d];
    }
    return Embedding2D::from_coords(std::move(coords), EmbeddingSource::pca);
}

}  // namespace cellscout
