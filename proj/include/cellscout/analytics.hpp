#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cellscout/association.hpp"
#include "cellscout/expression_matrix.hpp"
#include "cellscout/kernels.hpp"

/**
 * @file analytics.hpp
 * @brief Derived quantities behind the views: dominant labels, pure regions,
 * region relevance profiles, per-gene distributions and gene rankings.
 */

namespace cellscout {

enum class RegionOrigin { lasso, pure_region, manual };

std::string to_string(RegionOrigin origin);
RegionOrigin region_origin_from_string(const std::string& name);

struct Region {
    std::string id;
    std::string name;
    std::vector<std::size_t> cell_indices;  ///< sorted, unique
    RegionOrigin origin = RegionOrigin::manual;
};

/// Sorts the indices and checks them. Throws `EmptyRegion`, `IndexOutOfRange`
/// or `DuplicateCell`.
Region make_region(std::string id, std::string name, std::vector<std::size_t> cells, RegionOrigin origin,
                   std::size_t n_cells);

struct PureRegion {
    std::size_t association_index = 0;
    std::vector<std::size_t> cell_indices;
    std::array<double, 2> centroid{};
};

struct RelevanceProfile {
    std::vector<double> mean_relevance;  ///< per association
    std::vector<double> rings;           ///< mean_relevance / q3 (0 when q3 == 0)
    double q3 = 0.0;
};

struct RadialHistogram {
    std::string gene;
    std::vector<double> bin_edges;  ///< bins + 1 ascending values over the gene's dataset range
    std::vector<double> densities;  ///< max-normalized counts per bin
};

/// argmax_u relevance per cell, ties to the lowest association index.
std::vector<std::size_t> dominant_labels(const std::vector<AssociationRelationship>& associations);

/// Density clustering of one point set. Returns a cluster id per point, -1 for noise.
/// `min_pts` counts the point itself. Clusters are numbered in order of their
/// lowest-index core point; a border point joins the first cluster that reaches it.
std::vector<int> dbscan(kernels::PointView points, double eps, std::size_t min_pts);

/**
 * Runs DBSCAN separately on the cells of each dominant label and returns every
 * non-noise cluster as a label-pure region, ordered by label then cluster.
 */
std::vector<PureRegion> detect_pure_regions(kernels::PointView embedding, const std::vector<std::size_t>& labels,
                                            double eps, std::size_t min_pts);

/// 75th percentile with linear interpolation between order statistics.
double upper_quartile(std::vector<double> values);

/// Mean relevance of the region's cells to each association, in units of the
/// dataset-wide upper quartile of all relevance values. Throws `EmptyRegion`.
RelevanceProfile relevance_profile(const std::vector<std::size_t>& cells,
                                   const std::vector<AssociationRelationship>& associations);

/// Histogram of one gene over the region's cells on bins spanning the gene's
/// range over the whole matrix. Throws `UnknownGene`, `EmptyRegion`.
RadialHistogram gene_distribution(const std::vector<std::size_t>& cells, const std::string& gene,
                                  const ExpressionMatrix& matrix, std::size_t bins = 12);

/// Genes by importance descending, ties by name. Returns min(n_top, n) entries.
std::vector<std::pair<std::string, double>> top_genes(const AssociationRelationship& association,
                                                      const std::vector<std::string>& gene_names,
                                                      std::size_t n_top = 4);

nlohmann::json to_json(const PureRegion& region, const std::vector<std::string>& cell_ids);
nlohmann::json to_json(const RelevanceProfile& profile);
nlohmann::json to_json(const RadialHistogram& histogram);
/// Persisted form: cells by id, not index.
nlohmann::json to_json(const Region& region, const std::vector<std::string>& cell_ids);
Region region_from_json(const nlohmann::json& j, const ExpressionMatrix& matrix);

}  // namespace cellscout
