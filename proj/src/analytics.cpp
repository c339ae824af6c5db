#include "cellscout/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "cellscout/error.hpp"

namespace cellscout {

std::string to_string(RegionOrigin origin) {
    switch (origin) {
        case RegionOrigin::lasso: return "lasso";
        case RegionOrigin::pure_region: return "pure_region";
        case RegionOrigin::manual: return "manual";
    }
    return "manual";
}

RegionOrigin region_origin_from_string(const std::string& name) {
    if (name == "lasso") return RegionOrigin::lasso;
    if (name == "pure_region") return RegionOrigin::pure_region;
    if (name == "manual") return RegionOrigin::manual;
    throw Error("InvalidArgument", "unknown region origin '" + name + "'");
}

Region make_region(std::string id, std::string name, std::vector<std::size_t> cells, RegionOrigin origin,
                   std::size_t n_cells) {
    if (cells.empty()) throw Error("EmptyRegion", "region has no cells");
    std::sort(cells.begin(), cells.end());
    if (cells.back() >= n_cells) throw Error("IndexOutOfRange", "cell index " + std::to_string(cells.back()));
    if (std::adjacent_find(cells.begin(), cells.end()) != cells.end()) {
        throw Error("DuplicateCell", "region lists a cell twice");
    }
    return {std::move(id), std::move(name), std::move(cells), origin};
}

std::vector<std::size_t> dominant_labels(const std::vector<AssociationRelationship>& associations) {
    if (associations.empty()) return {};
    const std::size_t m = associations.front().relevance.size();
    std::vector<std::size_t> labels(m, 0);
    for (std::size_t p = 0; p < m; ++p) {
        double best = associations[0].relevance[p];
        for (std::size_t u = 1; u < associations.size(); ++u) {
            if (associations[u].relevance[p] > best) {
                best = associations[u].relevance[p];
                labels[p] = u;
            }
        }
    }
    return labels;
}

std::vector<int> dbscan(kernels::PointView points, double eps, std::size_t min_pts) {
    if (!(eps > 0.0)) throw Error("InvalidArgument", "eps must be > 0");
    if (min_pts < 2) throw Error("InvalidArgument", "min_pts must be >= 2");
    const std::size_t n = points.size();
    const auto neighbors = kernels::radius_neighbors(points, eps * eps);

    std::vector<int> cluster(n, -1);
    std::vector<bool> visited(n, false);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (visited[i] || neighbors[i].size() + 1 < min_pts) continue;
        // i is an unvisited core point: grow a new cluster from it.
        std::deque<std::size_t> frontier{i};
        visited[i] = true;
        cluster[i] = next;
        while (!frontier.empty()) {
            const std::size_t p = frontier.front();
            frontier.pop_front();
            if (neighbors[p].size() + 1 < min_pts) continue;
            for (std::size_t q : neighbors[p]) {
                if (cluster[q] == -1) cluster[q] = next;
                if (!visited[q]) {
                    visited[q] = true;
                    frontier.push_back(q);
                }
            }
        }
        ++next;
    }
    return cluster;
}

std::vector<PureRegion> detect_pure_regions(kernels::PointView embedding, const std::vector<std::size_t>& labels,
                                            double eps, std::size_t min_pts) {
    if (labels.size() != embedding.size()) throw Error("LengthMismatch", "labels and embedding differ in length");
    if (!(eps > 0.0)) throw Error("InvalidArgument", "eps must be > 0");
    if (min_pts < 2) throw Error("InvalidArgument", "min_pts must be >= 2");

    std::vector<PureRegion> result;
    if (labels.empty()) return result;
    const std::size_t n_labels = *std::max_element(labels.begin(), labels.end()) + 1;
    for (std::size_t label = 0; label < n_labels; ++label) {
        std::vector<std::size_t> members;
        std::vector<double> coords;
        for (std::size_t p = 0; p < labels.size(); ++p) {
            if (labels[p] != label) continue;
            members.push_back(p);
            coords.push_back(embedding.point(p)[0]);
            coords.push_back(embedding.point(p)[1]);
        }
        if (members.empty()) continue;
        const auto assignment = dbscan({coords, 2}, eps, min_pts);
        const int n_clusters = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
        for (int c = 0; c < n_clusters; ++c) {
            PureRegion region;
            region.association_index = label;
            for (std::size_t i = 0; i < members.size(); ++i) {
                if (assignment[i] != c) continue;
                region.cell_indices.push_back(members[i]);
                region.centroid[0] += coords[2 * i];
                region.centroid[1] += coords[2 * i + 1];
            }
            const auto size = static_cast<double>(region.cell_indices.size());
            region.centroid[0] /= size;
            region.centroid[1] /= size;
            result.push_back(std::move(region));
        }
    }
    return result;
}

double upper_quartile(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = 0.75 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

RelevanceProfile relevance_profile(const std::vector<std::size_t>& cells,
                                   const std::vector<AssociationRelationship>& associations) {
    if (cells.empty()) throw Error("EmptyRegion", "region has no cells");
    RelevanceProfile profile;
    std::vector<double> all;
    for (const auto& a : associations) {
        all.insert(all.end(), a.relevance.begin(), a.relevance.end());
        double sum = 0.0;
        for (std::size_t p : cells) {
            if (p >= a.relevance.size()) throw Error("IndexOutOfRange", "cell index " + std::to_string(p));
            sum += a.relevance[p];
        }
        profile.mean_relevance.push_back(sum / static_cast<double>(cells.size()));
    }
    profile.q3 = upper_quartile(std::move(all));
    for (double mean : profile.mean_relevance) profile.rings.push_back(profile.q3 > 0.0 ? mean / profile.q3 : 0.0);
    return profile;
}

RadialHistogram gene_distribution(const std::vector<std::size_t>& cells, const std::string& gene,
                                  const ExpressionMatrix& matrix, std::size_t bins) {
    const std::size_t q = matrix.gene_index(gene);
    if (cells.empty()) throw Error("EmptyRegion", "region has no cells");
    if (bins == 0) throw Error("InvalidArgument", "bins must be >= 1");

    double lo = matrix.at(0, q), hi = lo;
    for (std::size_t p = 1; p < matrix.n_cells(); ++p) {
        lo = std::min(lo, matrix.at(p, q));
        hi = std::max(hi, matrix.at(p, q));
    }

    RadialHistogram h;
    h.gene = gene;
    h.bin_edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
    h.bin_edges[bins] = hi;

    std::vector<double> counts(bins, 0.0);
    for (std::size_t p : cells) {
        if (p >= matrix.n_cells()) throw Error("IndexOutOfRange", "cell index " + std::to_string(p));
        std::size_t idx = 0;
        if (width > 0.0) idx = std::min(bins - 1, static_cast<std::size_t>((matrix.at(p, q) - lo) / width));
        counts[idx] += 1.0;
    }
    const double mx = *std::max_element(counts.begin(), counts.end());
    h.densities.resize(bins);
    for (std::size_t i = 0; i < bins; ++i) h.densities[i] = counts[i] / mx;
    return h;
}

std::vector<std::pair<std::string, double>> top_genes(const AssociationRelationship& association,
                                                      const std::vector<std::string>& gene_names,
                                                      std::size_t n_top) {
    if (association.importance.size() != gene_names.size()) {
        throw Error("DimensionMismatch", "importance and gene names differ in length");
    }
    std::vector<std::size_t> order(gene_names.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (association.importance[a] != association.importance[b]) {
            return association.importance[a] > association.importance[b];
        }
        return gene_names[a] < gene_names[b];
    });
    order.resize(std::min(n_top, order.size()));
    std::vector<std::pair<std::string, double>> out;
    out.reserve(order.size());
    for (std::size_t i : order) out.emplace_back(gene_names[i], association.importance[i]);
    return out;
}

nlohmann::json to_json(const PureRegion& region, const std::vector<std::string>& cell_ids) {
    nlohmann::json ids = nlohmann::json::array();
    for (std::size_t p : region.cell_indices) ids.push_back(cell_ids[p]);
    return {{"association_index", region.association_index},
            {"cell_indices", region.cell_indices},
            {"cell_ids", ids},
            {"centroid", {region.centroid[0], region.centroid[1]}}};
}

nlohmann::json to_json(const RelevanceProfile& profile) {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t u = 0; u < profile.mean_relevance.size(); ++u) {
        per.push_back({{"association_index", u},
                       {"mean_relevance", profile.mean_relevance[u]},
                       {"rings", profile.rings[u]}});
    }
    return {{"associations", per}, {"q3", profile.q3}};
}

nlohmann::json to_json(const RadialHistogram& h) {
    return {{"gene", h.gene}, {"bin_edges", h.bin_edges}, {"densities", h.densities}};
}

nlohmann::json to_json(const Region& region, const std::vector<std::string>& cell_ids) {
    nlohmann::json ids = nlohmann::json::array();
    for (std::size_t p : region.cell_indices) ids.push_back(cell_ids[p]);
    return {{"id", region.id}, {"name", region.name}, {"origin", to_string(region.origin)}, {"cell_ids", ids}};
}

Region region_from_json(const nlohmann::json& j, const ExpressionMatrix& matrix) {
    try {
        std::vector<std::size_t> cells;
        for (const auto& id : j.at("cell_ids")) cells.push_back(matrix.cell_index(id.get<std::string>()));
        return make_region(j.at("id").get<std::string>(), j.value("name", ""), std::move(cells),
                           region_origin_from_string(j.value("origin", "manual")), matrix.n_cells());
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedRegion", e.what());
    }
}

}  // namespace cellscout
