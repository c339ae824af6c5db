#include "cellscout/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "cellscout/error.hpp"
#include "cellscout/moe_model.hpp"

namespace cellscout {

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
    return buf;
}

std::size_t class_count(const std::vector<std::size_t>& labels) {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void check_labels(kernels::PointView points, const std::vector<std::size_t>& labels) {
    if (labels.size() != points.size()) throw Error("LengthMismatch", "labels and points differ in length");
}

struct Clusters {
    std::vector<std::size_t> ids;              // distinct labels present, ascending
    std::vector<std::vector<std::size_t>> members;
    std::vector<std::vector<double>> centroids;
};

Clusters group(kernels::PointView points, const std::vector<std::size_t>& labels) {
    check_labels(points, labels);
    const std::size_t dim = points.dim;
    std::vector<std::size_t> ids(labels);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    Clusters c;
    c.ids = ids;
    c.members.resize(ids.size());
    c.centroids.assign(ids.size(), std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto slot = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
        c.members[slot].push_back(i);
        for (std::size_t d = 0; d < dim; ++d) c.centroids[slot][d] += points.point(i)[d];
    }
    for (std::size_t s = 0; s < ids.size(); ++s) {
        for (double& v : c.centroids[s]) v /= static_cast<double>(c.members[s].size());
    }
    if (ids.size() < 2) throw Error("DegenerateClusters", "need at least 2 clusters");
    return c;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_states < 2 || spec.cells_per_state == 0 || spec.n_genes == 0 || spec.markers_per_state == 0 ||
        spec.n_states * spec.markers_per_state > spec.n_genes || !(spec.noise_sd >= 0.0) || !(spec.marker_lift >= 0.0)) {
        throw Error("InvalidSpec", "invalid synthetic data specification");
    }
    const std::size_t m = spec.n_states * spec.cells_per_state;
    const std::size_t n = spec.n_genes;
    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> values(m * n);
    std::vector<std::size_t> labels(m);
    std::vector<std::string> cells(m), genes(n);
    for (std::size_t p = 0; p < m; ++p) cells[p] = padded("cell", p, 5);
    for (std::size_t q = 0; q < n; ++q) genes[q] = padded("gene", q, 4);

    std::vector<std::vector<std::size_t>> markers(spec.n_states);
    for (std::size_t s = 0; s < spec.n_states; ++s) {
        for (std::size_t i = 0; i < spec.markers_per_state; ++i) markers[s].push_back(s * spec.markers_per_state + i);
    }

    for (std::size_t p = 0; p < m; ++p) {
        const std::size_t state = p / spec.cells_per_state;
        labels[p] = state;
        const std::size_t lo = state * spec.markers_per_state, hi = lo + spec.markers_per_state;
        for (std::size_t q = 0; q < n; ++q) {
            const double g = spec.noise_sd * normal(rng);
            values[p * n + q] = (q >= lo && q < hi) ? std::max(0.0, spec.marker_lift + g) : std::abs(g);
        }
    }
    return {ExpressionMatrix(std::move(values), std::move(cells), std::move(genes), false), std::move(labels),
            std::move(markers)};
}

double knn_clustering_accuracy(kernels::PointView points, const std::vector<std::size_t>& labels, std::size_t k) {
    check_labels(points, labels);
    const std::size_t m = points.size();
    if (k == 0 || m <= k) throw Error("TooFewPoints", "need more than k points");
    const auto nbrs = kernels::knn_indices(points, k);
    const std::size_t classes = class_count(labels);
    std::size_t correct = 0;
    std::vector<std::size_t> votes(classes);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t r = 0; r < k; ++r) votes[labels[nbrs[i * k + r]]] += 1;
        const auto pred = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
        correct += (pred == labels[i]);
    }
    return static_cast<double>(correct) / static_cast<double>(m);
}

double linear_classification_accuracy(kernels::PointView points, const std::vector<std::size_t>& labels,
                                      std::uint64_t split_seed, double train_frac) {
    check_labels(points, labels);
    const std::size_t m = points.size(), dim = points.dim;
    const std::size_t classes = class_count(labels);
    if (m < 2 || classes < 2) throw Error("TooFewPoints", "need at least two points and two classes");

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(split_seed);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = static_cast<std::size_t>(std::round(train_frac * static_cast<double>(m)));
    n_train = std::clamp<std::size_t>(n_train, 1, m - 1);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    std::vector<bool> present(classes, false);
    for (std::size_t i : train_idx) present[labels[i]] = true;
    if (std::find(present.begin(), present.end(), false) != present.end()) {
        throw Error("MissingClassInTrain", "a class has no training examples");
    }

    // Center with training statistics and apply one isotropic scale, so the
    // features rotate with the embedding.
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i : train_idx) {
        for (std::size_t d = 0; d < dim; ++d) mean[d] += points.point(i)[d];
    }
    for (double& v : mean) v /= static_cast<double>(n_train);
    double spread = 0.0;
    for (std::size_t i : train_idx) {
        for (std::size_t d = 0; d < dim; ++d) spread += std::pow(points.point(i)[d] - mean[d], 2);
    }
    spread = std::sqrt(spread / static_cast<double>(n_train));
    auto feature = [&](std::size_t i, std::size_t d) {
        return spread > 0.0 ? (points.point(i)[d] - mean[d]) / spread : 0.0;
    };

    // Pegasos-style subgradient descent, one weight vector (plus bias) per class.
    constexpr double kReg = 1e-3;
    constexpr std::size_t kEpochs = 100;
    std::vector<double> weights(classes * (dim + 1), 0.0);
    std::size_t step = 0;
    std::vector<std::size_t> epoch_order = train_idx;
    for (std::size_t epoch = 0; epoch < kEpochs; ++epoch) {
        std::shuffle(epoch_order.begin(), epoch_order.end(), rng);
        for (std::size_t i : epoch_order) {
            ++step;
            const double eta = 1.0 / (kReg * static_cast<double>(step + 100));
            for (std::size_t c = 0; c < classes; ++c) {
                double* wc = weights.data() + c * (dim + 1);
                const double y = labels[i] == c ? 1.0 : -1.0;
                double score = wc[dim];
                for (std::size_t d = 0; d < dim; ++d) score += wc[d] * feature(i, d);
                for (std::size_t d = 0; d < dim; ++d) wc[d] *= 1.0 - eta * kReg;
                if (y * score < 1.0) {
                    for (std::size_t d = 0; d < dim; ++d) wc[d] += eta * y * feature(i, d);
                    wc[dim] += eta * y;
                }
            }
        }
    }

    std::size_t correct = 0;
    for (std::size_t i : test_idx) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) {
            const double* wc = weights.data() + c * (dim + 1);
            double score = wc[dim];
            for (std::size_t d = 0; d < dim; ++d) score += wc[d] * feature(i, d);
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        correct += (best == labels[i]);
    }
    return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

double chi(kernels::PointView points, const std::vector<std::size_t>& labels) {
    const auto c = group(points, labels);
    const std::size_t dim = points.dim, total = points.size(), nc = c.ids.size();
    if (total <= nc) throw Error("DegenerateClusters", "CHI needs more points than clusters");
    std::vector<double> overall(dim, 0.0);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t d = 0; d < dim; ++d) overall[d] += points.point(i)[d];
    }
    for (double& v : overall) v /= static_cast<double>(total);

    double bss = 0.0, wss = 0.0;
    for (std::size_t s = 0; s < nc; ++s) {
        bss += static_cast<double>(c.members[s].size()) *
               kernels::squared_distance(c.centroids[s].data(), overall.data(), dim);
        for (std::size_t i : c.members[s]) wss += kernels::squared_distance(points.point(i), c.centroids[s].data(), dim);
    }
    if (!(wss > 0.0)) throw Error("DegenerateClusters", "zero within-cluster dispersion");
    return (bss / static_cast<double>(nc - 1)) / (wss / static_cast<double>(total - nc));
}

double dbi(kernels::PointView points, const std::vector<std::size_t>& labels) {
    const auto c = group(points, labels);
    const std::size_t dim = points.dim, nc = c.ids.size();
    std::vector<double> scatter(nc, 0.0);
    for (std::size_t s = 0; s < nc; ++s) {
        for (std::size_t i : c.members[s]) {
            scatter[s] += std::sqrt(kernels::squared_distance(points.point(i), c.centroids[s].data(), dim));
        }
        scatter[s] /= static_cast<double>(c.members[s].size());
    }
    double sum = 0.0;
    for (std::size_t s = 0; s < nc; ++s) {
        double worst = 0.0;
        for (std::size_t t = 0; t < nc; ++t) {
            if (t == s) continue;
            const double sep = std::sqrt(kernels::squared_distance(c.centroids[s].data(), c.centroids[t].data(), dim));
            if (!(sep > 0.0)) throw Error("DegenerateClusters", "coincident cluster centroids");
            worst = std::max(worst, (scatter[s] + scatter[t]) / sep);
        }
        sum += worst;
    }
    return sum / static_cast<double>(nc);
}

double dunn(kernels::PointView points, const std::vector<std::size_t>& labels) {
    check_labels(points, labels);
    const std::size_t total = points.size(), dim = points.dim;
    if (class_count(labels) < 2) throw Error("DegenerateClusters", "need at least 2 clusters");
    double min_inter = std::numeric_limits<double>::infinity();
    double max_intra = 0.0;
    bool any_inter = false;
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = i + 1; j < total; ++j) {
            const double d2 = kernels::squared_distance(points.point(i), points.point(j), dim);
            if (labels[i] == labels[j]) {
                max_intra = std::max(max_intra, d2);
            } else {
                min_inter = std::min(min_inter, d2);
                any_inter = true;
            }
        }
    }
    if (!any_inter) throw Error("DegenerateClusters", "need at least 2 clusters");
    if (!(max_intra > 0.0)) throw Error("DegenerateClusters", "every cluster has zero diameter");
    return std::sqrt(min_inter) / std::sqrt(max_intra);
}

MetricReport evaluate_embedding(const Embedding2D& embedding, const std::vector<std::size_t>& labels,
                                const std::string& method, std::uint64_t split_seed, std::size_t knn_k) {
    const auto view = embedding.view();
    MetricReport r;
    r.method = method;
    r.classification_acc = linear_classification_accuracy(view, labels, split_seed);
    r.clustering_acc = knn_clustering_accuracy(view, labels, knn_k);
    r.chi = chi(view, labels);
    r.dbi = dbi(view, labels);
    r.dunn = dunn(view, labels);
    return r;
}

BenchmarkReport run_benchmark(const ExpressionMatrix& matrix, const std::vector<std::size_t>& labels,
                              const Embedding2D& model_embedding, std::uint64_t split_seed) {
    if (model_embedding.size() != matrix.n_cells()) {
        throw Error("DimensionMismatch", "embedding does not cover every cell");
    }
    BenchmarkReport report;
    report.model = evaluate_embedding(model_embedding, labels, "cellscout", split_seed);
    report.pca = evaluate_embedding(embed_with_pca(matrix), labels, "pca", split_seed);
    return report;
}

std::string format_benchmark_csv(const BenchmarkReport& report) {
    std::ostringstream out;
    out << "method,classification_acc,clustering_acc,chi,dbi,dunn\n";
    out.precision(6);
    for (const auto* r : {&report.model, &report.pca}) {
        out << r->method << ',' << r->classification_acc << ',' << r->clustering_acc << ',' << r->chi << ','
            << r->dbi << ',' << r->dunn << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const MetricReport& r) {
    return {{"method", r.method},
            {"classification_acc", r.classification_acc},
            {"clustering_acc", r.clustering_acc},
            {"chi", r.chi},
            {"dbi", r.dbi},
            {"dunn", r.dunn}};
}

nlohmann::json to_json(const BenchmarkReport& report) {
    return {{"rows", nlohmann::json::array({to_json(report.model), to_json(report.pca)})}};
}

}  // namespace cellscout
