#include "cellscout/verification.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "cellscout/error.hpp"

namespace cellscout {

namespace {

constexpr double kTieTolerance = 1e-12;

double binary_entropy(std::size_t positives, std::size_t total) {
    if (total == 0 || positives == 0 || positives == total) return 0.0;
    const double p = static_cast<double>(positives) / static_cast<double>(total);
    return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

void check_lengths(std::span<const double> values, std::span<const int> labels) {
    if (values.size() != labels.size()) throw Error("LengthMismatch", "values and labels differ in length");
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::above ? "above" : "below"; }

Direction direction_from_string(const std::string& name) {
    if (name == "above") return Direction::above;
    if (name == "below") return Direction::below;
    throw Error("InvalidArgument", "unknown direction '" + name + "'");
}

double entropy(std::span<const int> labels) {
    if (labels.empty()) throw Error("EmptySet", "entropy of an empty set");
    const auto pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
    return binary_entropy(pos, labels.size());
}

double information_gain(std::span<const double> values, std::span<const int> labels, double threshold) {
    check_lengths(values, labels);
    if (values.empty()) throw Error("EmptySet", "information gain of an empty set");
    std::size_t n_left = 0, pos_left = 0, pos_total = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const bool pos = labels[i] != 0;
        pos_total += pos;
        if (values[i] <= threshold) {
            ++n_left;
            pos_left += pos;
        }
    }
    const std::size_t n = values.size();
    const double total = static_cast<double>(n);
    const double h = binary_entropy(pos_total, n);
    const double h_left = binary_entropy(pos_left, n_left);
    const double h_right = binary_entropy(pos_total - pos_left, n - n_left);
    const double ig = h - (static_cast<double>(n_left) / total * h_left +
                           static_cast<double>(n - n_left) / total * h_right);
    return std::max(0.0, ig);
}

ThresholdChoice best_threshold(std::span<const double> values, std::span<const int> labels) {
    check_lengths(values, labels);
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    if (n == 0 || values[order.front()] == values[order.back()]) {
        throw Error("DegenerateValues", "need at least two distinct values");
    }
    std::size_t pos_total = 0;
    for (int l : labels) pos_total += (l != 0);
    if (pos_total == 0 || pos_total == n) throw Error("SingleClass", "both labels must be present");

    // One sweep over the sorted values; the left side grows one cell at a time.
    const double h = binary_entropy(pos_total, n);
    const double total = static_cast<double>(n);
    ThresholdChoice best;
    bool found = false;
    std::size_t pos_left = 0, left_at_best = 0, pos_left_at_best = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        pos_left += (labels[order[i]] != 0);
        const double a = values[order[i]], b = values[order[i + 1]];
        if (a == b) continue;
        const std::size_t n_left = i + 1;
        const double ig = h - (static_cast<double>(n_left) / total * binary_entropy(pos_left, n_left) +
                               static_cast<double>(n - n_left) / total * binary_entropy(pos_total - pos_left, n - n_left));
        if (!found || ig > best.ig + kTieTolerance) {
            found = true;
            best.threshold = a + (b - a) / 2.0;
            best.ig = std::max(0.0, ig);
            left_at_best = n_left;
            pos_left_at_best = pos_left;
        }
    }
    const double rate_left = static_cast<double>(pos_left_at_best) / static_cast<double>(left_at_best);
    const double rate_right =
        static_cast<double>(pos_total - pos_left_at_best) / static_cast<double>(n - left_at_best);
    best.direction = rate_right > rate_left ? Direction::above : Direction::below;
    return best;
}

double f1_score(const Confusion& c) {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double accuracy(const Confusion& c) {
    const std::size_t total = c.tp + c.fp + c.fn + c.tn;
    return total == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

VerificationResult evaluate_biomarker(const std::vector<std::string>& genes, const std::vector<std::size_t>& positive,
                                      const std::vector<std::size_t>& negative, const ExpressionMatrix& matrix) {
    if (genes.empty()) throw Error("EmptyBiomarker", "biomarker has no genes");
    if (positive.empty() || negative.empty()) throw Error("EmptyRegion", "both regions must be non-empty");
    std::unordered_set<std::string> seen;
    std::vector<std::size_t> gene_idx;
    for (const auto& g : genes) {
        if (!seen.insert(g).second) throw Error("DuplicateGene", "gene '" + g + "' listed twice");
        gene_idx.push_back(matrix.gene_index(g));
    }

    std::vector<std::size_t> cells;
    std::vector<int> labels;
    std::unordered_set<std::size_t> in_positive;
    for (std::size_t p : positive) {
        if (p >= matrix.n_cells()) throw Error("IndexOutOfRange", "cell index " + std::to_string(p));
        if (in_positive.insert(p).second) {
            cells.push_back(p);
            labels.push_back(1);
        }
    }
    std::unordered_set<std::size_t> in_negative;
    for (std::size_t p : negative) {
        if (p >= matrix.n_cells()) throw Error("IndexOutOfRange", "cell index " + std::to_string(p));
        if (in_positive.count(p) != 0) throw Error("OverlappingRegions", "cell " + matrix.cell_ids()[p] + " is in both regions");
        if (in_negative.insert(p).second) {
            cells.push_back(p);
            labels.push_back(0);
        }
    }

    VerificationResult result;
    std::vector<double> values(cells.size());
    std::vector<char> predicted(cells.size(), 1);
    for (std::size_t g = 0; g < genes.size(); ++g) {
        for (std::size_t i = 0; i < cells.size(); ++i) values[i] = matrix.at(cells[i], gene_idx[g]);
        Predicate pred;
        pred.gene = genes[g];
        try {
            const auto choice = best_threshold(values, labels);
            pred.threshold = choice.threshold;
            pred.direction = choice.direction;
            pred.information_gain = choice.ig;
        } catch (const Error& e) {
            if (e.code() != "DegenerateValues") throw;
            // A constant gene cannot separate anything; it accepts every pooled cell.
            pred.threshold = values.front();
            pred.direction = Direction::below;
            pred.information_gain = 0.0;
        }
        for (std::size_t i = 0; i < cells.size(); ++i) predicted[i] = predicted[i] && pred.holds(values[i]);
        result.per_gene.push_back(pred);
    }

    for (std::size_t i = 0; i < cells.size(); ++i) {
        const bool actual = labels[i] != 0;
        if (predicted[i] && actual) ++result.confusion.tp;
        else if (predicted[i]) ++result.confusion.fp;
        else if (actual) ++result.confusion.fn;
        else ++result.confusion.tn;
    }
    result.f1 = f1_score(result.confusion);
    result.accuracy = accuracy(result.confusion);
    return result;
}

VerificationResult refine_biomarker(const Biomarker& existing, const std::vector<std::string>& add,
                                    const std::vector<std::string>& remove, const std::vector<std::size_t>& positive,
                                    const std::vector<std::size_t>& negative, const ExpressionMatrix& matrix) {
    std::vector<std::string> genes;
    for (const auto& g : existing.genes) {
        if (std::find(remove.begin(), remove.end(), g) == remove.end()) genes.push_back(g);
    }
    for (const auto& g : add) {
        if (std::find(genes.begin(), genes.end(), g) == genes.end()) genes.push_back(g);
    }
    if (genes.empty()) throw Error("EmptyBiomarker", "refinement removes every gene");
    return evaluate_biomarker(genes, positive, negative, matrix);
}

Biomarker biomarker_of(const VerificationResult& result) {
    Biomarker b;
    for (const auto& p : result.per_gene) b.genes.push_back(p.gene);
    b.predicates = result.per_gene;
    return b;
}

nlohmann::json to_json(const Predicate& p) {
    return {{"gene", p.gene},
            {"threshold", p.threshold},
            {"direction", to_string(p.direction)},
            {"information_gain", p.information_gain}};
}

nlohmann::json to_json(const VerificationResult& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& p : r.per_gene) per.push_back(to_json(p));
    return {{"f1", r.f1},
            {"accuracy", r.accuracy},
            {"per_gene", per},
            {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}}};
}

VerificationResult verification_result_from_json(const nlohmann::json& j) {
    try {
        VerificationResult r;
        r.f1 = j.at("f1").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        for (const auto& p : j.at("per_gene")) {
            r.per_gene.push_back({p.at("gene").get<std::string>(), p.at("threshold").get<double>(),
                                  direction_from_string(p.at("direction").get<std::string>()),
                                  p.at("information_gain").get<double>()});
        }
        const auto& c = j.at("confusion");
        r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                       c.at("tn").get<std::size_t>()};
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedResult", e.what());
    }
}

}  // namespace cellscout
