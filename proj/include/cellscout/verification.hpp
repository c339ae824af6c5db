#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellscout/expression_matrix.hpp"

/**
 * @file verification.hpp
 * @brief Entropy-based threshold selection for candidate biomarker genes and
 * their F1/accuracy between a positive and a negative cell set.
 *
 * A multi-gene biomarker predicts a cell positive only when every per-gene
 * predicate holds. Metrics are computed over the union of the two regions.
 */

namespace cellscout {

enum class Direction { above, below };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& name);

struct Predicate {
    std::string gene;
    double threshold = 0.0;
    Direction direction = Direction::above;
    double information_gain = 0.0;  ///< bits

    bool holds(double value) const { return direction == Direction::above ? value > threshold : value <= threshold; }
};

struct Biomarker {
    std::vector<std::string> genes;
    std::vector<Predicate> predicates;  ///< parallel to genes
};

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct VerificationResult {
    double f1 = 0.0;
    double accuracy = 0.0;
    std::vector<Predicate> per_gene;
    Confusion confusion;
};

struct ThresholdChoice {
    double threshold = 0.0;
    double ig = 0.0;
    Direction direction = Direction::above;
};

/// Binary entropy in bits. Throws `EmptySet`.
double entropy(std::span<const int> labels);

/// IG of splitting at `threshold` (left side is values <= threshold). Throws `LengthMismatch`.
double information_gain(std::span<const double> values, std::span<const int> labels, double threshold);

/**
 * Scans midpoints between consecutive distinct sorted values and keeps the one
 * with the highest IG; ties go to the lowest threshold. Throws
 * `DegenerateValues`, `SingleClass` or `LengthMismatch`.
 */
ThresholdChoice best_threshold(std::span<const double> values, std::span<const int> labels);

/// F1 (0 when undefined) and accuracy from a confusion table.
double f1_score(const Confusion& c);
double accuracy(const Confusion& c);

/**
 * Fits a threshold per gene over the pooled cells of both regions and scores
 * the conjunction. Throws `EmptyBiomarker`, `EmptyRegion`, `OverlappingRegions`,
 * `UnknownGene`, `DuplicateGene`, `IndexOutOfRange`.
 */
VerificationResult evaluate_biomarker(const std::vector<std::string>& genes, const std::vector<std::size_t>& positive,
                                      const std::vector<std::size_t>& negative, const ExpressionMatrix& matrix);

/// Re-evaluates after removing then adding genes (added genes go at the end).
VerificationResult refine_biomarker(const Biomarker& existing, const std::vector<std::string>& add,
                                    const std::vector<std::string>& remove, const std::vector<std::size_t>& positive,
                                    const std::vector<std::size_t>& negative, const ExpressionMatrix& matrix);

Biomarker biomarker_of(const VerificationResult& result);

nlohmann::json to_json(const Predicate& p);
nlohmann::json to_json(const VerificationResult& r);
VerificationResult verification_result_from_json(const nlohmann::json& j);

}  // namespace cellscout
