#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file expression_matrix.hpp
 * @brief Dense cells-by-genes expression matrix with cell/gene registries.
 */

namespace cellscout {

enum class TableFormat { csv, tsv };

enum class NormalizationMethod { log1p_zscore, log1p_only, none };

struct NormalizationSpec {
    NormalizationMethod method = NormalizationMethod::log1p_zscore;
    bool per_gene = true;
};

/**
 * Row-major m x n matrix of expression levels. Row p is cell `cell_ids[p]`,
 * column q is gene `gene_names[q]`.
 *
 * Instances are immutable once constructed; the constructor enforces the
 * shape, uniqueness and value invariants and throws `cellscout::Error` with
 * codes `DuplicateId`, `EmptyMatrix`, `NegativeValue` or `NonNumericCell`
 * (the latter for NaN) on violation.
 */
class ExpressionMatrix {
public:
    ExpressionMatrix(std::vector<double> values,
                     std::vector<std::string> cell_ids,
                     std::vector<std::string> gene_names,
                     bool normalized = false);

    std::size_t n_cells() const { return cell_ids_.size(); }
    std::size_t n_genes() const { return gene_names_.size(); }
    bool normalized() const { return normalized_; }

    double at(std::size_t cell, std::size_t gene) const { return values_[cell * n_genes() + gene]; }
    std::span<const double> row(std::size_t cell) const {
        return {values_.data() + cell * n_genes(), n_genes()};
    }
    std::span<const double> values() const { return values_; }

    const std::vector<std::string>& cell_ids() const { return cell_ids_; }
    const std::vector<std::string>& gene_names() const { return gene_names_; }

    /// Index of a gene by name; throws `UnknownGene` if absent.
    std::size_t gene_index(std::string_view name) const;
    /// Index of a cell by id; throws `UnknownCell` if absent.
    std::size_t cell_index(std::string_view id) const;

    /// Copy of column q.
    std::vector<double> column(std::size_t gene) const;

private:
    std::vector<double> values_;
    std::vector<std::string> cell_ids_;
    std::vector<std::string> gene_names_;
    bool normalized_;
};

struct ValidationReport {
    std::vector<std::string> zero_variance_genes;
    std::vector<std::string> zero_cells;
    std::size_t n_cells = 0;
    std::size_t n_genes = 0;
    double min_value = 0.0;
    double max_value = 0.0;
    double mean_value = 0.0;
    double fraction_zero = 0.0;
};

ExpressionMatrix load_matrix(const std::filesystem::path& path, TableFormat format = TableFormat::csv);

/// Parses a table from an in-memory buffer; same rules as `load_matrix`.
ExpressionMatrix parse_matrix(std::string_view text, TableFormat format = TableFormat::csv);

/// Writes the matrix with the header `cell_id,<genes...>`. Values use
/// shortest round-trip formatting so reloading reproduces them exactly.
void write_matrix(const ExpressionMatrix& matrix, const std::filesystem::path& path,
                  TableFormat format = TableFormat::csv);
std::string format_matrix(const ExpressionMatrix& matrix, TableFormat format = TableFormat::csv);

ExpressionMatrix normalize(const ExpressionMatrix& matrix, const NormalizationSpec& spec = {});

ValidationReport validate(const ExpressionMatrix& matrix);

TableFormat format_from_path(const std::filesystem::path& path);

}  // namespace cellscout
