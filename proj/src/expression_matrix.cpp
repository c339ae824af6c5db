#include "cellscout/expression_matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cellscout/error.hpp"

namespace cellscout {

namespace {

void check_unique(const std::vector<std::string>& names, const char* what) {
    std::unordered_set<std::string_view> seen;
    for (const auto& name : names) {
        if (!seen.insert(name).second) {
            throw Error("DuplicateId", std::string("duplicate ") + what + " '" + name + "'");
        }
    }
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

ExpressionMatrix::ExpressionMatrix(std::vector<double> values,
                                   std::vector<std::string> cell_ids,
                                   std::vector<std::string> gene_names,
                                   bool normalized)
    : values_(std::move(values)),
      cell_ids_(std::move(cell_ids)),
      gene_names_(std::move(gene_names)),
      normalized_(normalized) {
    if (cell_ids_.empty() || gene_names_.empty()) {
        throw Error("EmptyMatrix", "matrix has no cells or no genes");
    }
    if (values_.size() != cell_ids_.size() * gene_names_.size()) {
        throw Error("RaggedRow", "value count does not match cells x genes");
    }
    check_unique(cell_ids_, "cell id");
    check_unique(gene_names_, "gene name");
    for (double v : values_) {
        if (std::isnan(v)) throw Error("NonNumericCell", "NaN entry");
        if (!normalized_ && v < 0.0) throw Error("NegativeValue", "negative entry in raw matrix");
    }
}

std::size_t ExpressionMatrix::gene_index(std::string_view name) const {
    auto it = std::find(gene_names_.begin(), gene_names_.end(), name);
    if (it == gene_names_.end()) throw Error("UnknownGene", "no gene named '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - gene_names_.begin());
}

std::size_t ExpressionMatrix::cell_index(std::string_view id) const {
    auto it = std::find(cell_ids_.begin(), cell_ids_.end(), id);
    if (it == cell_ids_.end()) throw Error("UnknownCell", "no cell with id '" + std::string(id) + "'");
    return static_cast<std::size_t>(it - cell_ids_.begin());
}

std::vector<double> ExpressionMatrix::column(std::size_t gene) const {
    std::vector<double> out(n_cells());
    for (std::size_t p = 0; p < n_cells(); ++p) out[p] = at(p, gene);
    return out;
}

TableFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".tsv" ? TableFormat::tsv : TableFormat::csv;
}

ExpressionMatrix parse_matrix(std::string_view text, TableFormat format) {
    const char sep = format == TableFormat::tsv ? '\t' : ',';

    std::vector<std::string> genes;
    std::vector<std::string> cells;
    std::vector<double> values;
    bool have_header = false;
    std::size_t line_no = 0;

    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) {
            if (end == text.size()) break;
            continue;
        }

        auto fields = split_fields(line, sep);
        if (!have_header) {
            if (trim(fields[0]) != "cell_id") {
                throw Error("MalformedHeader", "first header cell must be 'cell_id' (line 1)");
            }
            for (std::size_t i = 1; i < fields.size(); ++i) genes.emplace_back(trim(fields[i]));
            have_header = true;
            continue;
        }

        if (fields.size() != genes.size() + 1) {
            throw Error("RaggedRow", "line " + std::to_string(line_no) + " has " +
                                         std::to_string(fields.size()) + " fields, expected " +
                                         std::to_string(genes.size() + 1));
        }
        cells.emplace_back(trim(fields[0]));
        for (std::size_t i = 1; i < fields.size(); ++i) {
            auto field = trim(fields[i]);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
                throw Error("NonNumericCell", "line " + std::to_string(line_no) + " column " +
                                                  std::to_string(i + 1) + ": '" + std::string(field) + "'");
            }
            if (v < 0.0) {
                throw Error("NegativeValue", "line " + std::to_string(line_no) + " column " +
                                                 std::to_string(i + 1) + ": " + std::string(field));
            }
            values.push_back(v);
        }
        if (end == text.size()) break;
    }

    if (!have_header || cells.empty() || genes.empty()) {
        throw Error("EmptyMatrix", "no data rows or no gene columns");
    }
    return ExpressionMatrix(std::move(values), std::move(cells), std::move(genes), false);
}

ExpressionMatrix load_matrix(const std::filesystem::path& path, TableFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("FileNotFound", "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_matrix(buffer.str(), format);
}

std::string format_matrix(const ExpressionMatrix& matrix, TableFormat format) {
    const char sep = format == TableFormat::tsv ? '\t' : ',';
    std::string out = "cell_id";
    for (const auto& g : matrix.gene_names()) {
        out += sep;
        out += g;
    }
    out += '\n';
    char buf[64];
    for (std::size_t p = 0; p < matrix.n_cells(); ++p) {
        out += matrix.cell_ids()[p];
        for (double v : matrix.row(p)) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
            out += sep;
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

void write_matrix(const ExpressionMatrix& matrix, const std::filesystem::path& path, TableFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << format_matrix(matrix, format);
}

ExpressionMatrix normalize(const ExpressionMatrix& matrix, const NormalizationSpec& spec) {
    if (matrix.normalized()) throw Error("AlreadyNormalized", "matrix is already normalized");

    const std::size_t m = matrix.n_cells();
    const std::size_t n = matrix.n_genes();
    std::vector<double> values(matrix.values().begin(), matrix.values().end());

    if (spec.method != NormalizationMethod::none) {
        for (double& v : values) v = std::log1p(v);
    }

    auto standardize = [&](auto&& index_of, std::size_t count) {
        double mean = 0.0;
        for (std::size_t i = 0; i < count; ++i) mean += values[index_of(i)];
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            double d = values[index_of(i)] - mean;
            var += d * d;
        }
        var /= static_cast<double>(count);
        double sd = std::sqrt(var);
        // Zero-variance columns become all zeros; the column itself is kept.
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            for (std::size_t i = 0; i < count; ++i) values[index_of(i)] = 0.0;
            return;
        }
        for (std::size_t i = 0; i < count; ++i) {
            double& v = values[index_of(i)];
            v = (v - mean) / sd;
        }
    };

    if (spec.method == NormalizationMethod::log1p_zscore) {
        if (spec.per_gene) {
            for (std::size_t q = 0; q < n; ++q) {
                standardize([=](std::size_t p) { return p * n + q; }, m);
            }
        } else {
            standardize([](std::size_t i) { return i; }, m * n);
        }
    }

    return ExpressionMatrix(std::move(values), matrix.cell_ids(), matrix.gene_names(), true);
}

ValidationReport validate(const ExpressionMatrix& matrix) {
    ValidationReport report;
    const std::size_t m = matrix.n_cells();
    const std::size_t n = matrix.n_genes();
    report.n_cells = m;
    report.n_genes = n;

    auto vals = matrix.values();
    report.min_value = *std::min_element(vals.begin(), vals.end());
    report.max_value = *std::max_element(vals.begin(), vals.end());
    double sum = 0.0;
    std::size_t zeros = 0;
    for (double v : vals) {
        sum += v;
        zeros += (v == 0.0);
    }
    report.mean_value = sum / static_cast<double>(vals.size());
    report.fraction_zero = static_cast<double>(zeros) / static_cast<double>(vals.size());

    for (std::size_t q = 0; q < n; ++q) {
        double first = matrix.at(0, q);
        bool constant = true;
        for (std::size_t p = 1; p < m && constant; ++p) constant = matrix.at(p, q) == first;
        if (constant) report.zero_variance_genes.push_back(matrix.gene_names()[q]);
    }
    for (std::size_t p = 0; p < m; ++p) {
        auto row = matrix.row(p);
        if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) {
            report.zero_cells.push_back(matrix.cell_ids()[p]);
        }
    }
    return report;
}

}  // namespace cellscout
