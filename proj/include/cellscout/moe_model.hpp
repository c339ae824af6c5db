#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cellscout/expression_matrix.hpp"

/**
 * @file moe_model.hpp
 * @brief Mixture-of-experts network: a gating map from a cell's expression
 * vector to k expert weights, k experts each owning a per-gene selection gate
 * and an encoder, and a shared head mapping the weighted expert latents to 2D.
 *
 * All parameters live in one flat vector whose block order is fixed by
 * `ParamLayout`; serialization, gradient checks and the optimizer work on that
 * vector directly.
 */

namespace cellscout {

using Rng = std::mt19937_64;

struct MinerConfig {
    std::size_t k = 8;
    /// Weight of the information-retention term. NaN means "log(genes_per_expert)".
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double gamma = 0.1;
    double beta = 1.0;
    double learning_rate = 0.1;
    std::size_t epochs = 200;
    std::size_t batch_size = 256;
    double temperature_start = 1.0;
    double temperature_end = 0.1;
    std::size_t genes_per_expert = 32;
    std::size_t latent_dim = 16;
    std::size_t hidden_dim = 64;
    std::uint64_t seed = 1;
    std::size_t bins = 16;
    std::size_t crc_max_pairs = 4096;
    double grad_clip = 10.0;

    double effective_lambda() const;
    /// Throws `InvalidConfig` when an invariant is violated.
    void validate() const;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 1;
    std::size_t size() const { return rows * cols; }
};

class ParamLayout {
public:
    ParamLayout() = default;
    ParamLayout(std::size_t n_genes, std::size_t k, std::size_t hidden, std::size_t latent);

    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    std::size_t total() const { return total_; }
    const ParamBlock& find(const std::string& name) const;

    std::size_t n_genes() const { return n_genes_; }
    std::size_t k() const { return k_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t latent() const { return latent_; }

    // Offsets of each block, cached for the hot loops.
    std::size_t gate_w1 = 0, gate_b1 = 0, gate_w2 = 0, gate_b2 = 0;
    std::vector<std::size_t> gene_logits, enc_w1, enc_b1, enc_w2, enc_b2;
    std::size_t head_w1 = 0, head_b1 = 0, head_w2 = 0, head_b2 = 0;

private:
    std::size_t add(std::string name, std::size_t rows, std::size_t cols);

    std::vector<ParamBlock> blocks_;
    std::size_t total_ = 0;
    std::size_t n_genes_ = 0, k_ = 0, hidden_ = 0, latent_ = 0;
};

enum class Mode { train, eval };

/// Per-batch forward results plus the intermediates the backward pass needs.
struct ForwardOutput {
    std::size_t batch = 0;
    std::size_t k = 0;
    std::size_t n_genes = 0;
    std::size_t latent = 0;
    std::size_t hidden = 0;
    double temperature = 1.0;
    Mode mode = Mode::eval;

    std::vector<std::size_t> cells;       ///< matrix row of each batch entry
    std::vector<double> gating_logits;    ///< batch x k
    std::vector<double> gating_noise;     ///< batch x k Gumbel draws (train mode only)
    std::vector<double> gating_weights;   ///< batch x k, rows sum to 1
    std::vector<double> gene_gates;       ///< k x n, in [0,1]
    std::vector<double> latents;          ///< batch x latent (weighted combination)
    std::vector<double> embedding;        ///< batch x 2

    // Intermediates.
    std::vector<double> gate_hidden;      ///< batch x hidden
    std::vector<double> expert_hidden;    ///< batch x k x latent
    std::vector<double> expert_latent;    ///< batch x k x latent
    std::vector<double> head_hidden;      ///< batch x latent
};

/// Upstream gradients of a scalar loss with respect to the forward outputs.
struct OutputGradients {
    std::vector<double> gating_weights;   ///< batch x k
    std::vector<double> gene_gates;       ///< k x n
    std::vector<double> embedding;        ///< batch x 2 (may be empty = zero)
};

class MoEModel {
public:
    MoEModel() = default;
    MoEModel(std::size_t n_genes, const MinerConfig& config);

    /// Random initialization, deterministic for a given RNG state.
    void initialize(Rng& rng);

    const ParamLayout& layout() const { return layout_; }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }
    void set_params(std::vector<double> params);

    std::size_t n_genes() const { return layout_.n_genes(); }
    std::size_t k() const { return layout_.k(); }

    /// Eval-mode gene-gate probabilities, k x n.
    std::vector<double> gene_gate_probabilities() const;

    /**
     * Runs the network on the given matrix rows. In train mode the gating
     * weights are Gumbel-Softmax samples and the gene gates are relaxed
     * Bernoulli samples, both at `temperature`; in eval mode both are the
     * noise-free probabilities and `rng` is not touched.
     *
     * Throws `IndexOutOfRange` for a bad row index.
     */
    ForwardOutput forward(const ExpressionMatrix& matrix, std::span<const std::size_t> cells,
                          double temperature, Mode mode, Rng* rng = nullptr) const;

    /// Accumulates d(loss)/d(params) for the given upstream gradients.
    std::vector<double> backward(const ExpressionMatrix& matrix, const ForwardOutput& out,
                                 const OutputGradients& grads) const;

    /// Single-threaded reference versions; must agree bitwise with the above.
    ForwardOutput forward_serial(const ExpressionMatrix& matrix, std::span<const std::size_t> cells,
                                 double temperature, Mode mode, Rng* rng = nullptr) const;
    std::vector<double> backward_serial(const ExpressionMatrix& matrix, const ForwardOutput& out,
                                        const OutputGradients& grads) const;

private:
    ForwardOutput prepare(const ExpressionMatrix& matrix, std::span<const std::size_t> cells,
                          double temperature, Mode mode, Rng* rng) const;
    void forward_cell(const ExpressionMatrix& matrix, ForwardOutput& out, std::size_t b) const;
    void backward_cell(const ExpressionMatrix& matrix, const ForwardOutput& out, const OutputGradients& grads,
                       std::size_t b, std::span<double> grad, std::span<double> dgates) const;
    void finish_backward(const ForwardOutput& out, const OutputGradients& grads, std::span<const double> dgates,
                         std::span<double> grad) const;

    ParamLayout layout_;
    std::vector<double> params_;
};

}  // namespace cellscout
