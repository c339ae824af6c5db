#include "cellscout/moe_model.hpp"

#include <algorithm>
#include <cmath>

#include "cellscout/error.hpp"
#include "cellscout/gumbel.hpp"

namespace cellscout {

namespace {

// Backward contributions are reduced over a fixed number of cell chunks so the
// summation order (and hence the bits) does not depend on the thread count.
constexpr std::size_t kGradChunks = 16;

}  // namespace

double MinerConfig::effective_lambda() const {
    if (std::isnan(lambda)) return std::log(static_cast<double>(std::max<std::size_t>(genes_per_expert, 1)));
    return lambda;
}

void MinerConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error("InvalidConfig", what); };
    if (k < 2) fail("k must be >= 2");
    if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
    if (!(temperature_end > 0.0) || !(temperature_start > 0.0)) fail("temperatures must be > 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (!(grad_clip > 0.0)) fail("grad_clip must be > 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (latent_dim < 1 || hidden_dim < 1) fail("layer widths must be >= 1");
    if (bins < 2) fail("bins must be >= 2");
    if (genes_per_expert < 1) fail("genes_per_expert must be >= 1");
    if (!std::isnan(lambda) && !(lambda >= 0.0)) fail("lambda must be >= 0");
}

ParamLayout::ParamLayout(std::size_t n_genes, std::size_t k, std::size_t hidden, std::size_t latent)
    : n_genes_(n_genes), k_(k), hidden_(hidden), latent_(latent) {
    gate_w1 = add("gating.w1", hidden, n_genes);
    gate_b1 = add("gating.b1", hidden, 1);
    gate_w2 = add("gating.w2", k, hidden);
    gate_b2 = add("gating.b2", k, 1);
    for (std::size_t u = 0; u < k; ++u) {
        const std::string prefix = "expert" + std::to_string(u) + ".";
        gene_logits.push_back(add(prefix + "gene_logits", n_genes, 1));
        enc_w1.push_back(add(prefix + "w1", latent, n_genes));
        enc_b1.push_back(add(prefix + "b1", latent, 1));
        enc_w2.push_back(add(prefix + "w2", latent, latent));
        enc_b2.push_back(add(prefix + "b2", latent, 1));
    }
    head_w1 = add("head.w1", latent, latent);
    head_b1 = add("head.b1", latent, 1);
    head_w2 = add("head.w2", 2, latent);
    head_b2 = add("head.b2", 2, 1);
}

std::size_t ParamLayout::add(std::string name, std::size_t rows, std::size_t cols) {
    ParamBlock block{std::move(name), total_, rows, cols};
    total_ += block.size();
    blocks_.push_back(std::move(block));
    return blocks_.back().offset;
}

const ParamBlock& ParamLayout::find(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw Error("UnknownParameter", name);
}

MoEModel::MoEModel(std::size_t n_genes, const MinerConfig& config)
    : layout_(n_genes, config.k, config.hidden_dim, config.latent_dim), params_(layout_.total(), 0.0) {}

void MoEModel::set_params(std::vector<double> params) {
    if (params.size() != layout_.total()) throw Error("DimensionMismatch", "parameter vector has wrong length");
    params_ = std::move(params);
}

void MoEModel::initialize(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](std::size_t offset, std::size_t rows, std::size_t cols, double scale) {
        for (std::size_t i = 0; i < rows * cols; ++i) params_[offset + i] = scale * normal(rng);
    };
    const std::size_t n = layout_.n_genes(), k = layout_.k(), h = layout_.hidden(), l = layout_.latent();
    auto fan_in = [](std::size_t f) { return 1.0 / std::sqrt(static_cast<double>(f)); };

    fill(layout_.gate_w1, h, n, fan_in(n));
    fill(layout_.gate_b1, h, 1, 0.0);
    fill(layout_.gate_w2, k, h, fan_in(h));
    fill(layout_.gate_b2, k, 1, 0.0);
    for (std::size_t u = 0; u < k; ++u) {
        fill(layout_.gene_logits[u], n, 1, 0.01);
        fill(layout_.enc_w1[u], l, n, fan_in(n));
        fill(layout_.enc_b1[u], l, 1, 0.0);
        fill(layout_.enc_w2[u], l, l, fan_in(l));
        // Distinct output offsets keep experts apart in the shared latent space.
        fill(layout_.enc_b2[u], l, 1, 1.0);
    }
    fill(layout_.head_w1, l, l, fan_in(l));
    fill(layout_.head_b1, l, 1, 0.0);
    fill(layout_.head_w2, 2, l, fan_in(l));
    fill(layout_.head_b2, 2, 1, 0.0);
}

std::vector<double> MoEModel::gene_gate_probabilities() const {
    const std::size_t n = layout_.n_genes(), k = layout_.k();
    std::vector<double> out(k * n);
    for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t q = 0; q < n; ++q) out[u * n + q] = sigmoid(params_[layout_.gene_logits[u] + q]);
    }
    return out;
}

ForwardOutput MoEModel::prepare(const ExpressionMatrix& matrix, std::span<const std::size_t> cells,
                                double temperature, Mode mode, Rng* rng) const {
    if (matrix.n_genes() != layout_.n_genes()) {
        throw Error("DimensionMismatch", "matrix gene count does not match the model");
    }
    if (!(temperature > 0.0)) throw Error("InvalidTemperature", "temperature must be > 0");
    if (mode == Mode::train && rng == nullptr) throw Error("InvalidArgument", "train mode requires an RNG");
    for (std::size_t c : cells) {
        if (c >= matrix.n_cells()) throw Error("IndexOutOfRange", "cell index " + std::to_string(c));
    }

    ForwardOutput out;
    const std::size_t b = cells.size(), k = layout_.k(), n = layout_.n_genes();
    const std::size_t l = layout_.latent(), h = layout_.hidden();
    out.batch = b;
    out.k = k;
    out.n_genes = n;
    out.latent = l;
    out.hidden = h;
    out.temperature = temperature;
    out.mode = mode;
    out.cells.assign(cells.begin(), cells.end());
    out.gating_logits.assign(b * k, 0.0);
    out.gating_weights.assign(b * k, 0.0);
    out.gene_gates.assign(k * n, 0.0);
    out.latents.assign(b * l, 0.0);
    out.embedding.assign(b * 2, 0.0);
    out.gate_hidden.assign(b * h, 0.0);
    out.expert_hidden.assign(b * k * l, 0.0);
    out.expert_latent.assign(b * k * l, 0.0);
    out.head_hidden.assign(b * l, 0.0);

    // Noise is drawn serially, gene gates first, so results do not depend on threading.
    for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t q = 0; q < n; ++q) {
            const double a = params_[layout_.gene_logits[u] + q];
            out.gene_gates[u * n + q] =
                mode == Mode::train ? sigmoid((a + sample_logistic(*rng)) / temperature) : sigmoid(a);
        }
    }
    if (mode == Mode::train) {
        out.gating_noise.resize(b * k);
        for (double& g : out.gating_noise) g = sample_gumbel(*rng);
    }
    return out;
}

void MoEModel::forward_cell(const ExpressionMatrix& matrix, ForwardOutput& out, std::size_t b) const {
    const std::size_t k = out.k, n = out.n_genes, l = out.latent, h = out.hidden;
    const double* p = params_.data();
    const auto x = matrix.row(out.cells[b]);

    double* gh = out.gate_hidden.data() + b * h;
    for (std::size_t j = 0; j < h; ++j) {
        const double* wrow = p + layout_.gate_w1 + j * n;
        double s = p[layout_.gate_b1 + j];
        for (std::size_t q = 0; q < n; ++q) s += wrow[q] * x[q];
        gh[j] = std::tanh(s);
    }
    double* logits = out.gating_logits.data() + b * k;
    for (std::size_t u = 0; u < k; ++u) {
        const double* wrow = p + layout_.gate_w2 + u * h;
        double s = p[layout_.gate_b2 + u];
        for (std::size_t j = 0; j < h; ++j) s += wrow[j] * gh[j];
        logits[u] = s;
    }
    {
        std::span<const double> noise;
        double tau = 1.0;
        if (out.mode == Mode::train) {
            noise = std::span<const double>(out.gating_noise.data() + b * k, k);
            tau = out.temperature;
        }
        auto w = noisy_softmax(std::span<const double>(logits, k), noise, tau);
        std::copy(w.begin(), w.end(), out.gating_weights.begin() + static_cast<std::ptrdiff_t>(b * k));
    }

    std::vector<double> xg(n);
    const double* w = out.gating_weights.data() + b * k;
    double* lat = out.latents.data() + b * l;
    for (std::size_t u = 0; u < k; ++u) {
        const double* z = out.gene_gates.data() + u * n;
        for (std::size_t q = 0; q < n; ++q) xg[q] = z[q] * x[q];
        double* eh = out.expert_hidden.data() + (b * k + u) * l;
        double* el = out.expert_latent.data() + (b * k + u) * l;
        for (std::size_t r = 0; r < l; ++r) {
            const double* wrow = p + layout_.enc_w1[u] + r * n;
            double s = p[layout_.enc_b1[u] + r];
            for (std::size_t q = 0; q < n; ++q) s += wrow[q] * xg[q];
            eh[r] = std::tanh(s);
        }
        for (std::size_t r = 0; r < l; ++r) {
            const double* wrow = p + layout_.enc_w2[u] + r * l;
            double s = p[layout_.enc_b2[u] + r];
            for (std::size_t c = 0; c < l; ++c) s += wrow[c] * eh[c];
            el[r] = s;
            lat[r] += w[u] * s;
        }
    }

    double* hh = out.head_hidden.data() + b * l;
    for (std::size_t r = 0; r < l; ++r) {
        const double* wrow = p + layout_.head_w1 + r * l;
        double s = p[layout_.head_b1 + r];
        for (std::size_t c = 0; c < l; ++c) s += wrow[c] * lat[c];
        hh[r] = std::tanh(s);
    }
    for (std::size_t d = 0; d < 2; ++d) {
        const double* wrow = p + layout_.head_w2 + d * l;
        double s = p[layout_.head_b2 + d];
        for (std::size_t c = 0; c < l; ++c) s += wrow[c] * hh[c];
        out.embedding[b * 2 + d] = s;
    }
}

ForwardOutput MoEModel::forward(const ExpressionMatrix& matrix, std::span<const std::size_t> cells,
                                double temperature, Mode mode, Rng* rng) const {
    ForwardOutput out = prepare(matrix, cells, temperature, mode, rng);
    const auto count = static_cast<std::ptrdiff_t>(out.batch);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < count; ++b) forward_cell(matrix, out, static_cast<std::size_t>(b));
    return out;
}

ForwardOutput MoEModel::forward_serial(const ExpressionMatrix& matrix, std::span<const std::size_t> cells,
                                       double temperature, Mode mode, Rng* rng) const {
    ForwardOutput out = prepare(matrix, cells, temperature, mode, rng);
    for (std::size_t b = 0; b < out.batch; ++b) forward_cell(matrix, out, b);
    return out;
}

void MoEModel::backward_cell(const ExpressionMatrix& matrix, const ForwardOutput& out,
                             const OutputGradients& grads, std::size_t b, std::span<double> grad,
                             std::span<double> dgates) const {
    const std::size_t k = out.k, n = out.n_genes, l = out.latent, h = out.hidden;
    const double* p = params_.data();
    double* g = grad.data();
    const auto x = matrix.row(out.cells[b]);
    const double* w = out.gating_weights.data() + b * k;

    std::vector<double> dw(k);
    for (std::size_t u = 0; u < k; ++u) dw[u] = grads.gating_weights.empty() ? 0.0 : grads.gating_weights[b * k + u];

    const bool has_embedding_grad =
        !grads.embedding.empty() && (grads.embedding[b * 2] != 0.0 || grads.embedding[b * 2 + 1] != 0.0);
    if (has_embedding_grad) {
        const double* de = grads.embedding.data() + b * 2;
        const double* hh = out.head_hidden.data() + b * l;
        const double* lat = out.latents.data() + b * l;

        std::vector<double> dpre(l, 0.0), dlat(l, 0.0);
        for (std::size_t d = 0; d < 2; ++d) {
            g[layout_.head_b2 + d] += de[d];
            for (std::size_t c = 0; c < l; ++c) {
                g[layout_.head_w2 + d * l + c] += de[d] * hh[c];
                dpre[c] += de[d] * p[layout_.head_w2 + d * l + c];
            }
        }
        for (std::size_t r = 0; r < l; ++r) {
            dpre[r] *= 1.0 - hh[r] * hh[r];
            g[layout_.head_b1 + r] += dpre[r];
            for (std::size_t c = 0; c < l; ++c) {
                g[layout_.head_w1 + r * l + c] += dpre[r] * lat[c];
                dlat[c] += dpre[r] * p[layout_.head_w1 + r * l + c];
            }
        }

        std::vector<double> del(l), dpre_e(l), xg(n);
        for (std::size_t u = 0; u < k; ++u) {
            const double* eh = out.expert_hidden.data() + (b * k + u) * l;
            const double* el = out.expert_latent.data() + (b * k + u) * l;
            const double* z = out.gene_gates.data() + u * n;
            for (std::size_t r = 0; r < l; ++r) {
                dw[u] += dlat[r] * el[r];
                del[r] = w[u] * dlat[r];
            }
            std::fill(dpre_e.begin(), dpre_e.end(), 0.0);
            for (std::size_t r = 0; r < l; ++r) {
                g[layout_.enc_b2[u] + r] += del[r];
                for (std::size_t c = 0; c < l; ++c) {
                    g[layout_.enc_w2[u] + r * l + c] += del[r] * eh[c];
                    dpre_e[c] += del[r] * p[layout_.enc_w2[u] + r * l + c];
                }
            }
            for (std::size_t q = 0; q < n; ++q) xg[q] = z[q] * x[q];
            double* dz = dgates.data() + u * n;
            for (std::size_t r = 0; r < l; ++r) {
                dpre_e[r] *= 1.0 - eh[r] * eh[r];
                g[layout_.enc_b1[u] + r] += dpre_e[r];
                const double* wrow = p + layout_.enc_w1[u] + r * n;
                double* grow = g + layout_.enc_w1[u] + r * n;
                for (std::size_t q = 0; q < n; ++q) {
                    grow[q] += dpre_e[r] * xg[q];
                    dz[q] += dpre_e[r] * wrow[q] * x[q];
                }
            }
        }
    }

    // Softmax Jacobian, then the temperature scaling of train mode.
    double wdot = 0.0;
    for (std::size_t u = 0; u < k; ++u) wdot += w[u] * dw[u];
    const double inv_tau = out.mode == Mode::train ? 1.0 / out.temperature : 1.0;
    const double* gh = out.gate_hidden.data() + b * h;
    std::vector<double> dgh(h, 0.0);
    for (std::size_t u = 0; u < k; ++u) {
        const double dlogit = w[u] * (dw[u] - wdot) * inv_tau;
        if (dlogit == 0.0) continue;
        g[layout_.gate_b2 + u] += dlogit;
        for (std::size_t j = 0; j < h; ++j) {
            g[layout_.gate_w2 + u * h + j] += dlogit * gh[j];
            dgh[j] += dlogit * p[layout_.gate_w2 + u * h + j];
        }
    }
    for (std::size_t j = 0; j < h; ++j) {
        const double dpre = dgh[j] * (1.0 - gh[j] * gh[j]);
        if (dpre == 0.0) continue;
        g[layout_.gate_b1 + j] += dpre;
        double* grow = g + layout_.gate_w1 + j * n;
        for (std::size_t q = 0; q < n; ++q) grow[q] += dpre * x[q];
    }
}

void MoEModel::finish_backward(const ForwardOutput& out, const OutputGradients& grads,
                               std::span<const double> dgates, std::span<double> grad) const {
    const std::size_t k = out.k, n = out.n_genes;
    const double inv_tau = out.mode == Mode::train ? 1.0 / out.temperature : 1.0;
    for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t q = 0; q < n; ++q) {
            const double z = out.gene_gates[u * n + q];
            double dz = dgates[u * n + q];
            if (!grads.gene_gates.empty()) dz += grads.gene_gates[u * n + q];
            grad[layout_.gene_logits[u] + q] += dz * z * (1.0 - z) * inv_tau;
        }
    }
}

namespace {

struct ChunkPlan {
    std::size_t chunks;
    std::size_t per_chunk;
};

ChunkPlan plan_chunks(std::size_t batch) {
    const std::size_t chunks = std::max<std::size_t>(1, std::min(kGradChunks, batch));
    return {chunks, (batch + chunks - 1) / chunks};
}

}  // namespace

std::vector<double> MoEModel::backward(const ExpressionMatrix& matrix, const ForwardOutput& out,
                                       const OutputGradients& grads) const {
    const std::size_t total = layout_.total(), kn = out.k * out.n_genes;
    const auto plan = plan_chunks(out.batch);
    std::vector<double> buffers(plan.chunks * (total + kn), 0.0);

    const auto count = static_cast<std::ptrdiff_t>(plan.chunks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < count; ++c) {
        const auto chunk = static_cast<std::size_t>(c);
        std::span<double> grad(buffers.data() + chunk * (total + kn), total);
        std::span<double> dgates(buffers.data() + chunk * (total + kn) + total, kn);
        const std::size_t end = std::min(out.batch, (chunk + 1) * plan.per_chunk);
        for (std::size_t b = chunk * plan.per_chunk; b < end; ++b) backward_cell(matrix, out, grads, b, grad, dgates);
    }

    std::vector<double> result(total + kn, 0.0);
    for (std::size_t c = 0; c < plan.chunks; ++c) {
        const double* src = buffers.data() + c * (total + kn);
        for (std::size_t i = 0; i < total + kn; ++i) result[i] += src[i];
    }
    std::vector<double> grad(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(total));
    finish_backward(out, grads, std::span<const double>(result.data() + total, kn), grad);
    return grad;
}

std::vector<double> MoEModel::backward_serial(const ExpressionMatrix& matrix, const ForwardOutput& out,
                                              const OutputGradients& grads) const {
    const std::size_t total = layout_.total(), kn = out.k * out.n_genes;
    const auto plan = plan_chunks(out.batch);
    std::vector<double> buffers(plan.chunks * (total + kn), 0.0);
    for (std::size_t chunk = 0; chunk < plan.chunks; ++chunk) {
        std::span<double> grad(buffers.data() + chunk * (total + kn), total);
        std::span<double> dgates(buffers.data() + chunk * (total + kn) + total, kn);
        const std::size_t end = std::min(out.batch, (chunk + 1) * plan.per_chunk);
        for (std::size_t b = chunk * plan.per_chunk; b < end; ++b) backward_cell(matrix, out, grads, b, grad, dgates);
    }
    std::vector<double> result(total + kn, 0.0);
    for (std::size_t c = 0; c < plan.chunks; ++c) {
        const double* src = buffers.data() + c * (total + kn);
        for (std::size_t i = 0; i < total + kn; ++i) result[i] += src[i];
    }
    std::vector<double> grad(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(total));
    finish_backward(out, grads, std::span<const double>(result.data() + total, kn), grad);
    return grad;
}

}  // namespace cellscout
