#include "cellscout/miner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cellscout/analytics.hpp"
#include "cellscout/error.hpp"

namespace cellscout {

namespace {

// delta is estimated on at most this many cells (evenly strided) to keep the
// per-epoch neighbor search bounded on large inputs.
constexpr std::size_t kDeltaSampleCap = 2000;

std::vector<std::size_t> all_cells(const ExpressionMatrix& matrix) {
    std::vector<std::size_t> cells(matrix.n_cells());
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    return cells;
}

std::vector<std::size_t> delta_sample(std::size_t m) {
    std::vector<std::size_t> cells;
    if (m <= kDeltaSampleCap) {
        cells.resize(m);
        std::iota(cells.begin(), cells.end(), std::size_t{0});
        return cells;
    }
    for (std::size_t i = 0; i < kDeltaSampleCap; ++i) cells.push_back(i * m / kDeltaSampleCap);
    return cells;
}

double temperature_at(const MinerConfig& config, std::size_t epoch) {
    if (config.epochs <= 1) return config.temperature_start;
    const double t = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
    return config.temperature_start * std::pow(config.temperature_end / config.temperature_start, t);
}

void clip_norm(std::vector<double>& grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grad) g *= scale;
    }
}

struct EvalObjective {
    double delta = 0.0;
    std::vector<CellPair> pairs;
};

EvalObjective fix_eval_objective(const MoEModel& model, const ExpressionMatrix& matrix, const MinerConfig& config) {
    const auto cells = all_cells(matrix);
    auto out = model.forward(matrix, cells, 1.0, Mode::eval);
    EvalObjective obj;
    obj.delta = compute_delta({out.embedding, 2});
    obj.pairs = select_crc_pairs(out.embedding, obj.delta, config.crc_max_pairs);
    return obj;
}

}  // namespace

TrainedModel train(const ExpressionMatrix& matrix, const MinerConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (!matrix.normalized()) throw Error("NotNormalized", "training expects a normalized matrix");
    if (matrix.n_cells() < 6) throw Error("TooFewCells", "training needs at least 6 cells");
    if (matrix.n_genes() < 2) throw Error("TooFewGenes", "training needs at least 2 genes");

    const std::size_t m = matrix.n_cells();
    Rng rng(config.seed);
    MoEModel model(matrix.n_genes(), config);
    model.initialize(rng);
    LossContext context = LossContext::build(matrix, config);

    std::vector<std::size_t> order = all_cells(matrix);
    const std::vector<std::size_t> delta_cells = delta_sample(m);
    const std::size_t batch_size = std::min(config.batch_size, m);

    std::vector<LossBreakdown> history;
    history.reserve(config.epochs);
    auto params = std::vector<double>(model.params().begin(), model.params().end());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double tau = temperature_at(config, epoch);
        const auto probe = model.forward(matrix, delta_cells, 1.0, Mode::eval);
        const double delta = compute_delta({probe.embedding, 2});
        context.delta = delta;

        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown epoch_loss;
        for (std::size_t start = 0; start < m; start += batch_size) {
            const std::size_t end = std::min(m, start + batch_size);
            std::span<const std::size_t> batch(order.data() + start, end - start);
            const auto max_pairs = static_cast<std::size_t>(
                std::ceil(static_cast<double>(config.crc_max_pairs) * static_cast<double>(batch.size()) /
                          static_cast<double>(m)));

            auto out = model.forward(matrix, batch, tau, Mode::train, &rng);
            auto pairs = select_crc_pairs(out.embedding, delta, max_pairs, &rng);
            auto loss = compute_loss(out, matrix, context, pairs);
            if (!std::isfinite(loss.breakdown.total)) {
                throw Error("NonFiniteLoss", "loss became non-finite at epoch " + std::to_string(epoch));
            }
            auto grad = model.backward(matrix, out, loss.grads);
            clip_norm(grad, config.grad_clip);
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
            model.set_params(params);

            const double weight = static_cast<double>(batch.size()) / static_cast<double>(m);
            epoch_loss.f_score += weight * loss.breakdown.f_score;
            epoch_loss.mir += weight * loss.breakdown.mir;
            epoch_loss.crc_penalty += weight * loss.breakdown.crc_penalty;
        }
        epoch_loss.total = -(epoch_loss.f_score + context.lambda * epoch_loss.mir) + config.beta * epoch_loss.crc_penalty;
        history.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, config.epochs, epoch_loss);
    }

    TrainedModel trained;
    trained.config = config;
    trained.model = std::move(model);
    trained.history = std::move(history);
    trained.associations = extract_associations(trained.model, matrix);
    trained.embedding = embed_with_model(trained.model, matrix);
    trained.informativeness = informativeness(trained.associations, config.k);
    return trained;
}

std::vector<AssociationRelationship> extract_associations(const MoEModel& model, const ExpressionMatrix& matrix) {
    const std::size_t k = model.k(), n = model.n_genes(), m = matrix.n_cells();
    const auto cells = all_cells(matrix);
    const auto out = model.forward(matrix, cells, 1.0, Mode::eval);
    const auto gates = model.gene_gate_probabilities();

    std::vector<AssociationRelationship> result(k);
    for (std::size_t u = 0; u < k; ++u) {
        auto& a = result[u];
        a.index = u;
        a.relevance.resize(m);
        for (std::size_t p = 0; p < m; ++p) a.relevance[p] = out.gating_weights[p * k + u];
        a.importance.assign(gates.begin() + static_cast<std::ptrdiff_t>(u * n),
                            gates.begin() + static_cast<std::ptrdiff_t>((u + 1) * n));
        const double mx = *std::max_element(a.importance.begin(), a.importance.end());
        for (double& v : a.importance) v = mx > 0.0 ? v / mx : 0.0;
    }
    return result;
}

Embedding2D embed_with_model(const MoEModel& model, const ExpressionMatrix& matrix) {
    if (matrix.n_genes() != model.n_genes()) {
        throw Error("DimensionMismatch", "matrix has " + std::to_string(matrix.n_genes()) + " genes, model expects " +
                                             std::to_string(model.n_genes()));
    }
    const auto cells = all_cells(matrix);
    auto out = model.forward(matrix, cells, 1.0, Mode::eval);
    return Embedding2D::from_coords(std::move(out.embedding), EmbeddingSource::model);
}

Embedding2D embed_with_model(const TrainedModel& trained, const ExpressionMatrix& matrix) {
    return embed_with_model(trained.model, matrix);
}

double informativeness(const std::vector<std::size_t>& labels, std::size_t k) {
    if (k < 2) throw Error("InvalidArgument", "informativeness needs k >= 2");
    if (labels.empty()) return 0.0;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : labels) {
        if (l >= k) throw Error("InvalidArgument", "label out of range");
        counts[l] += 1;
    }
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(labels.size());
        h -= p * std::log2(p);
    }
    return std::clamp(h / std::log2(static_cast<double>(k)), 0.0, 1.0);
}

double informativeness(const std::vector<AssociationRelationship>& associations, std::size_t k) {
    return informativeness(dominant_labels(associations), k);
}

std::vector<double> eval_loss_gradient(const MoEModel& model, const ExpressionMatrix& matrix, const MinerConfig& config,
                                       LossBreakdown* breakdown) {
    auto context = LossContext::build(matrix, config);
    const auto objective = fix_eval_objective(model, matrix, config);
    context.delta = objective.delta;
    const auto cells = all_cells(matrix);
    auto out = model.forward(matrix, cells, 1.0, Mode::eval);
    auto loss = compute_loss(out, matrix, context, objective.pairs);
    if (breakdown != nullptr) *breakdown = loss.breakdown;
    return model.backward(matrix, out, loss.grads);
}

GradientCheckResult gradient_check(const MoEModel& model, const ExpressionMatrix& matrix, const MinerConfig& config,
                                   const std::vector<std::size_t>& param_subset, double h) {
    auto context = LossContext::build(matrix, config);
    const auto objective = fix_eval_objective(model, matrix, config);
    context.delta = objective.delta;
    const auto cells = all_cells(matrix);

    auto loss_at = [&](const MoEModel& probe) {
        auto out = probe.forward(matrix, cells, 1.0, Mode::eval);
        return compute_loss(out, matrix, context, objective.pairs).breakdown.total;
    };

    auto out = model.forward(matrix, cells, 1.0, Mode::eval);
    const auto loss = compute_loss(out, matrix, context, objective.pairs);
    const auto analytic = model.backward(matrix, out, loss.grads);

    std::vector<std::size_t> indices = param_subset;
    if (indices.empty()) {
        indices.resize(model.layout().total());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
    }

    GradientCheckResult result;
    MoEModel probe = model;
    std::vector<double> params(model.params().begin(), model.params().end());
    for (std::size_t idx : indices) {
        if (idx >= params.size()) throw Error("IndexOutOfRange", "parameter index " + std::to_string(idx));
        const double saved = params[idx];
        params[idx] = saved + h;
        probe.set_params(params);
        const double up = loss_at(probe);
        params[idx] = saved - h;
        probe.set_params(params);
        const double down = loss_at(probe);
        params[idx] = saved;

        const double numeric = (up - down) / (2.0 * h);
        const double abs_err = std::abs(analytic[idx] - numeric);
        const double scale = std::max({std::abs(analytic[idx]), std::abs(numeric), 1e-6});
        result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
        result.max_relative_error = std::max(result.max_relative_error, abs_err / scale);
        ++result.checked;
    }
    return result;
}

KSweepReport select_k(const ExpressionMatrix& matrix, const MinerConfig& config_template,
                      const std::vector<std::size_t>& k_candidates, double epsilon,
                      const std::function<void(const KSweepRow&)>& on_row) {
    if (k_candidates.empty()) throw Error("InvalidArgument", "no k candidates");
    for (std::size_t i = 0; i < k_candidates.size(); ++i) {
        if (k_candidates[i] < 2) throw Error("InvalidArgument", "k candidates must be >= 2");
        if (i > 0 && k_candidates[i] <= k_candidates[i - 1]) {
            throw Error("InvalidArgument", "k candidates must be strictly ascending");
        }
    }

    KSweepReport report;
    report.epsilon = epsilon;
    for (std::size_t k : k_candidates) {
        KSweepRow row;
        row.k = k;
        try {
            MinerConfig config = config_template;
            config.k = k;
            auto trained = train(matrix, config);
            row.informativeness = trained.informativeness;
            row.final_loss = trained.history.back().total;
        } catch (const Error& e) {
            row.error = e.code();
        }
        if (on_row) on_row(row);
        report.rows.push_back(std::move(row));
    }

    double best = -1.0;
    for (const auto& row : report.rows) {
        if (row.informativeness) best = std::max(best, *row.informativeness);
    }
    if (best < 0.0) throw Error("SweepFailed", "every k candidate failed to train");
    for (const auto& row : report.rows) {
        if (row.informativeness && *row.informativeness >= best - epsilon) {
            report.chosen_k = row.k;
            break;
        }
    }
    return report;
}

nlohmann::json config_to_json(const MinerConfig& c) {
    nlohmann::json j;
    j["k"] = c.k;
    j["lambda"] = c.effective_lambda();
    j["gamma"] = c.gamma;
    j["beta"] = c.beta;
    j["learning_rate"] = c.learning_rate;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["temperature_start"] = c.temperature_start;
    j["temperature_end"] = c.temperature_end;
    j["genes_per_expert"] = c.genes_per_expert;
    j["latent_dim"] = c.latent_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["seed"] = c.seed;
    j["bins"] = c.bins;
    j["crc_max_pairs"] = c.crc_max_pairs;
    j["grad_clip"] = c.grad_clip;
    return j;
}

MinerConfig config_from_json(const nlohmann::json& j) {
    MinerConfig c;
    if (!j.is_object()) throw Error("InvalidConfig", "config must be a JSON object");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        get("k", c.k);
        get("lambda", c.lambda);
        get("gamma", c.gamma);
        get("beta", c.beta);
        get("learning_rate", c.learning_rate);
        get("epochs", c.epochs);
        get("batch_size", c.batch_size);
        get("temperature_start", c.temperature_start);
        get("temperature_end", c.temperature_end);
        get("genes_per_expert", c.genes_per_expert);
        get("latent_dim", c.latent_dim);
        get("hidden_dim", c.hidden_dim);
        get("seed", c.seed);
        get("bins", c.bins);
        get("crc_max_pairs", c.crc_max_pairs);
        get("grad_clip", c.grad_clip);
    } catch (const nlohmann::json::exception& e) {
        throw Error("InvalidConfig", e.what());
    }
    return c;
}

nlohmann::json to_json(const LossBreakdown& loss) {
    return {{"f_score", loss.f_score}, {"mir", loss.mir}, {"crc_penalty", loss.crc_penalty}, {"total", loss.total}};
}

nlohmann::json to_json(const TrainedModel& trained) {
    nlohmann::json j;
    j["version"] = kModelVersion;
    j["config"] = config_to_json(trained.config);

    const auto& layout = trained.model.layout();
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : layout.blocks()) {
        blocks.push_back({{"name", b.name}, {"offset", b.offset}, {"rows", b.rows}, {"cols", b.cols}});
    }
    j["layout"] = {{"n_genes", layout.n_genes()},
                   {"k", layout.k()},
                   {"hidden", layout.hidden()},
                   {"latent", layout.latent()},
                   {"total", layout.total()},
                   {"blocks", blocks}};
    j["params"] = std::vector<double>(trained.model.params().begin(), trained.model.params().end());

    nlohmann::json assoc = nlohmann::json::array();
    for (const auto& a : trained.associations) {
        assoc.push_back({{"index", a.index},
                         {"relevance", a.relevance},
                         {"importance", a.importance},
                         {"color", a.color},
                         {"annotation", a.annotation}});
    }
    j["associations"] = assoc;
    j["embedding"] = trained.embedding.coords;
    j["informativeness"] = trained.informativeness;
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : trained.history) history.push_back(to_json(h));
    j["history"] = history;
    return j;
}

TrainedModel trained_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<std::string>() != kModelVersion) {
            throw Error("UnsupportedVersion", "expected " + std::string(kModelVersion));
        }
        TrainedModel t;
        t.config = config_from_json(j.at("config"));
        const auto& layout = j.at("layout");
        MinerConfig shape = t.config;
        shape.k = layout.at("k").get<std::size_t>();
        shape.hidden_dim = layout.at("hidden").get<std::size_t>();
        shape.latent_dim = layout.at("latent").get<std::size_t>();
        t.model = MoEModel(layout.at("n_genes").get<std::size_t>(), shape);
        t.model.set_params(j.at("params").get<std::vector<double>>());
        for (const auto& a : j.at("associations")) {
            AssociationRelationship r;
            r.index = a.at("index").get<std::size_t>();
            r.relevance = a.at("relevance").get<std::vector<double>>();
            r.importance = a.at("importance").get<std::vector<double>>();
            r.color = a.value("color", "");
            r.annotation = a.value("annotation", "");
            t.associations.push_back(std::move(r));
        }
        t.embedding = Embedding2D::from_coords(j.at("embedding").get<std::vector<double>>(), EmbeddingSource::model);
        t.informativeness = j.at("informativeness").get<double>();
        for (const auto& h : j.at("history")) {
            t.history.push_back({h.at("f_score").get<double>(), h.at("mir").get<double>(),
                                 h.at("crc_penalty").get<double>(), h.at("total").get<double>()});
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedModel", e.what());
    }
}

nlohmann::json to_json(const KSweepReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row = {{"k", r.k}};
        row["informativeness"] = r.informativeness ? nlohmann::json(*r.informativeness) : nlohmann::json(nullptr);
        row["final_loss"] = r.final_loss ? nlohmann::json(*r.final_loss) : nlohmann::json(nullptr);
        if (!r.error.empty()) row["error"] = r.error;
        rows.push_back(row);
    }
    return {{"rows", rows}, {"chosen_k", report.chosen_k}, {"epsilon", report.epsilon}};
}

std::string format_sweep_table(const KSweepReport& report) {
    std::ostringstream out;
    out << "k\tinformativeness\tfinal_loss\n";
    out.setf(std::ios::fixed);
    out.precision(4);
    for (const auto& r : report.rows) {
        out << r.k << '\t';
        if (r.informativeness) {
            out << *r.informativeness << '\t' << *r.final_loss << '\n';
        } else {
            out << "failed\t" << r.error << '\n';
        }
    }
    out << "chosen k: " << report.chosen_k << '\n';
    return out.str();
}

}  // namespace cellscout
