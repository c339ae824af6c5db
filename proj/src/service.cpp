#include "cellscout/service.hpp"

#include <charconv>
#include <set>

#include "cellscout/error.hpp"
#include "cellscout/loss.hpp"

namespace cellscout {

namespace {

using nlohmann::json;
using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

const std::set<std::string> kNotFound = {"UnknownDataset", "UnknownRegion", "UnknownJob", "UnknownAssociation", "UnknownCard",
                                         "NotTrained"};
const std::set<std::string> kBadRequest = {"InvalidJson", "InvalidArgument", "InvalidConfig", "MissingField"};

void send(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send(res, {{"error", code}, {"message", message}}, status);
}

Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
        try {
            inner(req, res);
        } catch (const Error& e) {
            send_error(res, status_for(e.code(), req.method), e.code(), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "InvalidJson", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "InternalError", e.what());
        }
    };
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw Error("InvalidJson", "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw Error("InvalidJson", e.what());
    }
}

std::size_t parse_index(const std::string& text, const std::string& what) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw Error("InvalidArgument", "bad " + what + " '" + text + "'");
    return v;
}

double parse_real(const std::string& text, const std::string& what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw Error("InvalidArgument", "bad " + what + " '" + text + "'");
    return v;
}

std::size_t association_index(const std::string& text, const TrainedModel& model) {
    std::size_t u = 0;
    try {
        u = parse_index(text, "association index");
    } catch (const Error&) {
        throw Error("UnknownAssociation", "association '" + text + "'");
    }
    if (u >= model.associations.size()) throw Error("UnknownAssociation", "association " + text);
    return u;
}

std::vector<std::size_t> cells_from_json(const json& ids, const ExpressionMatrix& matrix) {
    if (!ids.is_array()) throw Error("InvalidArgument", "cell_ids must be an array");
    std::vector<std::size_t> cells;
    for (const auto& c : ids) {
        if (c.is_number_unsigned() || c.is_number_integer()) {
            const auto v = c.get<long long>();
            if (v < 0 || static_cast<std::size_t>(v) >= matrix.n_cells()) {
                throw Error("IndexOutOfRange", "cell index " + std::to_string(v));
            }
            cells.push_back(static_cast<std::size_t>(v));
        } else if (c.is_string()) {
            cells.push_back(matrix.cell_index(c.get<std::string>()));
        } else {
            throw Error("InvalidArgument", "cell_ids entries must be indices or ids");
        }
    }
    return cells;
}

json gene_list(const std::vector<std::pair<std::string, double>>& genes) {
    json out = json::array();
    for (const auto& [g, imp] : genes) out.push_back({{"gene", g}, {"importance", imp}});
    return out;
}

json embedding_json(const Embedding2D& e, const ExpressionMatrix& matrix) {
    json coords = json::array(), polar = json::array();
    for (std::size_t p = 0; p < e.size(); ++p) {
        coords.push_back({e.coords[2 * p], e.coords[2 * p + 1]});
        polar.push_back({e.polar[p].r, e.polar[p].theta});
    }
    return {{"source", to_string(e.source)}, {"cell_ids", matrix.cell_ids()}, {"coords", coords}, {"polar", polar}};
}

json region_json(const Region& r, const ExpressionMatrix& matrix) {
    json j = to_json(r, matrix.cell_ids());
    j["cell_indices"] = r.cell_indices;
    return j;
}

json card_json(const HistoryCard& card) {
    json j = to_json(card.result);
    j["card_id"] = card.id;
    j["sequence"] = card.sequence;
    j["positive_region"] = card.positive_region;
    j["negative_region"] = card.negative_region;
    return j;
}

std::vector<std::string> string_list(const json& body, const char* key, bool required) {
    if (!body.contains(key)) {
        if (required) throw Error("MissingField", std::string("missing '") + key + "'");
        return {};
    }
    return body.at(key).get<std::vector<std::string>>();
}

std::string required_string(const json& body, const char* key) {
    if (!body.contains(key) || !body.at(key).is_string()) {
        throw Error("MissingField", std::string("missing string '") + key + "'");
    }
    return body.at(key).get<std::string>();
}

}  // namespace

int status_for(const std::string& code, const std::string& method) {
    if (kNotFound.count(code) != 0) return 404;
    // A gene named in a GET path is a resource id.
    if (code == "UnknownGene" && method == "GET") return 404;
    if (code == "TrainingInProgress") return 409;
    if (kBadRequest.count(code) != 0) return 400;
    return 422;
}

void register_routes(httplib::Server& server, Workspace& ws) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/datasets", guarded([&ws](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& ds : ws.datasets()) list.push_back(ds->summary());
        send(res, list);
    }));

    server.Post("/datasets", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        std::string text = req.body;
        std::string name = req.has_param("name") ? req.get_param_value("name") : "";
        if (req.is_multipart_form_data()) {
            if (!req.has_file("file")) throw Error("MissingField", "multipart field 'file' is required");
            text = req.get_file_value("file").content;
            if (req.has_file("name")) name = req.get_file_value("name").content;
            if (name.empty()) name = req.get_file_value("file").filename;
        }
        try {
            auto ds = ws.ingest(text, name);
            send(res, {{"dataset_id", ds->id()}}, 201);
        } catch (const Error& e) {
            send_error(res, e.code() == "ReadOnlyWorkspace" ? 409 : 400, e.code(), e.what());
        }
    }));

    server.Get("/datasets/:id", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        send(res, ws.dataset(req.path_params.at("id"))->summary());
    }));

    server.Post("/datasets/:id/train", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        const auto config = config_from_json(parse_body(req));
        send(res, {{"job_id", ws.start_training(req.path_params.at("id"), config)}}, 202);
    }));

    server.Get("/jobs/:job", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        send(res, to_json(ws.job(req.path_params.at("job"))));
    }));

    server.Get("/datasets/:id/associations", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        auto model = ds->require_model();
        const auto colors = ds->colors();
        const auto notes = ds->annotations();
        const auto labels = dominant_labels(model->associations);
        json list = json::array();
        for (const auto& a : model->associations) {
            const auto members = std::count(labels.begin(), labels.end(), a.index);
            list.push_back({{"index", a.index},
                            {"color", colors[a.index]},
                            {"annotation", notes[a.index]},
                            {"dominant_cells", members},
                            {"top_genes", gene_list(top_genes(a, ds->raw().gene_names(), 4))}});
        }
        send(res, {{"k", model->associations.size()}, {"informativeness", model->informativeness}, {"associations", list}});
    }));

    server.Get("/datasets/:id/associations/:u/relevance", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        auto model = ds->require_model();
        const auto u = association_index(req.path_params.at("u"), *model);
        send(res, {{"index", u}, {"cell_ids", ds->raw().cell_ids()}, {"relevance", model->associations[u].relevance}});
    }));

    server.Get("/datasets/:id/associations/:u/importance", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        auto model = ds->require_model();
        const auto u = association_index(req.path_params.at("u"), *model);
        std::size_t n_top = 4;
        if (req.has_param("n_top")) n_top = parse_index(req.get_param_value("n_top"), "n_top");
        if (req.has_param("full") && req.get_param_value("full") == "true") n_top = ds->raw().n_genes();
        if (n_top == 0) throw Error("InvalidArgument", "n_top must be >= 1");
        send(res, {{"index", u}, {"genes", gene_list(top_genes(model->associations[u], ds->raw().gene_names(), n_top))}});
    }));

    server.Patch("/datasets/:id/associations/:u", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        auto model = ds->require_model();
        const auto u = association_index(req.path_params.at("u"), *model);
        const auto body = parse_body(req);
        std::optional<std::string> color, annotation;
        if (body.contains("color")) color = body.at("color").get<std::string>();
        if (body.contains("annotation")) annotation = body.at("annotation").get<std::string>();
        ds->patch_association(u, color, annotation);
        send(res, {{"index", u}, {"color", ds->colors()[u]}, {"annotation", ds->annotations()[u]}});
    }));

    server.Get("/datasets/:id/embedding", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        const std::string source = req.has_param("source") ? req.get_param_value("source") : "model";
        EmbeddingSource which;
        try {
            which = embedding_source_from_string(source);
        } catch (const Error& e) {
            throw Error("InvalidArgument", e.what());
        }
        if (which == EmbeddingSource::pca) {
            send(res, embedding_json(ds->pca_embedding(), ds->raw()));
        } else {
            send(res, embedding_json(ds->require_model()->embedding, ds->raw()));
        }
    }));

    server.Get("/datasets/:id/pure-regions", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        auto model = ds->require_model();
        const double eps = req.has_param("eps") ? parse_real(req.get_param_value("eps"), "eps") : ds->default_eps();
        const std::size_t min_pts = req.has_param("min_pts") ? parse_index(req.get_param_value("min_pts"), "min_pts") : 10;
        if (!(eps > 0.0) || min_pts < 2) throw Error("InvalidArgument", "need eps > 0 and min_pts >= 2");
        const auto regions =
            detect_pure_regions(model->embedding.view(), dominant_labels(model->associations), eps, min_pts);
        json list = json::array();
        for (const auto& r : regions) list.push_back(to_json(r, ds->raw().cell_ids()));
        send(res, {{"eps", eps}, {"min_pts", min_pts}, {"regions", list}});
    }));

    server.Get("/datasets/:id/regions", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        json list = json::array();
        for (const auto& r : ds->regions()) list.push_back(region_json(r, ds->raw()));
        send(res, list);
    }));

    server.Post("/datasets/:id/regions", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        const auto body = parse_body(req);
        if (!body.contains("cell_ids")) throw Error("MissingField", "missing 'cell_ids'");
        auto cells = cells_from_json(body.at("cell_ids"), ds->raw());
        const auto origin = region_origin_from_string(body.value("origin", "lasso"));
        const auto region = ds->add_region(body.value("name", ""), std::move(cells), origin);
        send(res, region_json(region, ds->raw()), 201);
    }));

    server.Get("/datasets/:id/regions/:rid", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        send(res, region_json(ds->region(req.path_params.at("rid")), ds->raw()));
    }));

    server.Delete("/datasets/:id/regions/:rid", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        ws.dataset(req.path_params.at("id"))->delete_region(req.path_params.at("rid"));
        res.status = 204;
    }));

    // Region ids are unique per dataset; the short form searches every dataset.
    server.Delete("/regions/:rid", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        const auto& rid = req.path_params.at("rid");
        for (const auto& ds : ws.datasets()) {
            try {
                ds->delete_region(rid);
                res.status = 204;
                return;
            } catch (const Error& e) {
                if (e.code() != "UnknownRegion") throw;
            }
        }
        throw Error("UnknownRegion", "region '" + rid + "'");
    }));

    server.Get("/datasets/:id/regions/:rid/profile", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        const auto region = ds->region(req.path_params.at("rid"));
        auto model = ds->require_model();
        json j = to_json(relevance_profile(region.cell_indices, model->associations));
        j["region_id"] = region.id;
        j["n_cells"] = region.cell_indices.size();
        send(res, j);
    }));

    server.Get("/datasets/:id/regions/:rid/genes/:gene/distribution",
               guarded([&ws](const httplib::Request& req, httplib::Response& res) {
                   auto ds = ws.dataset(req.path_params.at("id"));
                   const auto region = ds->region(req.path_params.at("rid"));
                   const std::size_t bins = req.has_param("bins") ? parse_index(req.get_param_value("bins"), "bins") : 12;
                   if (bins == 0) throw Error("InvalidArgument", "bins must be >= 1");
                   json j = to_json(gene_distribution(region.cell_indices, req.path_params.at("gene"), ds->raw(), bins));
                   j["region_id"] = region.id;
                   send(res, j);
               }));

    server.Post("/datasets/:id/verify", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        const auto body = parse_body(req);
        const auto genes = string_list(body, "genes", true);
        const auto pos = ds->region(required_string(body, "positive_region"));
        const auto neg = ds->region(required_string(body, "negative_region"));
        const auto result = evaluate_biomarker(genes, pos.cell_indices, neg.cell_indices, ds->raw());
        send(res, card_json(ds->append_history(pos.id, neg.id, result)), 201);
    }));

    server.Post("/datasets/:id/history/:card/refine", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        auto ds = ws.dataset(req.path_params.at("id"));
        const auto& card_id = req.path_params.at("card");
        const auto history = ds->history();
        auto it = std::find_if(history.begin(), history.end(), [&](const HistoryCard& c) { return c.id == card_id; });
        if (it == history.end()) throw Error("UnknownCard", "history card '" + card_id + "'");
        const auto body = parse_body(req);
        const auto pos = ds->region(it->positive_region);
        const auto neg = ds->region(it->negative_region);
        const auto result = refine_biomarker(biomarker_of(it->result), string_list(body, "add", false),
                                             string_list(body, "remove", false), pos.cell_indices, neg.cell_indices,
                                             ds->raw());
        send(res, card_json(ds->append_history(pos.id, neg.id, result)), 201);
    }));

    server.Get("/datasets/:id/history", guarded([&ws](const httplib::Request& req, httplib::Response& res) {
        json list = json::array();
        for (const auto& c : ws.dataset(req.path_params.at("id"))->history()) list.push_back(card_json(c));
        send(res, list);
    }));
}

}  // namespace cellscout
