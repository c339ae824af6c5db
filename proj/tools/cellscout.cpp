// cellscout command-line front end. Every subcommand works on a dataset store
// directory (see store.hpp). Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellscout/analytics.hpp"
#include "cellscout/bench.hpp"
#include "cellscout/error.hpp"
#include "cellscout/miner.hpp"
#include "cellscout/service.hpp"
#include "cellscout/store.hpp"
#include "cellscout/verification.hpp"

namespace fs = std::filesystem;
using namespace cellscout;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> read_labels(const fs::path& path, std::size_t expected) {
    std::ifstream in(path);
    if (!in) throw Error("FileNotFound", "cannot open " + path.string());
    std::vector<std::size_t> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            labels.push_back(std::stoul(line));
        } catch (const std::exception&) {
            throw Error("MalformedLabels", "not a label: '" + line + "'");
        }
    }
    if (labels.size() != expected) throw Error("LengthMismatch", "expected one label per cell");
    return labels;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text_file(path, text);
}

struct TrainOptions {
    MinerConfig config;
    std::string config_file;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--k", config.k, "number of experts (associations)");
        cmd.add_option("--epochs", config.epochs, "training epochs");
        cmd.add_option("--seed", config.seed, "random seed");
        cmd.add_option("--lr", config.learning_rate, "learning rate");
        cmd.add_option("--batch-size", config.batch_size, "mini-batch size");
        cmd.add_option("--genes-per-expert", config.genes_per_expert, "expected gene-subset size s (lambda = log s)");
        cmd.add_option("--lambda", config.lambda, "information-retention weight (default log s)");
        cmd.add_option("--gamma", config.gamma, "same-state probability floor for nearby cells");
        cmd.add_option("--beta", config.beta, "constraint weight");
        cmd.add_option("--config", config_file, "JSON miner config; flags override its fields");
    }

    MinerConfig resolve(const CLI::App& cmd) const {
        if (config_file.empty()) return config;
        MinerConfig c = config_from_json(nlohmann::json::parse(read_text_file(config_file)));
        if (cmd.count("--k")) c.k = config.k;
        if (cmd.count("--epochs")) c.epochs = config.epochs;
        if (cmd.count("--seed")) c.seed = config.seed;
        if (cmd.count("--lr")) c.learning_rate = config.learning_rate;
        if (cmd.count("--batch-size")) c.batch_size = config.batch_size;
        if (cmd.count("--genes-per-expert")) c.genes_per_expert = config.genes_per_expert;
        if (cmd.count("--lambda")) c.lambda = config.lambda;
        if (cmd.count("--gamma")) c.gamma = config.gamma;
        if (cmd.count("--beta")) c.beta = config.beta;
        return c;
    }
};

std::vector<std::size_t> parse_cells(const std::string& text, const ExpressionMatrix& matrix) {
    std::vector<std::size_t> cells;
    for (const auto& item : split_list(text)) {
        const bool numeric = item.find_first_not_of("0123456789") == std::string::npos;
        if (numeric) {
            const auto p = std::stoul(item);
            if (p >= matrix.n_cells()) throw Error("IndexOutOfRange", "cell index " + item);
            cells.push_back(p);
        } else {
            cells.push_back(matrix.cell_index(item));
        }
    }
    return cells;
}

void print_result(const VerificationResult& r) {
    std::cout << "gene,threshold,direction,information_gain\n";
    for (const auto& p : r.per_gene) {
        std::cout << p.gene << ',' << p.threshold << ',' << to_string(p.direction) << ',' << p.information_gain << '\n';
    }
    std::cout << "tp=" << r.confusion.tp << " fp=" << r.confusion.fp << " fn=" << r.confusion.fn
              << " tn=" << r.confusion.tn << '\n';
    std::cout << "f1=" << r.f1 << " accuracy=" << r.accuracy << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cellscout: mine cell-state / biomarker associations from expression matrices"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // synth
    auto* synth = app.add_subcommand("synth", "write a planted-state synthetic store (matrix + labels)");
    SyntheticSpec spec;
    std::string synth_out, synth_csv;
    synth->add_option("--out", synth_out, "store directory")->required();
    synth->add_option("--csv", synth_csv, "also write the raw matrix as CSV here");
    synth->add_option("--states", spec.n_states);
    synth->add_option("--cells-per-state", spec.cells_per_state);
    synth->add_option("--genes", spec.n_genes);
    synth->add_option("--markers", spec.markers_per_state);
    synth->add_option("--lift", spec.marker_lift);
    synth->add_option("--sd", spec.noise_sd);
    synth->add_option("--seed", spec.seed);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate a CSV/TSV matrix and create a store from it");
    std::string ingest_in, ingest_out, ingest_labels, ingest_name;
    ingest->add_option("matrix", ingest_in, "cells x genes table with a cell_id header column")->required();
    ingest->add_option("--out", ingest_out, "store directory")->required();
    ingest->add_option("--labels", ingest_labels, "optional file with one integer state label per cell");
    ingest->add_option("--name", ingest_name, "display name");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the miner and save model.json");
    std::string train_store, train_out;
    bool train_verbose = false;
    TrainOptions train_opts;
    train_cmd->add_option("store", train_store)->required();
    train_opts.add_to(*train_cmd);
    train_cmd->add_option("--out", train_out, "write the model here instead of <store>/model.json");
    train_cmd->add_flag("-v,--verbose", train_verbose, "print the loss of every epoch");

    // sweep-k
    auto* sweep = app.add_subcommand("sweep-k", "train one model per k and report informativeness");
    std::string sweep_store, sweep_candidates = "4,6,8,10,12", sweep_json;
    double sweep_eps = 0.01;
    TrainOptions sweep_opts;
    sweep->add_option("store", sweep_store)->required();
    sweep->add_option("--candidates", sweep_candidates, "comma-separated ascending k values");
    sweep->add_option("--epsilon", sweep_eps, "plateau tolerance");
    sweep->add_option("--json", sweep_json, "also write the report as JSON");
    sweep_opts.add_to(*sweep);

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "score model and PCA embeddings against known states");
    std::string bench_store, bench_labels, bench_json;
    std::uint64_t bench_seed = 1;
    bench->add_option("store", bench_store)->required();
    bench->add_option("--labels", bench_labels, "label file (defaults to the store's labels.json)");
    bench->add_option("--json", bench_json, "also write the report as JSON");
    bench->add_option("--split-seed", bench_seed, "train/test split seed for the classifier");

    // verify
    auto* verify = app.add_subcommand("verify", "fit thresholds for a biomarker and score it on two regions");
    std::string verify_store, verify_genes, verify_pos, verify_neg;
    verify->add_option("store", verify_store)->required();
    verify->add_option("--genes", verify_genes, "comma-separated gene names")->required();
    verify->add_option("--pos", verify_pos, "positive region id")->required();
    verify->add_option("--neg", verify_neg, "negative region id")->required();

    // region
    auto* region = app.add_subcommand("region", "manage saved cell regions");
    region->require_subcommand(1);
    auto* region_add = region->add_subcommand("add", "save a region");
    std::string radd_store, radd_name, radd_cells;
    long long radd_assoc = -1;
    region_add->add_option("store", radd_store)->required();
    region_add->add_option("--name", radd_name);
    auto* cells_opt = region_add->add_option("--cells", radd_cells, "comma-separated cell indices or ids");
    auto* assoc_opt = region_add->add_option("--association", radd_assoc, "all cells whose dominant association is u");
    cells_opt->excludes(assoc_opt);
    auto* region_list = region->add_subcommand("list", "list saved regions");
    std::string rlist_store;
    region_list->add_option("store", rlist_store)->required();
    auto* region_del = region->add_subcommand("delete", "delete a saved region");
    std::string rdel_store, rdel_id;
    region_del->add_option("store", rdel_store)->required();
    region_del->add_option("id", rdel_id)->required();
    auto* region_pure = region->add_subcommand("pure", "detect label-pure regions in the model embedding");
    std::string rpure_store;
    double rpure_eps = 0.0;
    std::size_t rpure_min = 10;
    bool rpure_save = false;
    region_pure->add_option("store", rpure_store)->required();
    region_pure->add_option("--eps", rpure_eps, "neighborhood radius (default: sqrt of the embedding delta)");
    region_pure->add_option("--min-pts", rpure_min, "DBSCAN core threshold, counting the point itself");
    region_pure->add_flag("--save", rpure_save, "save each pure region");

    // serve
    auto* serve = app.add_subcommand("serve", "serve a store (or a directory of stores) over HTTP");
    std::string serve_store, serve_host = "127.0.0.1";
    int serve_port = 8080;
    serve->add_option("store", serve_store)->required();
    serve->add_option("--port", serve_port, "listen port (CELLSCOUT_PORT overrides)");
    serve->add_option("--host", serve_host, "listen address");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*synth) {
            const auto data = generate_synthetic(spec);
            auto ds = Dataset::create(synth_out, fs::path(synth_out).filename().string(), "synthetic", data.matrix,
                                      data.labels);
            if (!synth_csv.empty()) write_matrix(data.matrix, synth_csv);
            std::cout << "wrote " << ds->dir().string() << ": " << data.matrix.n_cells() << " cells x "
                      << data.matrix.n_genes() << " genes, " << spec.n_states << " states\n";
        } else if (*ingest) {
            auto raw = load_matrix(ingest_in, format_from_path(ingest_in));
            const auto report = validate(raw);
            std::optional<std::vector<std::size_t>> labels;
            if (!ingest_labels.empty()) labels = read_labels(ingest_labels, raw.n_cells());
            const std::string id = fs::path(ingest_out).filename().string();
            auto ds = Dataset::create(ingest_out, id, ingest_name.empty() ? id : ingest_name, raw, labels);
            std::cout << "ingested " << raw.n_cells() << " cells x " << raw.n_genes() << " genes into "
                      << ds->dir().string() << '\n';
            if (!report.zero_variance_genes.empty()) {
                std::cout << "warning: " << report.zero_variance_genes.size() << " zero-variance genes\n";
            }
            if (!report.zero_cells.empty()) std::cout << "warning: " << report.zero_cells.size() << " all-zero cells\n";
        } else if (*train_cmd) {
            auto ds = Dataset::open(train_store);
            const auto config = train_opts.resolve(*train_cmd);
            auto trained = train(ds->normalized(), config, [&](std::size_t epoch, std::size_t total, const LossBreakdown& l) {
                if (train_verbose || epoch + 1 == total) {
                    std::cout << "epoch " << epoch + 1 << '/' << total << " total=" << l.total << " f=" << l.f_score
                              << " mir=" << l.mir << " crc=" << l.crc_penalty << '\n';
                }
            });
            fs::path out = train_out.empty() ? fs::path(train_store) / "model.json" : fs::path(train_out);
            const double info = trained.informativeness;
            if (train_out.empty()) {
                ds->set_model(std::move(trained));
            } else {
                write_file(out, to_json(trained).dump() + "\n");
            }
            std::cout << "informativeness " << info << '\n';
            std::cout << "model " << out.string() << '\n';
            std::cout << "checksum " << file_checksum(out) << '\n';
        } else if (*sweep) {
            auto ds = Dataset::open(sweep_store);
            std::vector<std::size_t> ks;
            for (const auto& item : split_list(sweep_candidates)) {
                try {
                    ks.push_back(std::stoul(item));
                } catch (const std::exception&) {
                    throw UsageError("bad k candidate '" + item + "'");
                }
            }
            const auto report = select_k(ds->normalized(), sweep_opts.resolve(*sweep), ks, sweep_eps);
            std::cout << format_sweep_table(report);
            if (!sweep_json.empty()) write_file(sweep_json, to_json(report).dump(2) + "\n");
        } else if (*bench) {
            auto ds = Dataset::open(bench_store);
            auto model = ds->require_model();
            std::vector<std::size_t> labels;
            if (!bench_labels.empty()) {
                labels = read_labels(bench_labels, ds->raw().n_cells());
            } else if (ds->labels()) {
                labels = *ds->labels();
            } else {
                throw Error("MissingLabels", "store has no labels.json; pass --labels");
            }
            const auto report = run_benchmark(ds->normalized(), labels, model->embedding, bench_seed);
            std::cout << format_benchmark_csv(report);
            if (!bench_json.empty()) write_file(bench_json, to_json(report).dump(2) + "\n");
        } else if (*verify) {
            auto ds = Dataset::open(verify_store);
            const auto pos = ds->region(verify_pos);
            const auto neg = ds->region(verify_neg);
            const auto result = evaluate_biomarker(split_list(verify_genes), pos.cell_indices, neg.cell_indices, ds->raw());
            const auto card = ds->append_history(pos.id, neg.id, result);
            std::cout << "card " << card.id << '\n';
            print_result(result);
        } else if (*region_add) {
            auto ds = Dataset::open(radd_store);
            std::vector<std::size_t> cells;
            RegionOrigin origin = RegionOrigin::manual;
            if (*cells_opt) {
                cells = parse_cells(radd_cells, ds->raw());
            } else if (*assoc_opt) {
                auto model = ds->require_model();
                if (radd_assoc < 0 || static_cast<std::size_t>(radd_assoc) >= model->associations.size()) {
                    throw Error("UnknownAssociation", "association " + std::to_string(radd_assoc));
                }
                const auto labels = dominant_labels(model->associations);
                for (std::size_t p = 0; p < labels.size(); ++p) {
                    if (labels[p] == static_cast<std::size_t>(radd_assoc)) cells.push_back(p);
                }
            } else {
                throw UsageError("region add needs --cells or --association");
            }
            const auto r = ds->add_region(radd_name, std::move(cells), origin);
            std::cout << r.id << ' ' << r.name << ' ' << r.cell_indices.size() << " cells\n";
        } else if (*region_list) {
            auto ds = Dataset::open(rlist_store);
            std::cout << "id,name,origin,n_cells\n";
            for (const auto& r : ds->regions()) {
                std::cout << r.id << ',' << r.name << ',' << to_string(r.origin) << ',' << r.cell_indices.size() << '\n';
            }
        } else if (*region_del) {
            Dataset::open(rdel_store)->delete_region(rdel_id);
            std::cout << "deleted " << rdel_id << '\n';
        } else if (*region_pure) {
            auto ds = Dataset::open(rpure_store);
            auto model = ds->require_model();
            const double eps = *region_pure->get_option("--eps") ? rpure_eps : ds->default_eps();
            const auto regions =
                detect_pure_regions(model->embedding.view(), dominant_labels(model->associations), eps, rpure_min);
            std::cout << "eps " << eps << " min_pts " << rpure_min << '\n';
            std::cout << "association,n_cells,centroid_x,centroid_y" << (rpure_save ? ",region_id" : "") << '\n';
            for (const auto& r : regions) {
                std::cout << r.association_index << ',' << r.cell_indices.size() << ',' << r.centroid[0] << ','
                          << r.centroid[1];
                if (rpure_save) {
                    const auto saved = ds->add_region("pure-" + std::to_string(r.association_index), r.cell_indices,
                                                      RegionOrigin::pure_region);
                    std::cout << ',' << saved.id;
                }
                std::cout << '\n';
            }
        } else if (*serve) {
            if (const char* env = std::getenv("CELLSCOUT_PORT")) {
                try {
                    serve_port = std::stoi(env);
                } catch (const std::exception&) {
                    throw UsageError(std::string("bad CELLSCOUT_PORT '") + env + "'");
                }
            }
            Workspace ws(serve_store);
            httplib::Server server;
            register_routes(server, ws);
            std::cout << "serving " << ws.datasets().size() << " dataset(s) on http://" << serve_host << ':'
                      << serve_port << std::endl;
            if (!server.listen(serve_host, serve_port)) throw Error("ListenFailed", "cannot bind port " + std::to_string(serve_port));
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: InvalidJson: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: FileSystem: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
