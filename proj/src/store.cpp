#include "cellscout/store.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cellscout/error.hpp"
#include "cellscout/loss.hpp"

namespace fs = std::filesystem;

namespace cellscout {

namespace {

constexpr std::array<const char*, 12> kPalette = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
                                                  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#2ca02c"};

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedStore", path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace

nlohmann::json to_json(const HistoryCard& card) {
    return {{"id", card.id},
            {"sequence", card.sequence},
            {"positive_region", card.positive_region},
            {"negative_region", card.negative_region},
            {"result", to_json(card.result)}};
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_checksum(const fs::path& path) { return fnv1a_hex(read_text_file(path)); }

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("FileNotFound", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("WriteFailed", "cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("WriteFailed", "cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string default_color(std::size_t u) { return kPalette[u % kPalette.size()]; }

// ---------------------------------------------------------------------------
// Dataset

std::shared_ptr<Dataset> Dataset::create(const fs::path& dir, const std::string& id, const std::string& name,
                                         const ExpressionMatrix& raw,
                                         const std::optional<std::vector<std::size_t>>& labels) {
    if (fs::exists(dir / "meta.json")) throw Error("StoreExists", dir.string() + " already holds a dataset");
    if (labels && labels->size() != raw.n_cells()) throw Error("LengthMismatch", "one label per cell required");
    fs::create_directories(dir);
    write_matrix(raw, dir / "matrix.csv");
    write_json(dir / "meta.json", {{"id", id}, {"name", name}, {"colors", nlohmann::json::array()},
                                   {"annotations", nlohmann::json::array()}});
    if (labels) write_json(dir / "labels.json", *labels);
    return open(dir);
}

std::shared_ptr<Dataset> Dataset::open(const fs::path& dir) {
    if (!fs::exists(dir / "meta.json")) throw Error("NotAStore", dir.string() + " has no meta.json");
    std::shared_ptr<Dataset> ds(new Dataset());
    ds->dir_ = dir;
    const auto meta = read_json(dir / "meta.json");
    try {
        ds->id_ = meta.at("id").get<std::string>();
        ds->name_ = meta.value("name", ds->id_);
        ds->colors_ = meta.value("colors", std::vector<std::string>{});
        ds->annotations_ = meta.value("annotations", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedStore", std::string("meta.json: ") + e.what());
    }
    ds->raw_ = std::make_shared<const ExpressionMatrix>(load_matrix(dir / "matrix.csv"));
    ds->normalized_ = std::make_shared<const ExpressionMatrix>(normalize(*ds->raw_));
    if (fs::exists(dir / "labels.json")) {
        ds->labels_ = read_json(dir / "labels.json").get<std::vector<std::size_t>>();
        if (ds->labels_->size() != ds->raw_->n_cells()) throw Error("MalformedStore", "labels.json length mismatch");
    }
    if (fs::exists(dir / "model.json")) {
        auto model = trained_model_from_json(read_json(dir / "model.json"));
        if (model.model.n_genes() != ds->raw_->n_genes() || model.embedding.size() != ds->raw_->n_cells()) {
            throw Error("MalformedStore", "model.json does not match matrix.csv");
        }
        ds->model_ = std::make_shared<const TrainedModel>(std::move(model));
    }
    if (fs::exists(dir / "regions.json")) {
        const auto j = read_json(dir / "regions.json");
        ds->next_region_ = j.value("next", std::uint64_t{1});
        for (const auto& r : j.at("regions")) ds->regions_.push_back(region_from_json(r, *ds->raw_));
    }
    if (fs::exists(dir / "history.json")) {
        const auto j = read_json(dir / "history.json");
        for (const auto& c : j) {
            HistoryCard card;
            card.id = c.at("id").get<std::string>();
            card.sequence = c.at("sequence").get<std::uint64_t>();
            card.positive_region = c.at("positive_region").get<std::string>();
            card.negative_region = c.at("negative_region").get<std::string>();
            card.result = verification_result_from_json(c.at("result"));
            ds->next_card_ = std::max(ds->next_card_, card.sequence + 1);
            ds->history_.push_back(std::move(card));
        }
    }
    return ds;
}

std::shared_ptr<const TrainedModel> Dataset::model() const {
    std::lock_guard lock(mutex_);
    return model_;
}

std::shared_ptr<const TrainedModel> Dataset::require_model() const {
    auto m = model();
    if (!m) throw Error("NotTrained", "dataset '" + id_ + "' has no trained model");
    return m;
}

void Dataset::set_model(TrainedModel model) {
    auto snapshot = std::make_shared<const TrainedModel>(std::move(model));
    const std::string text = to_json(*snapshot).dump() + "\n";
    std::lock_guard lock(mutex_);
    write_text_file(dir_ / "model.json", text);
    model_ = std::move(snapshot);
    eps_.reset();
    const std::size_t k = model_->associations.size();
    while (colors_.size() < k) colors_.push_back(default_color(colors_.size()));
    annotations_.resize(std::max(annotations_.size(), k));
    write_meta_locked();
}

const Embedding2D& Dataset::pca_embedding() const {
    std::call_once(pca_once_, [this] { pca_ = embed_with_pca(*normalized_); });
    return *pca_;
}

double Dataset::default_eps() const {
    std::lock_guard lock(mutex_);
    if (!model_) throw Error("NotTrained", "dataset '" + id_ + "' has no trained model");
    if (!eps_) eps_ = std::sqrt(compute_delta(model_->embedding.view()));
    return *eps_;
}

std::vector<std::string> Dataset::colors() const {
    std::lock_guard lock(mutex_);
    return colors_;
}

std::vector<std::string> Dataset::annotations() const {
    std::lock_guard lock(mutex_);
    return annotations_;
}

void Dataset::patch_association(std::size_t u, const std::optional<std::string>& color,
                                const std::optional<std::string>& annotation) {
    auto m = require_model();
    std::lock_guard lock(mutex_);
    if (u >= m->associations.size()) throw Error("UnknownAssociation", "association " + std::to_string(u));
    if (color) colors_[u] = *color;
    if (annotation) annotations_[u] = *annotation;
    write_meta_locked();
}

std::vector<Region> Dataset::regions() const {
    std::lock_guard lock(mutex_);
    return regions_;
}

Region Dataset::region(const std::string& region_id) const {
    std::lock_guard lock(mutex_);
    for (const auto& r : regions_) {
        if (r.id == region_id) return r;
    }
    throw Error("UnknownRegion", "region '" + region_id + "'");
}

Region Dataset::add_region(const std::string& name, std::vector<std::size_t> cells, RegionOrigin origin) {
    std::lock_guard lock(mutex_);
    const std::string rid = "r" + std::to_string(next_region_);
    Region r = make_region(rid, name.empty() ? rid : name, std::move(cells), origin, raw_->n_cells());
    ++next_region_;
    regions_.push_back(r);
    write_regions_locked();
    return r;
}

void Dataset::delete_region(const std::string& region_id) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(regions_.begin(), regions_.end(), [&](const Region& r) { return r.id == region_id; });
    if (it == regions_.end()) throw Error("UnknownRegion", "region '" + region_id + "'");
    regions_.erase(it);
    write_regions_locked();
}

std::vector<HistoryCard> Dataset::history() const {
    std::lock_guard lock(mutex_);
    return history_;
}

HistoryCard Dataset::append_history(const std::string& positive_region, const std::string& negative_region,
                                    const VerificationResult& result) {
    std::lock_guard lock(mutex_);
    HistoryCard card{"v" + std::to_string(next_card_), next_card_, positive_region, negative_region, result};
    ++next_card_;
    history_.push_back(card);
    write_history_locked();
    return card;
}

nlohmann::json Dataset::summary() const {
    auto m = model();
    nlohmann::json j = {{"id", id_},
                        {"name", name_},
                        {"n_cells", raw_->n_cells()},
                        {"n_genes", raw_->n_genes()},
                        {"trained", m != nullptr},
                        {"training", training()},
                        {"has_labels", labels_.has_value()}};
    if (m) {
        j["k"] = m->associations.size();
        j["informativeness"] = m->informativeness;
    }
    return j;
}

void Dataset::write_meta_locked() const {
    write_json(dir_ / "meta.json", {{"id", id_}, {"name", name_}, {"colors", colors_}, {"annotations", annotations_}});
}

void Dataset::write_regions_locked() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : regions_) list.push_back(to_json(r, raw_->cell_ids()));
    write_json(dir_ / "regions.json", {{"next", next_region_}, {"regions", list}});
}

void Dataset::write_history_locked() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : history_) list.push_back(to_json(c));
    write_json(dir_ / "history.json", list);
}

// ---------------------------------------------------------------------------
// Workspace

std::string to_string(JobState state) {
    switch (state) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "failed";
}

nlohmann::json to_json(const JobStatus& s) {
    nlohmann::json j = {{"job_id", s.job_id},
                        {"dataset_id", s.dataset_id},
                        {"state", to_string(s.state)},
                        {"progress", {{"epoch", s.epoch}, {"total", s.total}}}};
    if (s.state == JobState::failed) j["error"] = s.error;
    return j;
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
    if (fs::exists(root_ / "meta.json")) {
        single_ = true;
        auto ds = Dataset::open(root_);
        datasets_.emplace(ds->id(), ds);
        return;
    }
    fs::create_directories(root_);
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        auto ds = Dataset::open(d);
        if (!datasets_.emplace(ds->id(), ds).second) throw Error("DuplicateId", "dataset id '" + ds->id() + "'");
    }
}

Workspace::~Workspace() { wait_for_jobs(); }

std::vector<std::shared_ptr<Dataset>> Workspace::datasets() const {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<Dataset>> out;
    for (const auto& [id, ds] : datasets_) out.push_back(ds);
    return out;
}

std::shared_ptr<Dataset> Workspace::dataset(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) throw Error("UnknownDataset", "dataset '" + id + "'");
    return it->second;
}

std::shared_ptr<Dataset> Workspace::ingest(const std::string& csv_text, const std::string& name) {
    auto raw = parse_matrix(csv_text);
    if (single_) throw Error("ReadOnlyWorkspace", "server was started on a single dataset store");
    std::lock_guard lock(mutex_);
    std::string id;
    for (std::uint64_t i = datasets_.size() + 1;; ++i) {
        id = "ds" + std::to_string(i);
        if (datasets_.count(id) == 0 && !fs::exists(root_ / id)) break;
    }
    auto ds = Dataset::create(root_ / id, id, name.empty() ? id : name, raw);
    datasets_.emplace(id, ds);
    return ds;
}

std::string Workspace::start_training(const std::string& dataset_id, const MinerConfig& config) {
    auto ds = dataset(dataset_id);
    config.validate();
    if (!ds->try_begin_training()) throw Error("TrainingInProgress", "dataset '" + dataset_id + "' is training");

    JobStatus status;
    {
        std::lock_guard lock(mutex_);
        status.job_id = "job" + std::to_string(next_job_++);
    }
    status.dataset_id = dataset_id;
    status.total = config.epochs;
    set_job(status);

    std::lock_guard lock(mutex_);
    workers_.emplace_back([this, ds, config, status]() mutable {
        status.state = JobState::running;
        set_job(status);
        try {
            auto trained = train(ds->normalized(), config, [&](std::size_t epoch, std::size_t total, const LossBreakdown&) {
                status.epoch = epoch + 1;
                status.total = total;
                set_job(status);
            });
            ds->set_model(std::move(trained));
            status.state = JobState::done;
        } catch (const std::exception& e) {
            status.state = JobState::failed;
            status.error = e.what();
        }
        ds->end_training();
        set_job(status);
    });
    return status.job_id;
}

JobStatus Workspace::job(const std::string& job_id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw Error("UnknownJob", "job '" + job_id + "'");
    return it->second;
}

void Workspace::wait_for_jobs() {
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

void Workspace::set_job(const JobStatus& status) {
    std::lock_guard lock(mutex_);
    jobs_[status.job_id] = status;
}

}  // namespace cellscout
