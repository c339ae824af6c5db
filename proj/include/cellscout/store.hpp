#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cellscout/analytics.hpp"
#include "cellscout/embedding.hpp"
#include "cellscout/expression_matrix.hpp"
#include "cellscout/miner.hpp"
#include "cellscout/verification.hpp"

/**
 * @file store.hpp
 * @brief On-disk dataset stores and the in-memory workspace the service runs on.
 *
 * A store is one directory:
 *
 *     matrix.csv     raw expression matrix as ingested
 *     meta.json      id, name, per-association colors and annotations
 *     labels.json    optional ground-truth state per cell (for benchmarks)
 *     model.json     trained model, written by `train`
 *     regions.json   saved regions, cells referenced by id
 *     history.json   verification cards in creation order
 *
 * Reads hand out immutable snapshots; every mutation takes the dataset's
 * write lock and rewrites the affected file before returning.
 */

namespace cellscout {

struct HistoryCard {
    std::string id;
    std::uint64_t sequence = 0;
    std::string positive_region;
    std::string negative_region;
    VerificationResult result;
};

nlohmann::json to_json(const HistoryCard& card);

/// FNV-1a 64-bit hash of a byte string, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_checksum(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Default display color of association u.
std::string default_color(std::size_t u);

class Dataset {
public:
    /// Creates `dir`, writes matrix.csv and meta.json. Throws `StoreExists` if
    /// `dir` already holds a store.
    static std::shared_ptr<Dataset> create(const std::filesystem::path& dir, const std::string& id,
                                           const std::string& name, const ExpressionMatrix& raw,
                                           const std::optional<std::vector<std::size_t>>& labels = std::nullopt);
    /// Loads every artifact present. Throws `NotAStore` when meta.json is missing.
    static std::shared_ptr<Dataset> open(const std::filesystem::path& dir);

    const std::string& id() const { return id_; }
    const std::string& name() const { return name_; }
    const std::filesystem::path& dir() const { return dir_; }
    const ExpressionMatrix& raw() const { return *raw_; }
    const ExpressionMatrix& normalized() const { return *normalized_; }
    const std::optional<std::vector<std::size_t>>& labels() const { return labels_; }

    /// Current trained snapshot, or null before the first training run.
    std::shared_ptr<const TrainedModel> model() const;
    /// Same, but throws `NotTrained`.
    std::shared_ptr<const TrainedModel> require_model() const;
    /// Installs a new model and writes model.json. Colors and annotations are
    /// kept per index and padded with defaults when k grows.
    void set_model(TrainedModel model);

    const Embedding2D& pca_embedding() const;
    /// Default pure-region radius: sqrt(delta) of the model embedding, the radius
    /// of the neighborhoods the training constraint acts on (d^2 <= delta).
    double default_eps() const;

    std::vector<std::string> colors() const;
    std::vector<std::string> annotations() const;
    /// Throws `UnknownAssociation`.
    void patch_association(std::size_t u, const std::optional<std::string>& color,
                           const std::optional<std::string>& annotation);

    std::vector<Region> regions() const;
    /// Throws `UnknownRegion`.
    Region region(const std::string& region_id) const;
    Region add_region(const std::string& name, std::vector<std::size_t> cells, RegionOrigin origin);
    /// Throws `UnknownRegion`.
    void delete_region(const std::string& region_id);

    std::vector<HistoryCard> history() const;
    HistoryCard append_history(const std::string& positive_region, const std::string& negative_region,
                               const VerificationResult& result);

    /// Claims the single training slot; false if a job already holds it.
    bool try_begin_training() { return !training_.exchange(true); }
    void end_training() { training_.store(false); }
    bool training() const { return training_.load(); }

    nlohmann::json summary() const;

private:
    Dataset() = default;
    void write_meta_locked() const;
    void write_regions_locked() const;
    void write_history_locked() const;

    std::filesystem::path dir_;
    std::string id_;
    std::string name_;
    std::shared_ptr<const ExpressionMatrix> raw_;
    std::shared_ptr<const ExpressionMatrix> normalized_;
    std::optional<std::vector<std::size_t>> labels_;

    mutable std::mutex mutex_;
    std::shared_ptr<const TrainedModel> model_;
    std::vector<std::string> colors_;
    std::vector<std::string> annotations_;
    std::vector<Region> regions_;
    std::uint64_t next_region_ = 1;
    std::vector<HistoryCard> history_;
    std::uint64_t next_card_ = 1;

    mutable std::once_flag pca_once_;
    mutable std::optional<Embedding2D> pca_;
    mutable std::optional<double> eps_;
    std::atomic<bool> training_{false};
};

enum class JobState { queued, running, done, failed };
std::string to_string(JobState state);

struct JobStatus {
    std::string job_id;
    std::string dataset_id;
    JobState state = JobState::queued;
    std::size_t epoch = 0;
    std::size_t total = 0;
    std::string error;
};

nlohmann::json to_json(const JobStatus& status);

/**
 * The set of datasets a server exposes plus their training jobs. A root
 * holding meta.json is served as a single dataset; otherwise each
 * subdirectory with meta.json is one dataset and new uploads become new
 * subdirectories.
 */
class Workspace {
public:
    explicit Workspace(std::filesystem::path root);
    ~Workspace();
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    std::vector<std::shared_ptr<Dataset>> datasets() const;
    /// Throws `UnknownDataset`.
    std::shared_ptr<Dataset> dataset(const std::string& id) const;
    /// Parses and stores an uploaded matrix. Core-data error codes propagate.
    std::shared_ptr<Dataset> ingest(const std::string& csv_text, const std::string& name);

    /// Starts background training. Throws `TrainingInProgress` if one is running.
    std::string start_training(const std::string& dataset_id, const MinerConfig& config);
    /// Throws `UnknownJob`.
    JobStatus job(const std::string& job_id) const;
    /// Blocks until every started job has finished.
    void wait_for_jobs();

private:
    void set_job(const JobStatus& status);

    std::filesystem::path root_;
    bool single_ = false;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Dataset>> datasets_;
    std::map<std::string, JobStatus> jobs_;
    std::vector<std::thread> workers_;
    std::uint64_t next_job_ = 1;
};

}  // namespace cellscout
