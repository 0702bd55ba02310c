#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "setupx/xpu.hpp"

namespace setupx {

using Embedding = std::vector<double>;

struct StoredEntry {
    Xpu xpu;
    Embedding embedding;
};

struct RetrievalCandidate {
    std::string xpu_id;
    double sim = 0.0;
    double score = 0.0;
    Tier tier = Tier::Normal;
};

struct TelemetryDelta {
    std::int64_t hits = 0;
    std::int64_t successes = 0;
    std::int64_t failures = 0;
};

struct StoreStats {
    std::size_t entries = 0;
    std::size_t golden = 0;
    std::size_t normal = 0;
    std::size_t cold = 0;
    double mean_success_rate = 0.0;
    std::size_t dimension = 0;
};

// Cosine similarity; zero-norm vectors compare as 0. Throws DimensionMismatch.
double cosine_similarity(const Embedding& a, const Embedding& b);

// Persistent experience store with an exhaustive in-memory cosine index.
// Reads may run concurrently; ingests and telemetry updates are serialized
// internally (single-writer contract). All returned values are copies.
//
// A dimension of 0 means "adopt the dimension of the first ingested entry".
class XpuStore {
public:
    explicit XpuStore(std::size_t dimension = 1536);

    XpuStore(XpuStore&& other) noexcept;
    XpuStore& operator=(XpuStore&& other) noexcept;

    // Validates the XPU and stores it. Entries without an id get a newly
    // assigned unique one; re-ingesting an existing id replaces the entry.
    // Returns the id. Throws InvalidXpu / DimensionMismatch.
    std::string ingest(const Xpu& xpu, const Embedding& embedding);

    // Exact top-n cosine scan over all entries, sorted by sim descending with
    // lexicographic id tie-break. Empty store yields an empty list.
    std::vector<std::pair<std::string, double>> knn(const Embedding& query, std::size_t n) const;

    // Applies the delta atomically and returns the new counters.
    // Throws UnknownId / NegativeCounter.
    Telemetry update_telemetry(const std::string& xpu_id, const TelemetryDelta& delta);

    // Entries with sim >= threshold, sorted descending (id tie-break).
    std::vector<std::pair<std::string, double>> find_duplicates(const Embedding& embedding,
                                                                double threshold = 0.85) const;

    // Replaces the XPU of an existing entry, keeping its embedding.
    void replace_xpu(const std::string& xpu_id, const Xpu& xpu);

    // Removes every entry whose provenance appears in `repos`; returns the ids removed.
    std::vector<std::string> prune_by_provenance(const std::vector<std::string>& repos);

    std::optional<Xpu> get(const std::string& xpu_id) const;
    std::optional<StoredEntry> get_entry(const std::string& xpu_id) const;
    std::vector<std::string> ids() const;
    std::size_t size() const;
    std::size_t dimension() const;

    StoreStats stats(const TierThresholds& th = {}) const;

    // JSON Lines, one {"xpu": ..., "embedding": [...]} per line.
    void save(const std::string& path) const;
    static XpuStore load(const std::string& path, std::size_t dimension = 0);

private:
    void check_dimension(const Embedding& e) const;
    std::string next_id_locked();

    mutable std::shared_mutex mutex_;
    std::map<std::string, StoredEntry> entries_;
    std::size_t dimension_ = 0;
    std::uint64_t next_id_ = 1;
};

}  // namespace setupx
