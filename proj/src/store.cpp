#include "setupx/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "setupx/errors.hpp"

namespace setupx {

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

XpuStore::XpuStore(std::size_t dimension) : dimension_(dimension) {}

XpuStore::XpuStore(XpuStore&& other) noexcept {
    std::unique_lock lock(other.mutex_);
    entries_ = std::move(other.entries_);
    dimension_ = other.dimension_;
    next_id_ = other.next_id_;
}

XpuStore& XpuStore::operator=(XpuStore&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        entries_ = std::move(other.entries_);
        dimension_ = other.dimension_;
        next_id_ = other.next_id_;
    }
    return *this;
}

void XpuStore::check_dimension(const Embedding& e) const {
    if (dimension_ != 0 && e.size() != dimension_) throw DimensionMismatch(dimension_, e.size());
    for (double v : e)
        if (!std::isfinite(v)) throw InvalidXpu("embedding has non-finite component");
}

std::string XpuStore::next_id_locked() {
    std::string id;
    do {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "xpu_%06llu", static_cast<unsigned long long>(next_id_++));
        id = buf;
    } while (entries_.count(id) != 0);
    return id;
}

std::string XpuStore::ingest(const Xpu& xpu, const Embedding& embedding) {
    validate_xpu(xpu);
    std::unique_lock lock(mutex_);
    if (dimension_ != 0 && embedding.size() != dimension_)
        throw DimensionMismatch(dimension_, embedding.size());
    for (double v : embedding)
        if (!std::isfinite(v)) throw InvalidXpu("embedding has non-finite component");
    if (dimension_ == 0) dimension_ = embedding.size();
    Xpu stored = xpu;
    if (stored.id.empty()) stored.id = next_id_locked();
    std::string id = stored.id;
    entries_[id] = StoredEntry{std::move(stored), embedding};
    return id;
}

std::vector<std::pair<std::string, double>> XpuStore::knn(const Embedding& query,
                                                          std::size_t n) const {
    std::shared_lock lock(mutex_);
    if (dimension_ != 0 && query.size() != dimension_)
        throw DimensionMismatch(dimension_, query.size());
    std::vector<std::pair<std::string, double>> sims;
    sims.reserve(entries_.size());
    for (const auto& [id, entry] : entries_)
        sims.emplace_back(id, cosine_similarity(query, entry.embedding));
    std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (sims.size() > n) sims.resize(n);
    return sims;
}

Telemetry XpuStore::update_telemetry(const std::string& xpu_id, const TelemetryDelta& delta) {
    std::unique_lock lock(mutex_);
    auto it = entries_.find(xpu_id);
    if (it == entries_.end()) throw UnknownId(xpu_id);
    Telemetry t = it->second.xpu.telemetry;
    t.hits += delta.hits;
    t.successes += delta.successes;
    t.failures += delta.failures;
    if (t.hits < 0 || t.successes < 0 || t.failures < 0) throw NegativeCounter(xpu_id);
    it->second.xpu.telemetry = t;
    return t;
}

std::vector<std::pair<std::string, double>> XpuStore::find_duplicates(const Embedding& embedding,
                                                                      double threshold) const {
    std::shared_lock lock(mutex_);
    if (dimension_ != 0 && embedding.size() != dimension_)
        throw DimensionMismatch(dimension_, embedding.size());
    std::vector<std::pair<std::string, double>> hits;
    for (const auto& [id, entry] : entries_) {
        double sim = cosine_similarity(embedding, entry.embedding);
        if (sim >= threshold) hits.emplace_back(id, sim);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return hits;
}

void XpuStore::replace_xpu(const std::string& xpu_id, const Xpu& xpu) {
    validate_xpu(xpu);
    std::unique_lock lock(mutex_);
    auto it = entries_.find(xpu_id);
    if (it == entries_.end()) throw UnknownId(xpu_id);
    Xpu replacement = xpu;
    replacement.id = xpu_id;
    it->second.xpu = std::move(replacement);
}

std::vector<std::string> XpuStore::prune_by_provenance(const std::vector<std::string>& repos) {
    std::unique_lock lock(mutex_);
    std::vector<std::string> removed;
    for (auto it = entries_.begin(); it != entries_.end();) {
        const std::string& p = it->second.xpu.provenance;
        if (!p.empty() && std::find(repos.begin(), repos.end(), p) != repos.end()) {
            removed.push_back(it->first);
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
    return removed;
}

std::optional<Xpu> XpuStore::get(const std::string& xpu_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(xpu_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.xpu;
}

std::optional<StoredEntry> XpuStore::get_entry(const std::string& xpu_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(xpu_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> XpuStore::ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [id, _] : entries_) out.push_back(id);
    return out;
}

std::size_t XpuStore::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::size_t XpuStore::dimension() const {
    std::shared_lock lock(mutex_);
    return dimension_;
}

StoreStats XpuStore::stats(const TierThresholds& th) const {
    std::shared_lock lock(mutex_);
    StoreStats s;
    s.entries = entries_.size();
    s.dimension = dimension_;
    double rate_sum = 0.0;
    for (const auto& [id, entry] : entries_) {
        switch (assign_tier(entry.xpu.telemetry, th)) {
            case Tier::Golden: ++s.golden; break;
            case Tier::Cold: ++s.cold; break;
            default: ++s.normal; break;
        }
        rate_sum += success_rate(entry.xpu.telemetry);
    }
    if (s.entries > 0) s.mean_success_rate = rate_sum / static_cast<double>(s.entries);
    return s;
}

void XpuStore::save(const std::string& path) const {
    std::shared_lock lock(mutex_);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    for (const auto& [id, entry] : entries_) {
        nlohmann::json line = {{"xpu", xpu_to_json(entry.xpu)}, {"embedding", entry.embedding}};
        out << line.dump() << "\n";
    }
    if (!out) throw IoFailure("write to " + path + " failed");
}

XpuStore XpuStore::load(const std::string& path, std::size_t dimension) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path + " for reading");
    XpuStore store(dimension);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw CorruptRecord(line_number, "not valid JSON");
        if (!j.contains("xpu") || !j.contains("embedding"))
            throw CorruptRecord(line_number, "missing xpu or embedding field");
        try {
            Xpu xpu = xpu_from_json(j.at("xpu"));
            Embedding embedding = j.at("embedding").get<Embedding>();
            if (xpu.id.empty()) throw CorruptRecord(line_number, "entry has no id");
            store.ingest(xpu, embedding);
        } catch (const CorruptRecord&) {
            throw;
        } catch (const std::exception& e) {
            throw CorruptRecord(line_number, e.what());
        }
    }
    return store;
}

}  // namespace setupx
