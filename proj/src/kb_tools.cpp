#include "setupx/kb_tools.hpp"

#include <cmath>
#include <fstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

// Hand-rolled generator so noise sets are identical across standard library
// implementations.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed ^ 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next() % n); }

    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double normal() {
        // Box-Muller; the tiny floor keeps log() finite.
        double u1 = std::max(unit(), 1e-12);
        double u2 = unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

Embedding jitter_embedding(const Embedding& parent, Rng& rng, double cos_min, double cos_max) {
    // child = normalize(u + delta * w) with w a unit vector orthogonal to u,
    // so cosine(parent, child) = 1 / sqrt(1 + delta^2) exactly.
    std::size_t dim = parent.size();
    double parent_norm = 0.0;
    for (double x : parent) parent_norm += x * x;
    parent_norm = std::sqrt(parent_norm);
    Embedding u(dim);
    for (std::size_t i = 0; i < dim; ++i) u[i] = parent_norm > 0 ? parent[i] / parent_norm : 0.0;

    Embedding w(dim);
    for (std::size_t i = 0; i < dim; ++i) w[i] = rng.normal();
    double dot = 0.0;
    for (std::size_t i = 0; i < dim; ++i) dot += w[i] * u[i];
    for (std::size_t i = 0; i < dim; ++i) w[i] -= dot * u[i];
    double w_norm = 0.0;
    for (double x : w) w_norm += x * x;
    w_norm = std::sqrt(w_norm);
    if (w_norm == 0.0) return u;  // degenerate draw; keep the parent direction
    for (double& x : w) x /= w_norm;

    double cos_target = cos_min + (cos_max - cos_min) * rng.unit();
    double delta = std::sqrt(1.0 / (cos_target * cos_target) - 1.0);

    Embedding child(dim);
    double norm = std::sqrt(1.0 + delta * delta);
    for (std::size_t i = 0; i < dim; ++i) child[i] = (u[i] + delta * w[i]) / norm;
    return child;
}

std::string zero_pad(std::size_t n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05zu", n);
    return buf;
}

}  // namespace

NoiseTemplates NoiseTemplates::builtin() {
    NoiseTemplates t;
    t.blur_advice = {
        "check the Python version",
        "install project dependencies",
        "read the project README before installing",
        "upgrade pip before resolving packages",
        "make sure the virtual environment is active",
        "check for a lock file before installing",
        "install system packages required by the build",
        "rerun the failing command with verbose output",
        "verify the package index is reachable",
        "pin dependency versions when resolution fails",
        "clean cached build artifacts and retry",
        "consult the project's CI configuration for setup hints",
    };
    t.keyword_groups = {
        {"error", "failure", "setup"},
        {"dependency", "version", "conflict"},
        {"install", "package", "pip"},
        {"build", "compile", "toolchain"},
        {"python", "environment", "venv"},
        {"test", "pytest", "verification"},
    };
    t.extra_tools = {"conda", "poetry", "pdm", "hatch", "uv", "mamba"};
    t.python_versions = {"3.8", "3.9", "3.10", "3.11", "3.12", "3.13"};
    t.extra_os = {"ubuntu:20.04", "ubuntu:24.04", "debian:12", "fedora:40"};
    return t;
}

NoiseTemplates NoiseTemplates::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open noise templates " + path);
    nlohmann::json j;
    in >> j;
    NoiseTemplates t = builtin();
    if (j.contains("blur_advice")) t.blur_advice = j.at("blur_advice").get<std::vector<std::string>>();
    if (j.contains("keyword_groups"))
        t.keyword_groups = j.at("keyword_groups").get<std::vector<std::vector<std::string>>>();
    if (j.contains("extra_tools")) t.extra_tools = j.at("extra_tools").get<std::vector<std::string>>();
    if (j.contains("python_versions"))
        t.python_versions = j.at("python_versions").get<std::vector<std::string>>();
    if (j.contains("extra_os")) t.extra_os = j.at("extra_os").get<std::vector<std::string>>();
    return t;
}

std::vector<StoredEntry> generate_noise(const XpuStore& store, const NoiseConfig& cfg) {
    std::vector<std::string> ids = store.ids();
    if (ids.empty()) throw Error("noise generation requires a non-empty store");

    std::vector<StoredEntry> parents;
    parents.reserve(ids.size());
    for (const auto& id : ids) {
        auto entry = store.get_entry(id);
        if (entry) parents.push_back(std::move(*entry));
    }

    Rng rng(cfg.seed);
    const NoiseTemplates& tpl = cfg.templates;
    std::vector<StoredEntry> noise;
    noise.reserve(cfg.counts.context_perturbation + cfg.counts.cross_grafting +
                  cfg.counts.generalization_blur);

    for (std::size_t i = 0; i < cfg.counts.context_perturbation; ++i) {
        const StoredEntry& parent = parents[rng.below(parents.size())];
        StoredEntry entry = parent;
        entry.xpu.id = "noise_ctx_" + zero_pad(i + 1);
        entry.xpu.telemetry = Telemetry{};
        entry.xpu.provenance = "synthetic:context_perturbation";
        auto& ctx = entry.xpu.signals.context;
        ctx["python"] = tpl.python_versions[rng.below(tpl.python_versions.size())];
        std::string os = ctx.count("os") ? ctx["os"] : "linux";
        ctx["os"] = os + ", " + tpl.extra_os[rng.below(tpl.extra_os.size())];
        std::string tools = ctx.count("tools") ? ctx["tools"] + ", " : "";
        ctx["tools"] = tools + tpl.extra_tools[rng.below(tpl.extra_tools.size())];
        entry.embedding = jitter_embedding(parent.embedding, rng, cfg.jitter_cos_min, cfg.jitter_cos_max);
        noise.push_back(std::move(entry));
    }

    for (std::size_t i = 0; i < cfg.counts.cross_grafting; ++i) {
        const StoredEntry& a = parents[rng.below(parents.size())];
        const StoredEntry& b = parents[rng.below(parents.size())];
        const StoredEntry& c = parents[rng.below(parents.size())];
        StoredEntry entry;
        entry.xpu.id = "noise_graft_" + zero_pad(i + 1);
        entry.xpu.signals = b.xpu.signals;
        entry.xpu.signals.context = a.xpu.signals.context;
        entry.xpu.advice_nl = c.xpu.advice_nl;
        const StoredEntry* atom_sources[3] = {&a, &b, &c};
        const StoredEntry& atom_source = *atom_sources[rng.below(3)];
        for (const auto& atom : atom_source.xpu.atoms)
            if (rng.next() & 1) entry.xpu.atoms.push_back(atom);
        entry.xpu.telemetry = Telemetry{};
        entry.xpu.provenance = "synthetic:cross_grafting";
        // B's signals dominate how the entry is matched, so B anchors the
        // embedding neighborhood.
        entry.embedding = jitter_embedding(b.embedding, rng, cfg.jitter_cos_min, cfg.jitter_cos_max);
        noise.push_back(std::move(entry));
    }

    for (std::size_t i = 0; i < cfg.counts.generalization_blur; ++i) {
        const StoredEntry& parent = parents[rng.below(parents.size())];
        StoredEntry entry = parent;
        entry.xpu.id = "noise_blur_" + zero_pad(i + 1);
        entry.xpu.telemetry = Telemetry{};
        entry.xpu.provenance = "synthetic:generalization_blur";
        entry.xpu.advice_nl = {tpl.blur_advice[rng.below(tpl.blur_advice.size())]};
        entry.xpu.signals.keywords = tpl.keyword_groups[rng.below(tpl.keyword_groups.size())];
        entry.xpu.atoms.clear();
        entry.embedding = jitter_embedding(parent.embedding, rng, cfg.jitter_cos_min, cfg.jitter_cos_max);
        noise.push_back(std::move(entry));
    }

    return noise;
}

std::size_t append_noise(XpuStore& store, const NoiseConfig& cfg) {
    auto noise = generate_noise(store, cfg);
    for (const auto& entry : noise) store.ingest(entry.xpu, entry.embedding);
    return noise.size();
}

}  // namespace setupx
