#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setupx/store.hpp"

namespace setupx {

struct NoiseCounts {
    std::size_t context_perturbation = 600;
    std::size_t cross_grafting = 450;
    std::size_t generalization_blur = 450;
};

struct NoiseTemplates {
    std::vector<std::string> blur_advice;                 // 12 generic advice templates
    std::vector<std::vector<std::string>> keyword_groups; // 6 generic keyword groups
    std::vector<std::string> extra_tools;                 // conda, poetry, pdm, hatch, uv, mamba
    std::vector<std::string> python_versions;             // 3.8 .. 3.13
    std::vector<std::string> extra_os;

    static NoiseTemplates builtin();
    static NoiseTemplates from_file(const std::string& path);
};

struct NoiseConfig {
    NoiseCounts counts;
    std::uint64_t seed = 1;
    // Parent-child cosine is kept within [jitter_cos_min, jitter_cos_max].
    double jitter_cos_min = 0.92;
    double jitter_cos_max = 0.985;
    NoiseTemplates templates = NoiseTemplates::builtin();
};

// Synthetic perturbation entries for robustness ablations. Three classes:
// context perturbation (real entry with rewritten context facets),
// cross-grafting (context of A, signals of B, advice of C, atoms from one of
// the three) and generalization blur (generic advice/keywords, atoms
// cleared). All noise entries carry zero telemetry and an embedding jittered
// from their parent's so they stay in its neighborhood. Deterministic for a
// fixed seed. Throws on an empty store.
std::vector<StoredEntry> generate_noise(const XpuStore& store, const NoiseConfig& cfg);

// Generates and ingests; returns the number of entries added.
std::size_t append_noise(XpuStore& store, const NoiseConfig& cfg);

}  // namespace setupx
