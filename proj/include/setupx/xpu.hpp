#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "setupx/atoms.hpp"

namespace setupx {

// Retrieval signals of an experience unit. Regex strings use the ECMAScript
// dialect (std::regex default) project-wide; non-compiling patterns are
// rejected at ingest.
struct Signals {
    std::vector<std::string> keywords;
    std::vector<std::string> regexes;  // serialized as "regex"
    std::vector<std::string> situation_triggers;
    std::map<std::string, std::string> context;  // optional facets: os, python, tools...

    bool operator==(const Signals&) const = default;
};

// Deployment counters. successes + failures never exceeds hits: hits counts
// deliveries to the main agent, audits only ever add one success or failure
// per delivered recommendation.
struct Telemetry {
    std::int64_t hits = 0;
    std::int64_t successes = 0;
    std::int64_t failures = 0;

    bool operator==(const Telemetry&) const = default;
};

struct TierThresholds {
    double golden_min_rate = 0.2;  // r >= a with enough hits -> Golden
    double cold_max_rate = 0.1;    // r < b with enough hits -> Cold
    std::int64_t min_hits = 5;
    double golden_boost = 1.5;
    double cold_boost = 0.6;
    double normal_boost = 1.0;
};

enum class Tier { Golden, Normal, Cold };

const std::string& tier_name(Tier tier);
Tier tier_from_name(const std::string& name);

struct Xpu {
    std::string id;
    Signals signals;
    std::vector<std::string> advice_nl;
    std::vector<Atom> atoms;
    Telemetry telemetry;
    std::string provenance;  // source repository, empty when unknown

    bool operator==(const Xpu&) const = default;
};

// successes / max(hits, 1), always in [0, 1] for valid telemetry.
double success_rate(const Telemetry& t);

Tier assign_tier(const Telemetry& t, const TierThresholds& th = {});

double tier_boost(Tier tier, const TierThresholds& th = {});

// sim * (1 + success_rate) * tier boost.
double composite_score(double sim, const Telemetry& t, const TierThresholds& th = {});

// Merges a confirmed duplicate into the primary entry: keeps primary.id,
// unions signal sets element-wise, replaces advice with the fused list,
// appends the duplicate's atoms not already present, sums telemetry.
// Throws EmptyFusedAdvice.
Xpu merge_xpus(const Xpu& primary, const Xpu& duplicate,
               const std::vector<std::string>& fused_advice);

// Structural validation used at ingest: non-empty advice, recognized atoms
// with required args, compiling regexes. Throws InvalidXpu.
void validate_xpu(const Xpu& xpu);

// Wire format (one JSON object per entry): id, signals{keywords, regex,
// situation_triggers, context?}, advice_nl, atoms[{name, args}],
// telemetry{hits, successes, failures}, provenance?.
nlohmann::json xpu_to_json(const Xpu& xpu);
Xpu xpu_from_json(const nlohmann::json& j);

nlohmann::json atom_to_json(const Atom& atom);
Atom atom_from_json(const nlohmann::json& j);

}  // namespace setupx
