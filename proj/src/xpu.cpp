#include "setupx/xpu.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

std::vector<std::string> union_ordered(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& list : {a, b})
        for (const auto& item : list)
            if (seen.insert(item).second) out.push_back(item);
    return out;
}

}  // namespace

const std::string& tier_name(Tier tier) {
    static const std::string golden = "golden", normal = "normal", cold = "cold";
    switch (tier) {
        case Tier::Golden: return golden;
        case Tier::Cold: return cold;
        default: return normal;
    }
}

Tier tier_from_name(const std::string& name) {
    if (name == "golden") return Tier::Golden;
    if (name == "cold") return Tier::Cold;
    if (name == "normal") return Tier::Normal;
    throw Error("unknown tier name: " + name);
}

double success_rate(const Telemetry& t) {
    return static_cast<double>(t.successes) / static_cast<double>(std::max<std::int64_t>(t.hits, 1));
}

Tier assign_tier(const Telemetry& t, const TierThresholds& th) {
    if (t.hits >= th.min_hits) {
        const double r = success_rate(t);
        if (r >= th.golden_min_rate) return Tier::Golden;
        if (r < th.cold_max_rate) return Tier::Cold;
    }
    return Tier::Normal;
}

double tier_boost(Tier tier, const TierThresholds& th) {
    switch (tier) {
        case Tier::Golden: return th.golden_boost;
        case Tier::Cold: return th.cold_boost;
        default: return th.normal_boost;
    }
}

double composite_score(double sim, const Telemetry& t, const TierThresholds& th) {
    return sim * (1.0 + success_rate(t)) * tier_boost(assign_tier(t, th), th);
}

Xpu merge_xpus(const Xpu& primary, const Xpu& duplicate,
               const std::vector<std::string>& fused_advice) {
    if (fused_advice.empty()) throw EmptyFusedAdvice();
    Xpu merged = primary;
    merged.signals.keywords = union_ordered(primary.signals.keywords, duplicate.signals.keywords);
    merged.signals.regexes = union_ordered(primary.signals.regexes, duplicate.signals.regexes);
    merged.signals.situation_triggers =
        union_ordered(primary.signals.situation_triggers, duplicate.signals.situation_triggers);
    for (const auto& [key, value] : duplicate.signals.context)
        merged.signals.context.emplace(key, value);  // primary wins on conflict
    merged.advice_nl = fused_advice;
    for (const auto& atom : duplicate.atoms)
        if (std::find(merged.atoms.begin(), merged.atoms.end(), atom) == merged.atoms.end())
            merged.atoms.push_back(atom);
    merged.telemetry.hits = primary.telemetry.hits + duplicate.telemetry.hits;
    merged.telemetry.successes = primary.telemetry.successes + duplicate.telemetry.successes;
    merged.telemetry.failures = primary.telemetry.failures + duplicate.telemetry.failures;
    return merged;
}

void validate_xpu(const Xpu& xpu) {
    if (xpu.advice_nl.empty()) throw InvalidXpu("advice_nl is empty");
    for (const auto& atom : xpu.atoms) {
        try {
            validate_atom(atom);
        } catch (const MissingArg& e) {
            throw InvalidXpu("atom " + atom_kind_name(atom.kind) + ": " + e.what());
        }
    }
    for (const auto& pattern : xpu.signals.regexes) {
        try {
            std::regex compiled(pattern);
        } catch (const std::regex_error& e) {
            throw InvalidXpu("signal regex '" + pattern + "' does not compile: " + e.what());
        }
    }
    if (xpu.telemetry.hits < 0 || xpu.telemetry.successes < 0 || xpu.telemetry.failures < 0)
        throw InvalidXpu("negative telemetry counter");
    if (xpu.telemetry.successes + xpu.telemetry.failures > xpu.telemetry.hits)
        throw InvalidXpu("successes + failures exceeds hits");
}

nlohmann::json atom_to_json(const Atom& atom) {
    return {{"name", atom_kind_name(atom.kind)}, {"args", atom.args}};
}

Atom atom_from_json(const nlohmann::json& j) {
    Atom atom;
    atom.kind = atom_kind_from_name(j.at("name").get<std::string>());
    if (j.contains("args"))
        atom.args = j.at("args").get<std::map<std::string, std::string>>();
    return atom;
}

nlohmann::json xpu_to_json(const Xpu& xpu) {
    nlohmann::json signals = {
        {"keywords", xpu.signals.keywords},
        {"regex", xpu.signals.regexes},
        {"situation_triggers", xpu.signals.situation_triggers},
    };
    if (!xpu.signals.context.empty()) signals["context"] = xpu.signals.context;
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& atom : xpu.atoms) atoms.push_back(atom_to_json(atom));
    nlohmann::json j = {
        {"id", xpu.id},
        {"signals", signals},
        {"advice_nl", xpu.advice_nl},
        {"atoms", atoms},
        {"telemetry",
         {{"hits", xpu.telemetry.hits},
          {"successes", xpu.telemetry.successes},
          {"failures", xpu.telemetry.failures}}},
    };
    if (!xpu.provenance.empty()) j["provenance"] = xpu.provenance;
    return j;
}

Xpu xpu_from_json(const nlohmann::json& j) {
    Xpu xpu;
    if (j.contains("id")) xpu.id = j.at("id").get<std::string>();
    if (j.contains("signals")) {
        const auto& s = j.at("signals");
        if (s.contains("keywords")) xpu.signals.keywords = s.at("keywords").get<std::vector<std::string>>();
        if (s.contains("regex")) xpu.signals.regexes = s.at("regex").get<std::vector<std::string>>();
        if (s.contains("situation_triggers"))
            xpu.signals.situation_triggers = s.at("situation_triggers").get<std::vector<std::string>>();
        if (s.contains("context"))
            xpu.signals.context = s.at("context").get<std::map<std::string, std::string>>();
    }
    if (j.contains("advice_nl")) xpu.advice_nl = j.at("advice_nl").get<std::vector<std::string>>();
    if (j.contains("atoms"))
        for (const auto& a : j.at("atoms")) xpu.atoms.push_back(atom_from_json(a));
    if (j.contains("telemetry")) {
        const auto& t = j.at("telemetry");
        xpu.telemetry.hits = t.value("hits", std::int64_t{0});
        xpu.telemetry.successes = t.value("successes", std::int64_t{0});
        xpu.telemetry.failures = t.value("failures", std::int64_t{0});
    }
    if (j.contains("provenance")) xpu.provenance = j.at("provenance").get<std::string>();
    return xpu;
}

}  // namespace setupx
