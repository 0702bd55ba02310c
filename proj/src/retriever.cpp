#include "setupx/retriever.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

std::string truncate_head_tail(const std::string& text, std::size_t max_chars) {
    if (text.size() <= max_chars) return text;
    const std::string marker = "\n... [truncated] ...\n";
    if (max_chars <= marker.size()) return text.substr(0, max_chars);
    std::size_t keep = max_chars - marker.size();
    std::size_t head = keep / 2, tail = keep - head;
    return text.substr(0, head) + marker + text.substr(text.size() - tail);
}

std::string last_lines(const std::string& text, std::size_t n) {
    if (text.empty()) return text;
    std::size_t pos = text.size();
    std::size_t lines = 0;
    while (pos > 0 && lines < n) {
        pos = text.rfind('\n', pos - 1);
        if (pos == std::string::npos) return text;
        ++lines;
    }
    return text.substr(pos == 0 ? 0 : pos + 1);
}

std::string render_steps(const std::vector<Step>& steps, std::size_t max_chars_per_obs = 800) {
    std::ostringstream out;
    for (const auto& s : steps) {
        out << "step " << s.index << ": " << action_kind_name(s.action.kind);
        if (!s.action.command.empty()) out << " `" << s.action.command << "`";
        out << "\n  -> " << truncate_head_tail(s.observation.text, max_chars_per_obs) << "\n";
    }
    return out.str();
}

}  // namespace

const std::string& retrieval_mode_name(RetrievalMode mode) {
    static const std::string selector = "selector", direct = "direct";
    return mode == RetrievalMode::Selector ? selector : direct;
}

RetrievalMode retrieval_mode_from_name(const std::string& name) {
    if (name == "selector") return RetrievalMode::Selector;
    if (name == "direct") return RetrievalMode::Direct;
    throw Error("unknown retrieval mode: " + name);
}

const std::string& audit_outcome_name(AuditOutcome outcome) {
    static const std::string success = "success", failure = "failure", neutral = "neutral";
    switch (outcome) {
        case AuditOutcome::Success: return success;
        case AuditOutcome::Failure: return failure;
        default: return neutral;
    }
}

std::string HybridSituation::to_text() const {
    std::string out;
    if (!state_summary.empty()) out += "state: " + state_summary + "\n";
    if (!error_text.empty()) out += "errors:\n" + error_text + "\n";
    if (!raw_output.empty()) out += "output:\n" + raw_output + "\n";
    return out;
}

bool line_is_error_signal(const std::string& line) {
    static const std::regex nonzero_exit("exit code [1-9][0-9]*");
    return line.find("Error") != std::string::npos || line.find("error:") != std::string::npos ||
           line.find("Traceback") != std::string::npos || line.find("failed") != std::string::npos ||
           std::regex_search(line, nonzero_exit);
}

std::string extract_error_lines(const std::string& output, std::size_t max_lines) {
    std::istringstream in(output);
    std::string line, out;
    std::size_t count = 0;
    while (std::getline(in, line) && count < max_lines) {
        if (line_is_error_signal(line)) {
            out += line + "\n";
            ++count;
        }
    }
    return out;
}

Retriever::Retriever(XpuStore& store, LlmGateway& gateway, const PromptLibrary& prompts,
                     RetrieverConfig config, RunLog* log)
    : store_(store), gateway_(gateway), prompts_(prompts), config_(config), log_(log) {}

HybridSituation Retriever::build_situation(const std::vector<Step>& trajectory_tail,
                                           const ExecResult& last_result) {
    if (trajectory_tail.empty()) throw Error("build_situation requires a non-empty trajectory");

    HybridSituation situation;
    situation.raw_output = last_lines(last_result.combined_output(), config_.raw_tail_lines);
    if (!last_result.ok())
        situation.raw_output += "\nexit code " + std::to_string(last_result.exit_code);
    situation.error_text = extract_error_lines(last_result.combined_output());

    try {
        std::vector<ChatMessage> messages = {
            {"system", prompts_.get("retriever_select")},
            {"user", "SUMMARIZE the current deployment state.\n\nRecent steps:\n" +
                         render_steps(trajectory_tail) + "\nLast command output:\n" +
                         truncate_head_tail(situation.raw_output, 1500)},
        };
        situation.state_summary = gateway_.chat(ChatRole::RetrieverSelect, messages);
    } catch (const GatewayFailure& e) {
        if (log_) log_->note(std::string("situation summary degraded to raw-only: ") + e.what());
        situation.state_summary.clear();
    }

    // Keep the serialized situation under the configured cap; the raw excerpt
    // absorbs the cut.
    std::size_t fixed = situation.state_summary.size() + situation.error_text.size();
    std::size_t raw_budget =
        fixed >= config_.situation_max_chars ? 0 : config_.situation_max_chars - fixed;
    situation.raw_output = truncate_head_tail(situation.raw_output, raw_budget);
    if (situation.empty()) situation.raw_output = "(no output captured)";
    return situation;
}

std::vector<RetrievalCandidate> Retriever::rank_candidates(const Embedding& query) const {
    std::vector<RetrievalCandidate> candidates;
    for (const auto& [id, sim] : store_.knn(query, config_.top_n)) {
        auto xpu = store_.get(id);
        if (!xpu) continue;
        RetrievalCandidate c;
        c.xpu_id = id;
        c.sim = sim;
        c.tier = assign_tier(xpu->telemetry, config_.thresholds);
        c.score = composite_score(sim, xpu->telemetry, config_.thresholds);
        candidates.push_back(std::move(c));
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.xpu_id < b.xpu_id;
    });
    return candidates;
}

std::vector<std::string> Retriever::select_with_model(
    const std::vector<RetrievalCandidate>& candidates, const HybridSituation& situation) {
    std::ostringstream listing;
    for (const auto& c : candidates) {
        auto xpu = store_.get(c.xpu_id);
        if (!xpu) continue;
        listing << "- id: " << c.xpu_id << " (tier " << tier_name(c.tier) << ", hits "
                << xpu->telemetry.hits << ", successes " << xpu->telemetry.successes
                << ", failures " << xpu->telemetry.failures << ")\n";
        if (!xpu->signals.keywords.empty()) {
            listing << "  keywords:";
            for (const auto& kw : xpu->signals.keywords) listing << " " << kw;
            listing << "\n";
        }
        for (const auto& advice : xpu->advice_nl) listing << "  advice: " << advice << "\n";
    }
    std::vector<ChatMessage> messages = {
        {"system", prompts_.render("retriever_select",
                                   {{"k", std::to_string(config_.top_k)}})},
        {"user", "SELECT up to " + std::to_string(config_.top_k) +
                     " XPUs for this situation.\n\nSituation:\n" + situation.to_text() +
                     "\nCandidates:\n" + listing.str()},
    };
    std::string response =
        gateway_.chat(ChatRole::RetrieverSelect, messages, ResponseContract::StructuredDocument);

    std::size_t start = std::min(response.find('{'), response.find('['));
    nlohmann::json j = start == std::string::npos
                           ? nlohmann::json(nlohmann::json::value_t::discarded)
                           : nlohmann::json::parse(response.substr(start), nullptr, false);
    std::vector<std::string> proposed;
    if (j.is_object() && j.contains("selected") && j.at("selected").is_array()) {
        for (const auto& id : j.at("selected"))
            if (id.is_string()) proposed.push_back(id.get<std::string>());
    } else if (j.is_array()) {
        for (const auto& id : j)
            if (id.is_string()) proposed.push_back(id.get<std::string>());
    } else {
        throw GatewayFailure("selector response is not a JSON id list");
    }

    std::vector<std::string> accepted;
    for (const auto& id : proposed) {
        bool known = std::any_of(candidates.begin(), candidates.end(),
                                 [&](const auto& c) { return c.xpu_id == id; });
        if (!known) {
            if (log_) log_->note("selector proposed id outside the candidate set, dropped: " + id);
            continue;
        }
        if (std::find(accepted.begin(), accepted.end(), id) == accepted.end())
            accepted.push_back(id);
        if (accepted.size() >= config_.top_k) break;
    }
    return accepted;
}

RetrievalResult Retriever::retrieve(const HybridSituation& situation,
                                    const std::vector<Step>& trajectory,
                                    std::size_t trajectory_position) {
    if (pending_anchor_) {
        RetrievalAnchor previous = *pending_anchor_;
        pending_anchor_.reset();
        audit_previous(previous, trajectory);
    }

    RetrievalResult result;
    result.anchor.serial = next_anchor_serial_++;
    result.anchor.trajectory_position = trajectory_position;

    Embedding query;
    try {
        query = gateway_.embed(situation.to_text());
    } catch (const GatewayFailure& e) {
        if (log_) log_->note(std::string("situation embedding failed, retrieval skipped: ") + e.what());
        pending_anchor_ = result.anchor;
        return result;
    }

    result.candidates = rank_candidates(query);
    if (result.candidates.empty()) {
        pending_anchor_ = result.anchor;
        return result;
    }

    std::vector<std::string> chosen;
    if (config_.mode == RetrievalMode::Selector) {
        try {
            chosen = select_with_model(result.candidates, situation);
        } catch (const GatewayFailure& e) {
            if (log_) log_->note(std::string("selector failed, falling back to direct mode: ") + e.what());
            chosen.clear();
            for (const auto& c : result.candidates) {
                chosen.push_back(c.xpu_id);
                if (chosen.size() >= config_.top_k) break;
            }
        }
    } else {
        for (const auto& c : result.candidates) {
            chosen.push_back(c.xpu_id);
            if (chosen.size() >= config_.top_k) break;
        }
    }

    for (const auto& id : chosen) {
        store_.update_telemetry(id, TelemetryDelta{1, 0, 0});  // delivery counts as a hit
        if (auto xpu = store_.get(id)) result.xpus.push_back(*xpu);
        result.anchor.recommended_ids.push_back(id);
    }
    pending_anchor_ = result.anchor;
    return result;
}

std::vector<AuditVerdict> Retriever::audit_previous(const RetrievalAnchor& anchor,
                                                    const std::vector<Step>& trajectory) {
    if (!consumed_anchors_.insert(anchor.serial).second) return {};  // already audited
    if (anchor.recommended_ids.empty()) return {};
    if (anchor.trajectory_position > trajectory.size())
        throw Error("audit anchor beyond trajectory length");

    std::vector<Step> window(
        trajectory.begin() + static_cast<std::ptrdiff_t>(anchor.trajectory_position),
        trajectory.begin() +
            static_cast<std::ptrdiff_t>(std::min(anchor.trajectory_position + config_.audit_window_steps,
                                                 trajectory.size())));

    std::vector<AuditVerdict> verdicts;
    try {
        std::ostringstream recommended;
        for (const auto& id : anchor.recommended_ids) {
            recommended << "- " << id;
            if (auto xpu = store_.get(id)) {
                for (const auto& advice : xpu->advice_nl) recommended << "\n  advice: " << advice;
            }
            recommended << "\n";
        }
        std::vector<ChatMessage> messages = {
            {"system", prompts_.get("retriever_audit")},
            {"user", "Recommended XPUs:\n" + recommended.str() +
                         "\nSubsequent setup steps:\n" + render_steps(window)},
        };
        std::string response =
            gateway_.chat(ChatRole::RetrieverAudit, messages, ResponseContract::StructuredDocument);
        std::size_t start = response.find('[');
        nlohmann::json j = start == std::string::npos
                               ? nlohmann::json(nlohmann::json::value_t::discarded)
                               : nlohmann::json::parse(response.substr(start), nullptr, false);
        if (j.is_discarded() || !j.is_array())
            throw GatewayFailure("audit response is not a JSON array");

        std::map<std::string, std::pair<AuditOutcome, std::string>> by_id;
        for (const auto& item : j) {
            if (!item.is_object() || !item.contains("xpu_id") ||
                !item.at("xpu_id").is_string())
                continue;
            std::string id = item.at("xpu_id").get<std::string>();
            std::string verdict = item.contains("verdict") && item.at("verdict").is_string()
                                      ? item.at("verdict").get<std::string>()
                                      : "neutral";
            AuditOutcome outcome = AuditOutcome::Neutral;
            if (verdict == "success") outcome = AuditOutcome::Success;
            else if (verdict == "failure") outcome = AuditOutcome::Failure;
            std::string rationale = item.contains("rationale") && item.at("rationale").is_string()
                                        ? item.at("rationale").get<std::string>()
                                        : "";
            by_id[id] = {outcome, rationale};
        }
        for (const auto& id : anchor.recommended_ids) {
            AuditVerdict v;
            v.xpu_id = id;
            auto it = by_id.find(id);
            if (it != by_id.end()) {
                v.outcome = it->second.first;
                v.rationale = it->second.second;
            } else {
                v.rationale = "no verdict returned";
            }
            verdicts.push_back(std::move(v));
        }
    } catch (const GatewayFailure& e) {
        if (log_) log_->note(std::string("audit degraded, all verdicts neutral: ") + e.what());
        verdicts.clear();
        for (const auto& id : anchor.recommended_ids)
            verdicts.push_back({id, AuditOutcome::Neutral, "audit unavailable"});
        return verdicts;
    }

    for (const auto& v : verdicts) {
        TelemetryDelta delta;
        switch (v.outcome) {
            case AuditOutcome::Success: delta.successes = 1; break;
            case AuditOutcome::Failure: delta.failures = 1; break;
            case AuditOutcome::Neutral: continue;
        }
        try {
            store_.update_telemetry(v.xpu_id, delta);
        } catch (const UnknownId&) {
            if (log_) log_->note("audited XPU no longer in store: " + v.xpu_id);
        }
    }
    return verdicts;
}

}  // namespace setupx
