#include "setupx/distiller.hpp"

#include <sstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

nlohmann::json parse_json_payload(const std::string& response) {
    std::size_t obj = response.find('{');
    std::size_t arr = response.find('[');
    std::size_t start = std::min(obj, arr);
    if (start == std::string::npos) return nlohmann::json(nlohmann::json::value_t::discarded);
    return nlohmann::json::parse(response.substr(start), nullptr, false);
}

std::string render_trajectory_for_distiller(const Trajectory& trajectory) {
    std::ostringstream out;
    out << "outcome: " << run_outcome_name(trajectory.outcome) << "\n";
    for (const auto& s : trajectory.steps) {
        out << "[" << s.index << "] " << action_kind_name(s.action.kind);
        if (!s.action.command.empty()) out << " `" << s.action.command << "`";
        std::string text = s.observation.text;
        if (text.size() > 500) text = text.substr(0, 500) + "...";
        out << "\n  " << text << "\n";
    }
    return out.str();
}

}  // namespace

std::size_t DistillationReport::new_count() const {
    std::size_t n = 0;
    for (const auto& o : outcomes)
        if (o.action == IngestAction::IngestedNew) ++n;
    return n;
}

std::size_t DistillationReport::merged_count() const {
    std::size_t n = 0;
    for (const auto& o : outcomes)
        if (o.action == IngestAction::MergedInto) ++n;
    return n;
}

nlohmann::json distillation_report_to_json(const DistillationReport& report) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : report.pairs)
        pairs.push_back({{"problem", {{"step", p.problem_step}, {"error", p.problem_error}}},
                         {"fix", {{"step", p.fix_step}, {"action", p.fix_action}}},
                         {"confidence", p.confidence}});
    nlohmann::json outcomes = nlohmann::json::array();
    for (const auto& o : report.outcomes)
        outcomes.push_back(
            {{"action", o.action == IngestAction::IngestedNew ? "ingested_new" : "merged_into"},
             {"xpu_id", o.xpu_id}});
    return {{"pairs", pairs},
            {"candidates", report.candidates},
            {"outcomes", outcomes},
            {"new", report.new_count()},
            {"merged", report.merged_count()}};
}

Distiller::Distiller(XpuStore& store, LlmGateway& gateway, const PromptLibrary& prompts,
                     DistillerConfig config, RunLog* log)
    : store_(store), gateway_(gateway), prompts_(prompts), config_(config), log_(log) {}

std::vector<ProblemFixPair> Distiller::ingest_trajectory(
    const Trajectory& trajectory, const std::optional<AdjudicationRecord>& adjudication) {
    if (trajectory.steps.empty()) return {};

    std::ostringstream payload;
    if (adjudication) {
        payload << "phase2_context (read this first):\n"
                << adjudication_to_json(*adjudication).dump(2) << "\n\n";
    } else {
        payload << "phase2_context: absent for this run\n\n";
    }
    payload << "Trajectory:\n" << render_trajectory_for_distiller(trajectory);

    std::vector<ProblemFixPair> pairs;
    try {
        std::vector<ChatMessage> messages = {
            {"system", prompts_.get("distiller")},
            {"user", "EXTRACT problem-fix pairs from this run.\n\n" + payload.str()},
        };
        std::string response =
            gateway_.chat(ChatRole::Distiller, messages, ResponseContract::StructuredDocument);
        nlohmann::json j = parse_json_payload(response);
        if (j.is_discarded() || !j.is_array())
            throw GatewayFailure("extraction response is not a JSON array");
        for (const auto& item : j) {
            if (!item.is_object() || !item.contains("problem") || !item.contains("fix")) continue;
            ProblemFixPair pair;
            try {
                pair.problem_step = item.at("problem").value("step", std::size_t{0});
                pair.problem_error = item.at("problem").value("error", std::string{});
                pair.fix_step = item.at("fix").value("step", std::size_t{0});
                pair.fix_action = item.at("fix").value("action", std::string{});
                pair.confidence = item.value("confidence", 0.0);
            } catch (const nlohmann::json::exception& e) {
                if (log_) log_->note(std::string("malformed pair skipped: ") + e.what());
                continue;
            }
            if (pair.fix_step < pair.problem_step) {
                if (log_)
                    log_->note("pair dropped, fix step " + std::to_string(pair.fix_step) +
                               " precedes problem step " + std::to_string(pair.problem_step));
                continue;
            }
            pairs.push_back(std::move(pair));
        }
    } catch (const GatewayFailure& e) {
        if (log_) log_->note(std::string("extraction failed: ") + e.what());
        return {};
    }
    return pairs;
}

std::vector<CandidateXpu> Distiller::distill(const std::vector<ProblemFixPair>& pairs) {
    if (pairs.empty()) return {};

    std::ostringstream payload;
    for (const auto& p : pairs)
        payload << "- problem at step " << p.problem_step << ": " << p.problem_error
                << "\n  fixed at step " << p.fix_step << " by: " << p.fix_action
                << " (confidence " << p.confidence << ")\n";

    std::vector<CandidateXpu> candidates;
    try {
        std::vector<ChatMessage> messages = {
            {"system", prompts_.get("distiller")},
            {"user", "DISTILL these problem-fix pairs into XPU candidates.\n\n" + payload.str()},
        };
        std::string response =
            gateway_.chat(ChatRole::Distiller, messages, ResponseContract::StructuredDocument);
        nlohmann::json j = parse_json_payload(response);
        if (j.is_discarded() || !j.is_array())
            throw GatewayFailure("distill response is not a JSON array");
        for (const auto& item : j) {
            try {
                Xpu xpu = xpu_from_json(item);
                if (!xpu.id.empty()) {
                    if (log_) log_->note("candidate carried an id, stripped: " + xpu.id);
                    xpu.id.clear();
                }
                xpu.telemetry = Telemetry{};  // candidates start with a blank record
                validate_xpu(xpu);
                candidates.push_back(CandidateXpu{std::move(xpu)});
            } catch (const std::exception& e) {
                if (log_) log_->note(std::string("candidate rejected: ") + e.what());
            }
        }
    } catch (const GatewayFailure& e) {
        if (log_) log_->note(std::string("distillation failed: ") + e.what());
        return {};
    }
    return candidates;
}

std::string Distiller::embedding_text(const Xpu& xpu) {
    std::string text;
    for (const auto& trigger : xpu.signals.situation_triggers) {
        if (!text.empty()) text += " ";
        text += trigger;
    }
    if (!xpu.advice_nl.empty()) {
        if (!text.empty()) text += " ";
        text += xpu.advice_nl.front();
    }
    return text;
}

std::vector<IngestOutcome> Distiller::dedup_and_ingest(const std::vector<CandidateXpu>& candidates,
                                                       const std::string& provenance) {
    std::vector<IngestOutcome> outcomes;
    for (const auto& candidate : candidates) {
        Xpu xpu = candidate.xpu;
        if (!provenance.empty()) xpu.provenance = provenance;

        Embedding embedding;
        try {
            embedding = gateway_.embed(embedding_text(xpu));
        } catch (const GatewayFailure& e) {
            if (log_) log_->note(std::string("candidate embedding failed, skipped: ") + e.what());
            continue;
        }

        auto duplicates = store_.find_duplicates(embedding, config_.dedup_threshold);
        if (duplicates.empty()) {
            std::string id = store_.ingest(xpu, embedding);
            outcomes.push_back({IngestAction::IngestedNew, id});
            continue;
        }

        // Judge equivalence against the top pre-filter hit only.
        const std::string& top_id = duplicates.front().first;
        auto existing = store_.get(top_id);
        bool duplicate = false;
        std::vector<std::string> fused_advice;
        if (existing) {
            try {
                std::vector<ChatMessage> messages = {
                    {"system", prompts_.get("distiller")},
                    {"user", "JUDGE-DUPLICATE: do these two entries describe the same root cause "
                             "and fix?\n\nExisting entry:\n" +
                                 xpu_to_json(*existing).dump(2) + "\n\nCandidate:\n" +
                                 xpu_to_json(xpu).dump(2)},
                };
                std::string response = gateway_.chat(ChatRole::Distiller, messages,
                                                     ResponseContract::StructuredDocument);
                nlohmann::json j = parse_json_payload(response);
                if (j.is_object()) {
                    duplicate = j.contains("duplicate") && j.at("duplicate").is_boolean() &&
                                j.at("duplicate").get<bool>();
                    if (j.contains("fused_advice") && j.at("fused_advice").is_array())
                        for (const auto& a : j.at("fused_advice"))
                            if (a.is_string()) fused_advice.push_back(a.get<std::string>());
                }
            } catch (const GatewayFailure& e) {
                // merging on uncertainty destroys information; ingest as new
                if (log_)
                    log_->note(std::string("equivalence judgment failed, ingesting as new: ") +
                               e.what());
                duplicate = false;
            }
        }

        if (duplicate && existing) {
            if (fused_advice.empty()) {
                // deterministic fallback fusion: primary advice plus unseen sentences
                fused_advice = existing->advice_nl;
                for (const auto& sentence : xpu.advice_nl)
                    if (std::find(fused_advice.begin(), fused_advice.end(), sentence) ==
                        fused_advice.end())
                        fused_advice.push_back(sentence);
            }
            Xpu merged = merge_xpus(*existing, xpu, fused_advice);
            store_.replace_xpu(top_id, merged);
            outcomes.push_back({IngestAction::MergedInto, top_id});
        } else {
            std::string id = store_.ingest(xpu, embedding);
            outcomes.push_back({IngestAction::IngestedNew, id});
        }
    }
    return outcomes;
}

DistillationReport Distiller::run(const Trajectory& trajectory,
                                  const std::optional<AdjudicationRecord>& adjudication,
                                  const std::string& provenance) {
    DistillationReport report;
    report.pairs = ingest_trajectory(trajectory, adjudication);
    auto candidates = distill(report.pairs);
    report.candidates = candidates.size();
    report.outcomes = dedup_and_ingest(candidates, provenance.empty() ? trajectory.task.source
                                                                      : provenance);
    return report;
}

}  // namespace setupx
