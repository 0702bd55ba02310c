#include "setupx/adjudication.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

std::string excerpt_of(const ExecResult& result, std::size_t max_chars = 600) {
    std::string text = "exit " + std::to_string(result.exit_code);
    std::string body = result.combined_output();
    if (!body.empty()) text += ": " + body;
    if (text.size() > max_chars) text = text.substr(0, max_chars) + "...";
    return text;
}

std::string render_trajectory_digest(const Trajectory& trajectory, std::size_t max_steps = 40) {
    std::ostringstream out;
    out << "outcome: " << run_outcome_name(trajectory.outcome) << "\n";
    std::size_t begin =
        trajectory.steps.size() > max_steps ? trajectory.steps.size() - max_steps : 0;
    for (std::size_t i = begin; i < trajectory.steps.size(); ++i) {
        const Step& s = trajectory.steps[i];
        out << "[" << s.index << "] " << action_kind_name(s.action.kind);
        if (!s.action.command.empty()) out << " `" << s.action.command << "`";
        std::string text = s.observation.text;
        if (text.size() > 400) text = text.substr(0, 400) + "...";
        out << "\n  " << text << "\n";
    }
    return out.str();
}

nlohmann::json parse_object(const std::string& response) {
    std::size_t brace = response.find('{');
    if (brace == std::string::npos) return nlohmann::json(nlohmann::json::value_t::discarded);
    return nlohmann::json::parse(response.substr(brace), nullptr, false);
}

}  // namespace

const std::string& failure_category_name(FailureCategory c) {
    static const std::string c1 = "C1", c2 = "C2", c3 = "C3", c4 = "C4", other = "other";
    switch (c) {
        case FailureCategory::C1: return c1;
        case FailureCategory::C2: return c2;
        case FailureCategory::C3: return c3;
        case FailureCategory::C4: return c4;
        default: return other;
    }
}

FailureCategory failure_category_from_name(const std::string& name) {
    if (name == "C1" || name == "c1") return FailureCategory::C1;
    if (name == "C2" || name == "c2") return FailureCategory::C2;
    if (name == "C3" || name == "c3") return FailureCategory::C3;
    if (name == "C4" || name == "c4") return FailureCategory::C4;
    return FailureCategory::Other;
}

const std::string& dismissal_reason_name(DismissalReason r) {
    static const std::string contradicted = "contradicted", optional_dep = "optional_dependency",
                             external = "external_factor";
    switch (r) {
        case DismissalReason::Contradicted: return contradicted;
        case DismissalReason::OptionalDependency: return optional_dep;
        default: return external;
    }
}

Decision decide(const std::vector<ChargeRuling>& rulings) {
    for (const auto& r : rulings)
        if (r.ruling == Ruling::Upheld) return Decision::Guilty;
    return Decision::NotGuilty;
}

nlohmann::json charge_to_json(const Charge& c) {
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& [command, excerpt] : c.evidence)
        evidence.push_back({{"command", command}, {"excerpt", excerpt}});
    return {{"id", c.id},
            {"description", c.description},
            {"category", failure_category_name(c.category)},
            {"evidence", evidence}};
}

Charge charge_from_json(const nlohmann::json& j) {
    Charge c;
    c.id = j.value("id", std::string{});
    c.description = j.value("description", std::string{});
    c.category = failure_category_from_name(j.value("category", std::string{"other"}));
    for (const auto& e : j.value("evidence", nlohmann::json::array()))
        c.evidence.emplace_back(e.value("command", std::string{}),
                                e.value("excerpt", std::string{}));
    return c;
}

nlohmann::json verdict_to_json(const Verdict& v) {
    nlohmann::json rulings = nlohmann::json::array();
    for (const auto& r : v.rulings) {
        nlohmann::json ruling = {{"charge_id", r.charge_id},
                                 {"ruling", r.ruling == Ruling::Upheld ? "upheld" : "dismissed"},
                                 {"verification_commands", r.verification_commands},
                                 {"notes", r.notes}};
        if (r.dismissal_reason) ruling["dismissal_reason"] = dismissal_reason_name(*r.dismissal_reason);
        rulings.push_back(ruling);
    }
    return {{"decision", v.decision == Decision::Guilty ? "guilty" : "not_guilty"},
            {"rulings", rulings}};
}

Verdict verdict_from_json(const nlohmann::json& j) {
    Verdict v;
    v.decision = j.value("decision", std::string{"not_guilty"}) == "guilty" ? Decision::Guilty
                                                                            : Decision::NotGuilty;
    for (const auto& r : j.value("rulings", nlohmann::json::array())) {
        ChargeRuling ruling;
        ruling.charge_id = r.value("charge_id", std::string{});
        ruling.ruling = r.value("ruling", std::string{}) == "upheld" ? Ruling::Upheld
                                                                     : Ruling::Dismissed;
        if (r.contains("dismissal_reason")) {
            const std::string reason = r.at("dismissal_reason").get<std::string>();
            if (reason == "contradicted") ruling.dismissal_reason = DismissalReason::Contradicted;
            else if (reason == "optional_dependency")
                ruling.dismissal_reason = DismissalReason::OptionalDependency;
            else if (reason == "external_factor")
                ruling.dismissal_reason = DismissalReason::ExternalFactor;
        }
        ruling.verification_commands =
            r.value("verification_commands", std::vector<std::string>{});
        ruling.notes = r.value("notes", std::string{});
        v.rulings.push_back(std::move(ruling));
    }
    return v;
}

nlohmann::json adjudication_to_json(const AdjudicationRecord& record) {
    nlohmann::json charges = nlohmann::json::array();
    for (const auto& c : record.charges) charges.push_back(charge_to_json(c));
    nlohmann::json v = verdict_to_json(record.verdict);
    return {{"charges", charges}, {"rulings", v.at("rulings")}, {"decision", v.at("decision")}};
}

AdjudicationRecord adjudication_from_json(const nlohmann::json& j) {
    AdjudicationRecord record;
    for (const auto& c : j.value("charges", nlohmann::json::array()))
        record.charges.push_back(charge_from_json(c));
    nlohmann::json v = {{"decision", j.value("decision", std::string{"not_guilty"})},
                        {"rulings", j.value("rulings", nlohmann::json::array())}};
    record.verdict = verdict_from_json(v);
    return record;
}

void save_adjudication(const AdjudicationRecord& record, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << adjudication_to_json(record).dump(2) << "\n";
    if (!out) throw IoFailure("write to " + path + " failed");
}

AdjudicationRecord load_adjudication(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path + " for reading");
    nlohmann::json j;
    in >> j;
    return adjudication_from_json(j);
}

Adjudicator::Adjudicator(LlmGateway& gateway, const PromptLibrary& prompts,
                         AdjudicationConfig config, RunLog* log)
    : gateway_(gateway), prompts_(prompts), config_(config), log_(log) {}

std::vector<Charge> Adjudicator::prosecute(Sandbox& sandbox, const Trajectory& trajectory,
                                           const RepoTask& task) {
    std::ostringstream transcript;
    transcript << "Repository: " << task.source << " @ " << task.revision << "\n";
    if (!task.execution_targets.empty()) {
        transcript << "Documented execution targets:\n";
        for (const auto& t : task.execution_targets) transcript << "  - " << t << "\n";
    }
    transcript << "\nSetup trajectory digest:\n" << render_trajectory_digest(trajectory) << "\n";

    std::vector<std::pair<std::string, ExecResult>> executed;
    for (std::size_t step = 0; step < config_.prosecutor_max_steps; ++step) {
        std::vector<ChatMessage> messages = {
            {"system", prompts_.get("prosecutor")},
            {"user", transcript.str() + "\nReply with your next JSON action."},
        };
        std::string response;
        try {
            response = gateway_.chat(ChatRole::Prosecutor, messages,
                                     ResponseContract::StructuredDocument);
        } catch (const GatewayFailure& e) {
            if (log_) log_->note(std::string("prosecutor gateway failure: ") + e.what());
            break;
        }
        nlohmann::json j = parse_object(response);
        if (j.is_discarded() || !j.is_object() || !j.contains("action") ||
            !j.at("action").is_string()) {
            transcript << "\n[format error] reply was not a valid action object\n";
            continue;
        }
        const std::string action = j.value("action", std::string{});
        if (action == "run") {
            if (!j.contains("command") || !j.at("command").is_string()) {
                transcript << "\n[format error] run requires a string 'command'\n";
                continue;
            }
            const std::string command = j.at("command").get<std::string>();
            ExecResult result = sandbox.exec(command, config_.command_timeout_s);
            executed.emplace_back(command, result);
            transcript << "\n$ " << command << "\n" << excerpt_of(result, 1200) << "\n";
            continue;
        }
        if (action == "charges") {
            std::vector<Charge> charges;
            std::size_t n = 0;
            for (const auto& c : j.value("charges", nlohmann::json::array())) {
                Charge charge;
                charge.id = "charge_" + std::to_string(++n);
                try {
                    charge.description = c.value("description", std::string{});
                    charge.category =
                        failure_category_from_name(c.value("category", std::string{"other"}));
                    for (const auto& e : c.value("evidence", nlohmann::json::array())) {
                        std::string command = e.value("command", std::string{});
                        std::string excerpt = e.value("excerpt", std::string{});
                        // Prefer the genuinely captured output when the cited
                        // command was actually executed this session.
                        for (const auto& [ran, result] : executed)
                            if (ran == command) excerpt = excerpt_of(result);
                        charge.evidence.emplace_back(command, excerpt);
                    }
                } catch (const nlohmann::json::exception& e) {
                    if (log_) log_->note(std::string("malformed charge skipped: ") + e.what());
                    --n;
                    continue;
                }
                if (charge.evidence.empty()) {
                    if (log_)
                        log_->note("charge without evidence dropped: " + charge.description);
                    continue;
                }
                charges.push_back(std::move(charge));
            }
            return charges;
        }
        transcript << "\n[format error] unknown action '" << action << "'\n";
    }

    // Budget exhausted without a filing: prosecute by default.
    Charge incomplete;
    incomplete.id = "charge_1";
    incomplete.description = "investigation incomplete: the prosecutor could not finish its "
                             "mandatory procedure";
    incomplete.category = FailureCategory::Other;
    if (!executed.empty())
        incomplete.evidence.emplace_back(executed.back().first, excerpt_of(executed.back().second));
    else
        incomplete.evidence.emplace_back("(none)", "prosecutor budget exhausted before any filing");
    return {incomplete};
}

Verdict Adjudicator::judge(const std::vector<Charge>& charges, Sandbox& sandbox) {
    Verdict verdict;
    if (charges.empty()) {
        verdict.decision = Decision::NotGuilty;
        return verdict;
    }

    for (const auto& charge : charges) {
        ChargeRuling ruling;
        ruling.charge_id = charge.id;

        std::ostringstream charge_text;
        charge_text << "Charge " << charge.id << " [" << failure_category_name(charge.category)
                    << "]: " << charge.description << "\nEvidence:\n";
        for (const auto& [command, excerpt] : charge.evidence)
            charge_text << "  $ " << command << " -> " << excerpt << "\n";

        // Round 1: the judge proposes 1-2 verification commands.
        std::vector<std::string> commands;
        try {
            std::vector<ChatMessage> messages = {
                {"system", prompts_.get("judge")},
                {"user", charge_text.str() + "\nCOMMANDS: propose your verification commands."},
            };
            nlohmann::json j = parse_object(
                gateway_.chat(ChatRole::Judge, messages, ResponseContract::StructuredDocument));
            if (j.is_object() && j.contains("commands") && j.at("commands").is_array())
                for (const auto& c : j.at("commands"))
                    if (c.is_string()) commands.push_back(c.get<std::string>());
        } catch (const GatewayFailure& e) {
            if (log_) log_->note(std::string("judge gateway failure: ") + e.what());
        } catch (const nlohmann::json::exception& e) {
            if (log_) log_->note(std::string("judge reply malformed: ") + e.what());
        }
        if (commands.size() > config_.judge_commands_per_charge)
            commands.resize(config_.judge_commands_per_charge);

        if (commands.empty()) {
            // Inconclusive verification upholds the charge.
            ruling.ruling = Ruling::Upheld;
            ruling.notes = "no verification commands produced; charge stands";
            ruling.verification_commands = {"(none)"};
            verdict.rulings.push_back(std::move(ruling));
            continue;
        }

        std::ostringstream results_text;
        for (const auto& command : commands) {
            ExecResult result = sandbox.exec(command, config_.command_timeout_s);
            ruling.verification_commands.push_back(command);
            results_text << "$ " << command << "\n" << excerpt_of(result, 1200) << "\n";
        }

        // Round 2: ruling over the observed results.
        bool ruled = false;
        try {
            std::vector<ChatMessage> messages = {
                {"system", prompts_.get("judge")},
                {"user", charge_text.str() + "\nYour verification results:\n" + results_text.str() +
                             "\nRULING: rule on this charge."},
            };
            nlohmann::json j = parse_object(
                gateway_.chat(ChatRole::Judge, messages, ResponseContract::StructuredDocument));
            if (j.is_object() && j.contains("ruling") && j.at("ruling").is_string()) {
                for (const char* field : {"dismissal_reason", "notes"})
                    if (j.contains(field) && !j.at(field).is_string()) j.erase(field);
                const std::string r = j.value("ruling", std::string{});
                if (r == "dismissed") {
                    const std::string reason = j.value("dismissal_reason", std::string{});
                    if (reason == "contradicted") {
                        ruling.dismissal_reason = DismissalReason::Contradicted;
                    } else if (reason == "optional_dependency") {
                        ruling.dismissal_reason = DismissalReason::OptionalDependency;
                    } else if (reason == "external_factor") {
                        ruling.dismissal_reason = DismissalReason::ExternalFactor;
                    }
                    if (ruling.dismissal_reason) {
                        ruling.ruling = Ruling::Dismissed;
                        ruling.notes = j.value("notes", std::string{});
                        ruled = true;
                    }
                } else if (r == "upheld") {
                    ruling.ruling = Ruling::Upheld;
                    ruling.notes = j.value("notes", std::string{});
                    ruled = true;
                }
            }
        } catch (const GatewayFailure& e) {
            if (log_) log_->note(std::string("judge gateway failure: ") + e.what());
        }
        if (!ruled) {
            ruling.ruling = Ruling::Upheld;
            ruling.notes = "verification inconclusive; charge stands";
        }
        verdict.rulings.push_back(std::move(ruling));
    }

    verdict.decision = decide(verdict.rulings);
    return verdict;
}

}  // namespace setupx
