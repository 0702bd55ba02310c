#pragma once

#include <string>
#include <utility>
#include <vector>

#include "setupx/gateway.hpp"
#include "setupx/prompts.hpp"
#include "setupx/runlog.hpp"
#include "setupx/sandbox.hpp"
#include "setupx/trajectory.hpp"

namespace setupx {

// Setup-induced failure taxonomy.
enum class FailureCategory { C1, C2, C3, C4, Other };
const std::string& failure_category_name(FailureCategory c);
FailureCategory failure_category_from_name(const std::string& name);

struct Charge {
    std::string id;
    std::string description;
    FailureCategory category = FailureCategory::Other;
    std::vector<std::pair<std::string, std::string>> evidence;  // (command, excerpt), non-empty
};

enum class Ruling { Upheld, Dismissed };
enum class DismissalReason { Contradicted, OptionalDependency, ExternalFactor };
const std::string& dismissal_reason_name(DismissalReason r);

struct ChargeRuling {
    std::string charge_id;
    Ruling ruling = Ruling::Upheld;
    std::optional<DismissalReason> dismissal_reason;  // required when dismissed
    std::vector<std::string> verification_commands;   // 1..2 commands
    std::string notes;
};

enum class Decision { Guilty, NotGuilty };

struct Verdict {
    Decision decision = Decision::NotGuilty;
    std::vector<ChargeRuling> rulings;
};

// guilty iff at least one ruling is upheld.
Decision decide(const std::vector<ChargeRuling>& rulings);

nlohmann::json charge_to_json(const Charge& c);
Charge charge_from_json(const nlohmann::json& j);
nlohmann::json verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

struct AdjudicationRecord {
    std::vector<Charge> charges;
    Verdict verdict;
};

nlohmann::json adjudication_to_json(const AdjudicationRecord& record);
AdjudicationRecord adjudication_from_json(const nlohmann::json& j);
void save_adjudication(const AdjudicationRecord& record, const std::string& path);
AdjudicationRecord load_adjudication(const std::string& path);

struct AdjudicationConfig {
    std::size_t prosecutor_max_steps = 20;
    std::size_t judge_commands_per_charge = 2;
    double command_timeout_s = 600.0;
};

// Phase-2 protocol. The prosecutor investigates with full container access
// and files evidence-backed charges; the judge verifies each charge with 1-2
// independent commands in a fresh session and rules on it.
class Adjudicator {
public:
    Adjudicator(LlmGateway& gateway, const PromptLibrary& prompts, AdjudicationConfig config = {},
                RunLog* log = nullptr);

    // Runs the forced investigation order as a ReAct micro-loop. A run that
    // exhausts its budget without filing yields a synthesized
    // "investigation incomplete" charge.
    std::vector<Charge> prosecute(Sandbox& sandbox, const Trajectory& trajectory,
                                  const RepoTask& task);

    // Empty charges acquit immediately. Inconclusive verification upholds.
    Verdict judge(const std::vector<Charge>& charges, Sandbox& sandbox);

private:
    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    AdjudicationConfig config_;
    RunLog* log_;
};

}  // namespace setupx
