#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "setupx/sandbox.hpp"

namespace setupx {

enum class ActionKind {
    ShellCommand,
    TryXpuSuggestion,
    SetEnv,
    RollbackEnv,
    Verify,
    Finish,
};

const std::string& action_kind_name(ActionKind kind);  // "SHELL_COMMAND", ...
ActionKind action_kind_from_name(const std::string& name);

struct Action {
    ActionKind kind = ActionKind::ShellCommand;
    std::string command;            // SHELL_COMMAND, TRY_XPU_SUGGESTION (optional there)
    std::string xpu_suggestion_id;  // TRY_XPU_SUGGESTION
    std::string reasoning;          // TRY_XPU_SUGGESTION
    std::string env_key;            // SET_ENV
    std::string env_value;          // SET_ENV
    std::size_t n_frames = 1;       // ROLLBACK_ENV
    std::string message;            // FINISH
};

// Validates a model response document against the action schema:
// {"thought": ..., "action_type": ..., "content": {...}}. Tolerates a JSON
// object wrapped in markdown code fences. Throws MalformedAction with a
// diagnostic suitable for feeding back to the model.
struct ParsedAction {
    std::string thought;
    Action action;
};
ParsedAction parse_action(const std::string& document);

nlohmann::json action_to_json(const Action& action);
Action action_from_json(const nlohmann::json& j);

// Observation attached to a step: an exec result, a trial/verify/rollback
// report, or an error note. `kind` is one of exec | trial | verify |
// rollback | set_env | error | finish | note; `text` is the rendering shown
// to the model and `detail` the structured payload.
struct Observation {
    std::string kind;
    std::string text;
    nlohmann::json detail = nlohmann::json::object();
};

Observation observation_from_exec(const ExecResult& result);
nlohmann::json exec_result_to_json(const ExecResult& result);
ExecResult exec_result_from_json(const nlohmann::json& j);

struct Step {
    std::size_t index = 0;
    std::string thought;
    Action action;
    Observation observation;
};

struct RetrievalAnchor {
    std::uint64_t serial = 0;
    std::vector<std::string> recommended_ids;
    std::size_t trajectory_position = 0;
};

struct RepoTask {
    std::string source;
    std::string revision;
    std::vector<std::string> execution_targets;
    std::string base_image = "ubuntu:22.04";
    std::string name;  // short label for run directories; derived from source when empty
};

nlohmann::json repo_task_to_json(const RepoTask& task);
RepoTask repo_task_from_json(const nlohmann::json& j);

enum class RunOutcome { Finished, BudgetExhausted, Timeout, Aborted };
const std::string& run_outcome_name(RunOutcome outcome);
RunOutcome run_outcome_from_name(const std::string& name);

struct Budgets {
    std::size_t max_steps = 60;
    double wall_clock_s = 3600.0;
};

struct Trajectory {
    RepoTask task;
    Budgets budgets;
    std::vector<Step> steps;
    std::vector<RetrievalAnchor> anchors;
    RunOutcome outcome = RunOutcome::Aborted;

    // At most one FINISH step, always last when present.
    bool has_finish() const;
    // True when some VERIFY step reported pass or project_intrinsic.
    bool has_qualifying_verify() const;
};

// JSON Lines: a header line {"repo_task":..., "budgets":...}, one step per
// line, and a footer line {"outcome":..., "anchors":[...]}.
void save_trajectory(const Trajectory& t, const std::string& path);
Trajectory load_trajectory(const std::string& path);

nlohmann::json step_to_json(const Step& s);
Step step_from_json(const nlohmann::json& j);

}  // namespace setupx
