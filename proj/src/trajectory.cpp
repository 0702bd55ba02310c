#include "setupx/trajectory.hpp"

#include <fstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

const std::vector<std::pair<ActionKind, std::string>>& action_names() {
    static const std::vector<std::pair<ActionKind, std::string>> names = {
        {ActionKind::ShellCommand, "SHELL_COMMAND"},
        {ActionKind::TryXpuSuggestion, "TRY_XPU_SUGGESTION"},
        {ActionKind::SetEnv, "SET_ENV"},
        {ActionKind::RollbackEnv, "ROLLBACK_ENV"},
        {ActionKind::Verify, "VERIFY"},
        {ActionKind::Finish, "FINISH"},
    };
    return names;
}

const std::vector<std::pair<RunOutcome, std::string>>& outcome_names() {
    static const std::vector<std::pair<RunOutcome, std::string>> names = {
        {RunOutcome::Finished, "finished"},
        {RunOutcome::BudgetExhausted, "budget_exhausted"},
        {RunOutcome::Timeout, "timeout"},
        {RunOutcome::Aborted, "aborted"},
    };
    return names;
}

// Accepts a bare JSON object or one wrapped in ``` fences, possibly with
// leading/trailing prose.
std::string extract_json_object(const std::string& document) {
    std::size_t start = document.find('{');
    std::size_t end = document.rfind('}');
    if (start == std::string::npos || end == std::string::npos || end < start)
        throw MalformedAction("no JSON object found in response");
    return document.substr(start, end - start + 1);
}

std::string require_string(const nlohmann::json& content, const std::string& field,
                           const std::string& action) {
    if (!content.contains(field) || !content.at(field).is_string() ||
        content.at(field).get<std::string>().empty())
        throw MalformedAction(action + " requires a non-empty '" + field + "' field");
    return content.at(field).get<std::string>();
}

}  // namespace

const std::string& action_kind_name(ActionKind kind) {
    for (const auto& [k, name] : action_names())
        if (k == kind) return name;
    throw Error("unmapped action kind");
}

ActionKind action_kind_from_name(const std::string& name) {
    for (const auto& [k, n] : action_names())
        if (n == name) return k;
    throw MalformedAction("unknown action_type: " + name);
}

namespace {

ParsedAction parse_validated(const nlohmann::json& j) {
    ParsedAction parsed;
    parsed.thought = j.value("thought", std::string{});
    const std::string type_name = j.at("action_type").get<std::string>();
    Action& action = parsed.action;
    action.kind = action_kind_from_name(type_name);

    nlohmann::json content = j.value("content", nlohmann::json::object());
    if (!content.is_object()) throw MalformedAction("'content' must be an object");

    switch (action.kind) {
        case ActionKind::ShellCommand:
            action.command = require_string(content, "command", "SHELL_COMMAND");
            break;
        case ActionKind::TryXpuSuggestion:
            action.xpu_suggestion_id =
                require_string(content, "xpu_suggestion_id", "TRY_XPU_SUGGESTION");
            action.command = content.value("command", std::string{});
            action.reasoning = content.value("reasoning", std::string{});
            break;
        case ActionKind::SetEnv:
            action.env_key = require_string(content, "env_key", "SET_ENV");
            if (!content.contains("env_value") || !content.at("env_value").is_string())
                throw MalformedAction("SET_ENV requires an 'env_value' string field");
            action.env_value = content.at("env_value").get<std::string>();
            break;
        case ActionKind::RollbackEnv: {
            if (content.contains("n_frames")) {
                if (!content.at("n_frames").is_number_integer() ||
                    content.at("n_frames").get<std::int64_t>() < 1)
                    throw MalformedAction("ROLLBACK_ENV 'n_frames' must be an integer >= 1");
                action.n_frames = content.at("n_frames").get<std::size_t>();
            } else {
                action.n_frames = 1;
            }
            break;
        }
        case ActionKind::Verify:
            break;
        case ActionKind::Finish:
            action.message = require_string(content, "message", "FINISH");
            break;
    }
    return parsed;
}

}  // namespace

ParsedAction parse_action(const std::string& document) {
    nlohmann::json j = nlohmann::json::parse(extract_json_object(document), nullptr, false);
    if (j.is_discarded()) throw MalformedAction("response is not valid JSON");
    if (!j.is_object()) throw MalformedAction("response must be a JSON object");
    if (!j.contains("action_type") || !j.at("action_type").is_string())
        throw MalformedAction("missing 'action_type'");
    try {
        return parse_validated(j);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedAction(std::string("field has the wrong type: ") + e.what());
    }
}

nlohmann::json action_to_json(const Action& action) {
    nlohmann::json content = nlohmann::json::object();
    switch (action.kind) {
        case ActionKind::ShellCommand:
            content["command"] = action.command;
            break;
        case ActionKind::TryXpuSuggestion:
            content["xpu_suggestion_id"] = action.xpu_suggestion_id;
            if (!action.command.empty()) content["command"] = action.command;
            if (!action.reasoning.empty()) content["reasoning"] = action.reasoning;
            break;
        case ActionKind::SetEnv:
            content["env_key"] = action.env_key;
            content["env_value"] = action.env_value;
            break;
        case ActionKind::RollbackEnv:
            content["n_frames"] = action.n_frames;
            break;
        case ActionKind::Verify:
            break;
        case ActionKind::Finish:
            content["message"] = action.message;
            break;
    }
    return {{"action_type", action_kind_name(action.kind)}, {"content", content}};
}

Action action_from_json(const nlohmann::json& j) {
    Action action;
    action.kind = action_kind_from_name(j.at("action_type").get<std::string>());
    nlohmann::json content = j.value("content", nlohmann::json::object());
    action.command = content.value("command", std::string{});
    action.xpu_suggestion_id = content.value("xpu_suggestion_id", std::string{});
    action.reasoning = content.value("reasoning", std::string{});
    action.env_key = content.value("env_key", std::string{});
    action.env_value = content.value("env_value", std::string{});
    action.n_frames = content.value("n_frames", std::size_t{1});
    action.message = content.value("message", std::string{});
    return action;
}

nlohmann::json exec_result_to_json(const ExecResult& result) {
    return {{"stdout", result.stdout_text},
            {"stderr", result.stderr_text},
            {"exit_code", result.exit_code},
            {"duration", result.duration_s}};
}

ExecResult exec_result_from_json(const nlohmann::json& j) {
    ExecResult r;
    r.stdout_text = j.value("stdout", std::string{});
    r.stderr_text = j.value("stderr", std::string{});
    r.exit_code = j.value("exit_code", 0);
    r.duration_s = j.value("duration", 0.0);
    return r;
}

Observation observation_from_exec(const ExecResult& result) {
    Observation o;
    o.kind = "exec";
    o.text = "exit code " + std::to_string(result.exit_code);
    if (!result.stdout_text.empty()) o.text += "\nstdout:\n" + result.stdout_text;
    if (!result.stderr_text.empty()) o.text += "\nstderr:\n" + result.stderr_text;
    o.detail = exec_result_to_json(result);
    return o;
}

nlohmann::json repo_task_to_json(const RepoTask& task) {
    return {{"source", task.source},
            {"revision", task.revision},
            {"execution_targets", task.execution_targets},
            {"base_image", task.base_image},
            {"name", task.name}};
}

RepoTask repo_task_from_json(const nlohmann::json& j) {
    RepoTask task;
    task.source = j.value("source", std::string{});
    task.revision = j.value("revision", std::string{});
    if (j.contains("execution_targets"))
        task.execution_targets = j.at("execution_targets").get<std::vector<std::string>>();
    task.base_image = j.value("base_image", std::string{"ubuntu:22.04"});
    task.name = j.value("name", std::string{});
    return task;
}

const std::string& run_outcome_name(RunOutcome outcome) {
    for (const auto& [o, name] : outcome_names())
        if (o == outcome) return name;
    throw Error("unmapped run outcome");
}

RunOutcome run_outcome_from_name(const std::string& name) {
    for (const auto& [o, n] : outcome_names())
        if (n == name) return o;
    throw Error("unknown run outcome: " + name);
}

bool Trajectory::has_finish() const {
    for (const auto& s : steps)
        if (s.action.kind == ActionKind::Finish) return true;
    return false;
}

bool Trajectory::has_qualifying_verify() const {
    for (const auto& s : steps) {
        if (s.action.kind != ActionKind::Verify) continue;
        const std::string outcome = s.observation.detail.value("outcome", std::string{});
        if (outcome == "pass" || outcome == "project_intrinsic") return true;
    }
    return false;
}

nlohmann::json step_to_json(const Step& s) {
    return {{"index", s.index},
            {"thought", s.thought},
            {"action", action_to_json(s.action)},
            {"observation",
             {{"kind", s.observation.kind},
              {"text", s.observation.text},
              {"detail", s.observation.detail}}}};
}

Step step_from_json(const nlohmann::json& j) {
    Step s;
    s.index = j.at("index").get<std::size_t>();
    s.thought = j.value("thought", std::string{});
    s.action = action_from_json(j.at("action"));
    const auto& o = j.at("observation");
    s.observation.kind = o.value("kind", std::string{});
    s.observation.text = o.value("text", std::string{});
    s.observation.detail = o.value("detail", nlohmann::json::object());
    return s;
}

void save_trajectory(const Trajectory& t, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    nlohmann::json header = {{"repo_task", repo_task_to_json(t.task)},
                             {"budgets",
                              {{"max_steps", t.budgets.max_steps},
                               {"wall_clock", t.budgets.wall_clock_s}}}};
    out << header.dump() << "\n";
    for (const auto& s : t.steps) out << step_to_json(s).dump() << "\n";
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& a : t.anchors)
        anchors.push_back({{"serial", a.serial},
                           {"recommended_ids", a.recommended_ids},
                           {"trajectory_position", a.trajectory_position}});
    nlohmann::json footer = {{"outcome", run_outcome_name(t.outcome)}, {"anchors", anchors}};
    out << footer.dump() << "\n";
    if (!out) throw IoFailure("write to " + path + " failed");
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path + " for reading");
    Trajectory t;
    std::string line;
    std::size_t line_number = 0;
    bool have_header = false, have_footer = false;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw CorruptRecord(line_number, "not valid JSON");
        try {
            if (!have_header) {
                t.task = repo_task_from_json(j.at("repo_task"));
                if (j.contains("budgets")) {
                    t.budgets.max_steps = j.at("budgets").value("max_steps", std::size_t{60});
                    t.budgets.wall_clock_s = j.at("budgets").value("wall_clock", 3600.0);
                }
                have_header = true;
            } else if (j.contains("outcome")) {
                t.outcome = run_outcome_from_name(j.at("outcome").get<std::string>());
                for (const auto& a : j.value("anchors", nlohmann::json::array())) {
                    RetrievalAnchor anchor;
                    anchor.serial = a.value("serial", std::uint64_t{0});
                    anchor.recommended_ids =
                        a.value("recommended_ids", std::vector<std::string>{});
                    anchor.trajectory_position = a.value("trajectory_position", std::size_t{0});
                    t.anchors.push_back(anchor);
                }
                have_footer = true;
            } else {
                t.steps.push_back(step_from_json(j));
            }
        } catch (const std::exception& e) {
            throw CorruptRecord(line_number, e.what());
        }
    }
    if (!have_header) throw CorruptRecord(0, "trajectory file has no header line");
    if (!have_footer) throw CorruptRecord(line_number, "trajectory file has no outcome footer");
    return t;
}

}  // namespace setupx
