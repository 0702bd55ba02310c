#include "setupx/agent.hpp"

#include <chrono>
#include <regex>
#include <sstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

std::string truncate_output(const std::string& text, std::size_t max_chars) {
    if (text.size() <= max_chars) return text;
    return text.substr(0, max_chars / 2) + "\n... [truncated] ...\n" +
           text.substr(text.size() - max_chars / 2);
}

std::string escape_regex(const std::string& text) {
    static const std::string special = R"(\^$.|?*+()[]{})";
    std::string out;
    for (char c : text) {
        if (special.find(c) != std::string::npos) out += '\\';
        out += c;
    }
    return out;
}

// The first error-signal line of the failing output, as a literal regex.
std::string signature_from_failure(const ExecResult& result) {
    std::istringstream in(result.combined_output());
    std::string line;
    while (std::getline(in, line))
        if (line_is_error_signal(line)) return escape_regex(line);
    return "exit code " + std::to_string(result.exit_code);
}

}  // namespace

void replay_trajectory(const Trajectory& trajectory, Sandbox& sandbox,
                       double command_timeout_s) {
    for (const Step& step : trajectory.steps) {
        sandbox.set_step_index(step.index);
        switch (step.action.kind) {
            case ActionKind::ShellCommand:
                sandbox.exec(step.action.command, command_timeout_s);
                break;
            case ActionKind::SetEnv:
                if (step.observation.kind == "set_env")
                    sandbox.set_env(step.action.env_key, step.action.env_value);
                break;
            case ActionKind::TryXpuSuggestion: {
                if (step.observation.kind != "trial") break;
                std::vector<std::string> commands =
                    step.observation.detail.value("commands", std::vector<std::string>{});
                std::optional<ErrorProbe> probe;
                if (step.observation.detail.contains("probe_command"))
                    probe = ErrorProbe{
                        step.observation.detail.value("probe_command", std::string{}),
                        step.observation.detail.value("probe_signature", std::string{})};
                if (!commands.empty()) sandbox.trial(commands, probe, command_timeout_s);
                break;
            }
            case ActionKind::RollbackEnv:
                if (step.observation.kind == "rollback") sandbox.rollback(step.action.n_frames);
                break;
            case ActionKind::Verify:
            case ActionKind::Finish:
                break;  // read-only or terminal
        }
    }
}

SetupAgent::SetupAgent(Sandbox& sandbox, Retriever* retriever, InLoopVerifier& verifier,
                       LlmGateway& gateway, const PromptLibrary& prompts, AgentConfig config,
                       RunLog* log)
    : sandbox_(sandbox),
      retriever_(retriever),
      verifier_(verifier),
      gateway_(gateway),
      prompts_(prompts),
      config_(std::move(config)),
      log_(log) {}

std::string SetupAgent::render_context(const Trajectory& trajectory) const {
    std::ostringstream out;
    out << "Repository: " << trajectory.task.source << " @ " << trajectory.task.revision << "\n";
    if (!trajectory.task.execution_targets.empty()) {
        out << "Documented execution targets:\n";
        for (const auto& t : trajectory.task.execution_targets) out << "  - " << t << "\n";
    }
    out << "Snapshot stack depth: " << sandbox_.stack_depth() << "\n\n";

    std::size_t begin = trajectory.steps.size() > config_.prompt_window_steps
                            ? trajectory.steps.size() - config_.prompt_window_steps
                            : 0;
    out << "Recent steps:\n";
    for (std::size_t i = begin; i < trajectory.steps.size(); ++i) {
        const Step& s = trajectory.steps[i];
        out << "[" << s.index << "] " << action_kind_name(s.action.kind);
        if (!s.action.command.empty()) out << " `" << s.action.command << "`";
        out << "\n" << truncate_output(s.observation.text, config_.observation_max_chars) << "\n";
    }

    if (!current_retrieval_.empty()) {
        out << "\nRetrieved experience (XPUs):\n";
        for (const auto& xpu : current_retrieval_) {
            out << "- id: " << xpu.id << " (hits " << xpu.telemetry.hits << ", successes "
                << xpu.telemetry.successes << ", failures " << xpu.telemetry.failures << ")\n";
            for (const auto& advice : xpu.advice_nl) out << "  advice: " << advice << "\n";
            for (const auto& atom : xpu.atoms) {
                try {
                    out << "  fix: " << render_atom(atom, config_.atom_context) << "\n";
                } catch (const Error&) {
                    // unrenderable atoms stay out of the prompt
                }
            }
        }
    }
    return out.str();
}

bool SetupAgent::last_step_signals_failure(const Trajectory& trajectory) const {
    if (trajectory.steps.empty()) return false;
    const Observation& o = trajectory.steps.back().observation;
    if (o.detail.contains("exit_code") && o.detail.value("exit_code", 0) != 0) return true;
    std::istringstream in(o.text);
    std::string line;
    while (std::getline(in, line))
        if (line_is_error_signal(line)) return true;
    return false;
}

void SetupAgent::maybe_retrieve(Trajectory& trajectory) {
    if (!config_.xpu_enabled || retriever_ == nullptr) return;
    if (!last_step_signals_failure(trajectory)) return;

    ExecResult last;
    const Observation& o = trajectory.steps.back().observation;
    if (o.detail.contains("exit_code"))
        last = exec_result_from_json(o.detail);
    else
        last.stdout_text = o.text;

    std::size_t begin = trajectory.steps.size() > config_.prompt_window_steps
                            ? trajectory.steps.size() - config_.prompt_window_steps
                            : 0;
    std::vector<Step> tail(trajectory.steps.begin() + static_cast<std::ptrdiff_t>(begin),
                           trajectory.steps.end());
    HybridSituation situation = retriever_->build_situation(tail, last);
    RetrievalResult result =
        retriever_->retrieve(situation, trajectory.steps, trajectory.steps.size());
    trajectory.anchors.push_back(result.anchor);
    current_retrieval_ = result.xpus;
    if (log_)
        log_->note("retrieval at step " + std::to_string(trajectory.steps.size()) + " returned " +
                   std::to_string(result.xpus.size()) + " XPUs");
}

ParsedAction SetupAgent::think(const Trajectory& trajectory) {
    std::string system_prompt = prompts_.get("setup");
    std::string context = render_context(trajectory);
    std::string diagnostic;
    for (std::size_t attempt = 0; attempt <= config_.reparse_retries; ++attempt) {
        std::vector<ChatMessage> messages = {{"system", system_prompt}, {"user", context}};
        if (!diagnostic.empty())
            messages.push_back({"user", "Your previous reply could not be used: " + diagnostic +
                                            "\nReply again with one valid JSON action object."});
        std::string response =
            gateway_.chat(ChatRole::Setup, messages, ResponseContract::StructuredDocument);
        try {
            return parse_action(response);
        } catch (const MalformedAction& e) {
            diagnostic = e.reason;
            if (log_) log_->note("malformed model action (attempt " +
                                 std::to_string(attempt + 1) + "): " + diagnostic);
        }
    }
    throw GatewayFailure("model kept producing malformed actions: " + diagnostic);
}

Observation SetupAgent::dispatch(const Action& action, const Trajectory& trajectory) {
    Observation o;
    switch (action.kind) {
        case ActionKind::ShellCommand: {
            ExecResult result = sandbox_.exec(action.command, config_.command_timeout_s);
            o = observation_from_exec(result);
            if (!result.ok()) {
                last_failing_exec_ = result;
                last_failing_command_ = action.command;
            }
            break;
        }
        case ActionKind::SetEnv: {
            try {
                sandbox_.set_env(action.env_key, action.env_value);
                o.kind = "set_env";
                o.text = "environment variable " + action.env_key + " persisted";
                o.detail = {{"env_key", action.env_key}, {"env_value", action.env_value}};
            } catch (const InvalidKey& e) {
                o.kind = "error";
                o.text = e.what();
            }
            break;
        }
        case ActionKind::TryXpuSuggestion: {
            const Xpu* chosen = nullptr;
            for (const auto& xpu : current_retrieval_)
                if (xpu.id == action.xpu_suggestion_id) chosen = &xpu;
            if (chosen == nullptr) {
                o.kind = "error";
                o.text = "unknown xpu_suggestion_id '" + action.xpu_suggestion_id +
                         "': not part of the current retrieval";
                break;
            }
            // Adapt stage: prefer the agent's tailored command; fall back to
            // rendering the XPU's own atoms.
            std::vector<std::string> commands;
            if (!action.command.empty()) {
                commands.push_back(action.command);
            } else {
                for (const auto& atom : chosen->atoms) {
                    try {
                        commands.push_back(render_atom(atom, config_.atom_context));
                    } catch (const Error& e) {
                        if (log_) log_->note("atom skipped during adapt: " + std::string(e.what()));
                    }
                }
            }
            std::optional<ErrorProbe> probe;
            if (last_failing_exec_)
                probe = ErrorProbe{last_failing_command_, signature_from_failure(*last_failing_exec_)};
            TrialOutcome trial = sandbox_.trial(commands, probe, config_.command_timeout_s);

            o.kind = "trial";
            nlohmann::json per_command = nlohmann::json::array();
            std::ostringstream text;
            text << "speculative trial of " << chosen->id << ": "
                 << (trial.status == TrialStatus::Success ? "success (changes kept)"
                                                          : "failure (checkpoint restored)");
            for (std::size_t i = 0; i < trial.per_command.size(); ++i) {
                per_command.push_back(exec_result_to_json(trial.per_command[i]));
                text << "\n$ " << commands[i] << "\nexit code "
                     << trial.per_command[i].exit_code;
                std::string body = trial.per_command[i].combined_output();
                if (!body.empty()) text << "\n" << body;
            }
            if (!trial.detail.empty()) text << "\n" << trial.detail;
            o.text = text.str();
            o.detail = {{"status", trial.status == TrialStatus::Success ? "success" : "failure"},
                        {"xpu_id", chosen->id},
                        {"commands", commands},
                        {"per_command", per_command}};
            if (probe) {
                o.detail["probe_command"] = probe->command;
                o.detail["probe_signature"] = probe->signature_regex;
            }
            if (trial.probe) o.detail["probe"] = exec_result_to_json(*trial.probe);
            if (trial.status == TrialStatus::Success) {
                last_failing_exec_.reset();
                last_failing_command_.clear();
            }
            break;
        }
        case ActionKind::RollbackEnv: {
            try {
                Snapshot restored = sandbox_.rollback(action.n_frames);
                o.kind = "rollback";
                o.text = "rolled back " + std::to_string(action.n_frames) +
                         " frame(s); restored checkpoint '" + restored.label +
                         "' from step " + std::to_string(restored.created_at_step);
                o.detail = {{"n_frames", action.n_frames},
                            {"restored_snapshot", restored.snapshot_id},
                            {"restored_label", restored.label}};
            } catch (const StackUnderflow& e) {
                o.kind = "error";
                o.text = e.what();
            }
            break;
        }
        case ActionKind::Verify: {
            std::size_t begin = trajectory.steps.size() > config_.prompt_window_steps
                                    ? trajectory.steps.size() - config_.prompt_window_steps
                                    : 0;
            std::vector<Step> tail(trajectory.steps.begin() + static_cast<std::ptrdiff_t>(begin),
                                   trajectory.steps.end());
            VerifierReport report = verifier_.verify(sandbox_, tail);
            o.kind = "verify";
            o.text = "verifier outcome: " + verify_outcome_name(report.outcome);
            if (!report.notes.empty()) o.text += "\nnotes: " + report.notes;
            for (const auto& [command, excerpt] : report.evidence)
                o.text += "\n$ " + command + " -> " + excerpt;
            o.detail = verifier_report_to_json(report);
            if (report.qualifies_for_finish()) verified_ok_ = true;
            break;
        }
        case ActionKind::Finish: {
            // handled by run(); dispatch only records the guard result
            if (verified_ok_) {
                o.kind = "finish";
                o.text = "setup declared complete: " + action.message;
            } else {
                o.kind = "error";
                o.text = "FINISH rejected: a successful VERIFY is required first";
            }
            break;
        }
    }
    return o;
}

Trajectory SetupAgent::run(const RepoTask& task, const Budgets& budgets) {
    const auto started = std::chrono::steady_clock::now();
    auto elapsed_s = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };

    Trajectory trajectory;
    trajectory.task = task;
    trajectory.budgets = budgets;
    current_retrieval_.clear();
    last_failing_exec_.reset();
    last_failing_command_.clear();
    verified_ok_ = false;

    // Provisioning: clone the pinned revision as the first scripted step.
    {
        Step clone;
        clone.index = 0;
        clone.thought = "provision the repository at its pinned revision";
        clone.action.kind = ActionKind::ShellCommand;
        clone.action.command = "git clone " + task.source + " repo && cd repo && git checkout " +
                               task.revision;
        sandbox_.set_step_index(0);
        ExecResult result = sandbox_.exec(clone.action.command, config_.command_timeout_s);
        clone.observation = observation_from_exec(result);
        if (!result.ok()) {
            last_failing_exec_ = result;
            last_failing_command_ = clone.action.command;
        }
        trajectory.steps.push_back(std::move(clone));
    }

    trajectory.outcome = RunOutcome::BudgetExhausted;
    while (trajectory.steps.size() < budgets.max_steps) {
        if (elapsed_s() > budgets.wall_clock_s) {
            trajectory.outcome = RunOutcome::Timeout;
            if (log_) log_->note("wall clock budget exceeded");
            return trajectory;
        }

        try {
            maybe_retrieve(trajectory);
        } catch (const Error& e) {
            if (log_) log_->note(std::string("retrieval skipped: ") + e.what());
        }

        ParsedAction parsed;
        try {
            parsed = think(trajectory);
        } catch (const GatewayFailure& e) {
            if (log_) log_->note(std::string("run aborted: ") + e.what());
            trajectory.outcome = RunOutcome::Aborted;
            return trajectory;
        }

        Step step;
        step.index = trajectory.steps.size();
        step.thought = parsed.thought;
        step.action = parsed.action;
        sandbox_.set_step_index(step.index);
        step.observation = dispatch(parsed.action, trajectory);
        bool finished =
            parsed.action.kind == ActionKind::Finish && step.observation.kind == "finish";
        trajectory.steps.push_back(std::move(step));

        if (finished) {
            trajectory.outcome = RunOutcome::Finished;
            return trajectory;
        }
        if (elapsed_s() > budgets.wall_clock_s) {
            trajectory.outcome = RunOutcome::Timeout;
            return trajectory;
        }
    }
    return trajectory;
}

}  // namespace setupx
