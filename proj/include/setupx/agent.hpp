#pragma once

#include <optional>
#include <string>
#include <vector>

#include "setupx/gateway.hpp"
#include "setupx/prompts.hpp"
#include "setupx/retriever.hpp"
#include "setupx/runlog.hpp"
#include "setupx/sandbox.hpp"
#include "setupx/trajectory.hpp"
#include "setupx/verifier.hpp"

namespace setupx {

struct AgentConfig {
    bool xpu_enabled = true;
    std::size_t prompt_window_steps = 8;
    std::size_t observation_max_chars = 2000;
    std::size_t reparse_retries = 2;
    double command_timeout_s = 300.0;
    std::map<std::string, std::string> atom_context;  // placeholder values for atom rendering
};

// Re-executes a recorded trajectory's state-changing actions (shell, env,
// trials, rollbacks) against a fresh sandbox. On the simulated backend with
// the same fixtures this reproduces the run's final state exactly; VERIFY
// and FINISH steps are skipped as read-only.
void replay_trajectory(const Trajectory& trajectory, Sandbox& sandbox,
                       double command_timeout_s = 300.0);

// The main setup loop: observe, retrieve on failure signals, think, act.
// Owns nothing; sandbox, retriever, verifier and gateway are provided by the
// orchestrator so backends stay pluggable.
class SetupAgent {
public:
    SetupAgent(Sandbox& sandbox, Retriever* retriever, InLoopVerifier& verifier,
               LlmGateway& gateway, const PromptLibrary& prompts, AgentConfig config = {},
               RunLog* log = nullptr);

    // Provisions the repository (clone at the pinned revision is the first
    // scripted step), then loops until FINISH, step budget or wall clock.
    Trajectory run(const RepoTask& task, const Budgets& budgets);

    // One model call with bounded reparse retries; throws GatewayFailure when
    // retries are exhausted (run() maps that to an aborted outcome).
    ParsedAction think(const Trajectory& trajectory);

    // Executes a validated action against the backends. Never throws; every
    // error becomes an observation.
    Observation dispatch(const Action& action, const Trajectory& trajectory);

private:
    std::string render_context(const Trajectory& trajectory) const;
    bool last_step_signals_failure(const Trajectory& trajectory) const;
    void maybe_retrieve(Trajectory& trajectory);

    Sandbox& sandbox_;
    Retriever* retriever_;
    InLoopVerifier& verifier_;
    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    AgentConfig config_;
    RunLog* log_;

    std::vector<Xpu> current_retrieval_;
    std::optional<ExecResult> last_failing_exec_;
    std::string last_failing_command_;
    bool verified_ok_ = false;
};

}  // namespace setupx
