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

enum class VerifyOutcome { Pass, SetupInducedFailure, ProjectIntrinsic };
const std::string& verify_outcome_name(VerifyOutcome outcome);
VerifyOutcome verify_outcome_from_name(const std::string& name);

struct VerifierReport {
    VerifyOutcome outcome = VerifyOutcome::SetupInducedFailure;
    std::vector<std::pair<std::string, std::string>> evidence;  // (command, output excerpt)
    std::string notes;

    // Non-blocking for FINISH: pass and project_intrinsic both qualify.
    bool qualifies_for_finish() const { return outcome != VerifyOutcome::SetupInducedFailure; }
};

nlohmann::json verifier_report_to_json(const VerifierReport& report);
VerifierReport verifier_report_from_json(const nlohmann::json& j);

struct FilterDecision {
    bool allowed = true;
    std::string reason;
};

// Lexical read-only gate for verifier commands: blocks package-manager
// mutation verbs, redirections and file-writing utilities aimed outside
// /tmp, version-control mutations and environment edits. Reads, listings,
// test runners and /tmp writes pass.
FilterDecision readonly_filter(const std::string& command);

struct VerifierConfig {
    std::size_t max_steps = 12;
    double command_timeout_s = 600.0;
};

// Read-only ReAct micro-agent that checks environment readiness with the
// project's native test path and classifies failures as setup-induced or
// project-intrinsic.
class InLoopVerifier {
public:
    InLoopVerifier(LlmGateway& gateway, const PromptLibrary& prompts, VerifierConfig config = {},
                   RunLog* log = nullptr);

    VerifierReport verify(Sandbox& sandbox, const std::vector<Step>& trajectory_tail);

private:
    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    VerifierConfig config_;
    RunLog* log_;
};

}  // namespace setupx
