#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace setupx {

// Exit code recorded when a command exceeds its timeout.
inline constexpr int kTimeoutExitCode = 124;

struct ExecResult {
    std::string stdout_text;
    std::string stderr_text;
    int exit_code = 0;
    double duration_s = 0.0;

    bool ok() const { return exit_code == 0; }
    std::string combined_output() const { return stdout_text + (stdout_text.empty() || stderr_text.empty() ? "" : "\n") + stderr_text; }
};

struct Snapshot {
    std::string snapshot_id;
    std::size_t created_at_step = 0;
    std::string label;
};

// Original-error probe for speculative trials: re-run `command` after the
// candidate fix; the trial clears only if the combined output no longer
// matches `signature_regex`.
struct ErrorProbe {
    std::string command;
    std::string signature_regex;
};

enum class TrialStatus { Success, Failure };

struct TrialOutcome {
    TrialStatus status = TrialStatus::Failure;
    std::vector<ExecResult> per_command;
    std::optional<ExecResult> probe;
    std::string detail;
};

// Checkpointed execution environment with a LIFO snapshot stack. Concrete
// backends provide state capture/restore and command execution; trial and
// rollback share one implementation so both backends obey the same stack law.
class Sandbox {
public:
    virtual ~Sandbox() = default;

    virtual ExecResult exec(const std::string& command, double timeout_s = 300.0) = 0;

    // Persists an environment variable for all subsequent exec calls; captured
    // by snapshots. Throws InvalidKey for empty keys or keys containing '='.
    virtual void set_env(const std::string& key, const std::string& value) = 0;

    // Captures full state, pushes a frame, returns the depth after the push.
    std::size_t push_checkpoint(const std::string& label);

    // Pops n_frames frames and restores the state captured by the deepest
    // popped frame. Throws StackUnderflow.
    Snapshot rollback(std::size_t n_frames);

    // Speculative trial: checkpoint, run commands halting on the first
    // non-zero exit, then verify. Success requires every command to exit 0
    // and, when a probe is given, the re-run probe output to no longer match
    // the original error signature. On success the new state is retained and
    // the checkpoint stays on the stack; on failure the just-pushed frame is
    // popped and restored, leaving depth and state exactly as before.
    TrialOutcome trial(const std::vector<std::string>& commands,
                       const std::optional<ErrorProbe>& probe = std::nullopt,
                       double timeout_s = 300.0);

    std::size_t stack_depth() const { return stack_.size(); }
    const std::vector<Snapshot>& snapshot_stack() const { return stack_; }

    // Trajectory step index recorded on the next snapshot.
    void set_step_index(std::size_t index) { step_index_ = index; }

    // Best-effort semantic read-only enforcement; backends may ignore it.
    virtual void set_readonly_guard(bool) {}

protected:
    virtual std::string capture_state(const std::string& label) = 0;
    virtual void restore_state(const std::string& snapshot_id) = 0;
    virtual void discard_state(const std::string& snapshot_id) = 0;

    std::vector<Snapshot> stack_;
    std::size_t step_index_ = 0;
};

// -- deterministic in-memory simulator ---------------------------------------

// Full simulator state: a path->content filesystem, the persisted environment
// and the working directory. Deep-copied on snapshot.
struct SimState {
    std::map<std::string, std::string> files;
    std::map<std::string, std::string> env;
    std::string cwd = "/workspace";

    bool operator==(const SimState&) const = default;
};

struct SimEffect {
    enum class Kind { WriteFile, AppendFile, RemoveFile, SetEnv, UnsetEnv, Chdir };
    Kind kind = Kind::WriteFile;
    std::string path;   // file effects / chdir target
    std::string value;  // content / env value
    std::string key;    // env key
};

// One scripted command rule. Commands are matched by regex search over the
// full command string; the first matching rule wins. `when_file_exists` /
// `when_file_absent` make a rule conditional on simulator state so fixtures
// can express before/after-fix behavior of the same command.
struct SimRule {
    std::string pattern;
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
    double duration_s = 0.01;
    std::vector<SimEffect> effects;
    std::string when_file_exists;
    std::string when_file_absent;
};

class SimSandbox : public Sandbox {
public:
    SimSandbox() = default;
    explicit SimSandbox(std::vector<SimRule> rules);

    // Fixture format: [{"pattern": "...", "exit_code": 0, "stdout": "...",
    // "stderr": "...", "duration": 0.01, "when_file_exists": "...",
    // "effects": [{"write": path, "content": ...} | {"append": path,
    // "content": ...} | {"remove": path} | {"set_env": key, "value": ...} |
    // {"unset_env": key} | {"chdir": path}]}, ...]
    static std::vector<SimRule> rules_from_json(const nlohmann::json& j);
    static std::shared_ptr<SimSandbox> from_fixture_file(const std::string& path);

    ExecResult exec(const std::string& command, double timeout_s = 300.0) override;
    void set_env(const std::string& key, const std::string& value) override;
    void set_readonly_guard(bool on) override { readonly_guard_ = on; }

    const SimState& state() const { return state_; }
    SimState state_copy() const { return state_; }
    void seed_state(SimState state) { state_ = std::move(state); }

    // Fresh session over the current state: same files/env/cwd and rules,
    // empty snapshot stack.
    std::shared_ptr<SimSandbox> fork() const;

protected:
    std::string capture_state(const std::string& label) override;
    void restore_state(const std::string& snapshot_id) override;
    void discard_state(const std::string& snapshot_id) override;

private:
    ExecResult run_builtin(const std::string& command, bool& handled);
    bool apply_effects(const std::vector<SimEffect>& effects, ExecResult& result);
    bool effect_allowed(const SimEffect& effect) const;
    std::string resolve_path(const std::string& path) const;

    SimState state_;
    std::vector<SimRule> rules_;
    std::map<std::string, SimState> snapshots_;
    std::uint64_t next_snapshot_ = 1;
    bool readonly_guard_ = false;
};

}  // namespace setupx
