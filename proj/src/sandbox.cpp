#include "setupx/sandbox.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "setupx/errors.hpp"

namespace setupx {

// -- Sandbox base: stack law and the five-stage trial -------------------------

std::size_t Sandbox::push_checkpoint(const std::string& label) {
    std::string id = capture_state(label);
    stack_.push_back(Snapshot{id, step_index_, label});
    return stack_.size();
}

Snapshot Sandbox::rollback(std::size_t n_frames) {
    if (n_frames < 1 || n_frames > stack_.size()) throw StackUnderflow(stack_.size(), n_frames);
    std::vector<Snapshot> popped(stack_.end() - static_cast<std::ptrdiff_t>(n_frames), stack_.end());
    stack_.resize(stack_.size() - n_frames);
    const Snapshot target = popped.front();  // deepest popped frame
    restore_state(target.snapshot_id);
    for (const auto& frame : popped) discard_state(frame.snapshot_id);
    return target;
}

TrialOutcome Sandbox::trial(const std::vector<std::string>& commands,
                            const std::optional<ErrorProbe>& probe, double timeout_s) {
    if (commands.empty()) {
        TrialOutcome outcome;
        outcome.status = TrialStatus::Failure;
        outcome.detail = "no commands to trial";
        return outcome;
    }
    push_checkpoint("trial");

    TrialOutcome outcome;
    bool all_ok = true;
    for (const auto& command : commands) {
        ExecResult result = exec(command, timeout_s);
        outcome.per_command.push_back(result);
        if (!result.ok()) {  // halt on any non-zero exit code
            all_ok = false;
            outcome.detail = "command failed: " + command;
            break;
        }
    }

    bool cleared = all_ok;
    if (all_ok && probe) {
        ExecResult probe_result = exec(probe->command, timeout_s);
        outcome.probe = probe_result;
        std::regex signature(probe->signature_regex);
        if (std::regex_search(probe_result.combined_output(), signature)) {
            cleared = false;
            outcome.detail = "original error signature still present";
        }
    }

    if (cleared) {
        outcome.status = TrialStatus::Success;
    } else {
        outcome.status = TrialStatus::Failure;
        rollback(1);  // pop the just-pushed frame and restore it
    }
    return outcome;
}

// -- SimSandbox ----------------------------------------------------------------

SimSandbox::SimSandbox(std::vector<SimRule> rules) : rules_(std::move(rules)) {}

std::vector<SimRule> SimSandbox::rules_from_json(const nlohmann::json& j) {
    std::vector<SimRule> rules;
    for (const auto& r : j) {
        SimRule rule;
        rule.pattern = r.at("pattern").get<std::string>();
        rule.exit_code = r.value("exit_code", 0);
        rule.stdout_text = r.value("stdout", std::string{});
        rule.stderr_text = r.value("stderr", std::string{});
        rule.duration_s = r.value("duration", 0.01);
        rule.when_file_exists = r.value("when_file_exists", std::string{});
        rule.when_file_absent = r.value("when_file_absent", std::string{});
        if (r.contains("effects")) {
            for (const auto& e : r.at("effects")) {
                SimEffect effect;
                if (e.contains("write")) {
                    effect.kind = SimEffect::Kind::WriteFile;
                    effect.path = e.at("write").get<std::string>();
                    effect.value = e.value("content", std::string{});
                } else if (e.contains("append")) {
                    effect.kind = SimEffect::Kind::AppendFile;
                    effect.path = e.at("append").get<std::string>();
                    effect.value = e.value("content", std::string{});
                } else if (e.contains("remove")) {
                    effect.kind = SimEffect::Kind::RemoveFile;
                    effect.path = e.at("remove").get<std::string>();
                } else if (e.contains("set_env")) {
                    effect.kind = SimEffect::Kind::SetEnv;
                    effect.key = e.at("set_env").get<std::string>();
                    effect.value = e.value("value", std::string{});
                } else if (e.contains("unset_env")) {
                    effect.kind = SimEffect::Kind::UnsetEnv;
                    effect.key = e.at("unset_env").get<std::string>();
                } else if (e.contains("chdir")) {
                    effect.kind = SimEffect::Kind::Chdir;
                    effect.path = e.at("chdir").get<std::string>();
                } else {
                    throw Error("unrecognized simulator effect: " + e.dump());
                }
                rule.effects.push_back(effect);
            }
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::shared_ptr<SimSandbox> SimSandbox::from_fixture_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open simulator fixture " + path);
    nlohmann::json j;
    in >> j;
    return std::make_shared<SimSandbox>(rules_from_json(j));
}

std::string SimSandbox::resolve_path(const std::string& path) const {
    if (!path.empty() && path.front() == '/') return path;
    std::string base = state_.cwd;
    if (base.empty() || base.back() != '/') base += '/';
    return base + path;
}

bool SimSandbox::effect_allowed(const SimEffect& effect) const {
    if (!readonly_guard_) return true;
    switch (effect.kind) {
        case SimEffect::Kind::WriteFile:
        case SimEffect::Kind::AppendFile:
        case SimEffect::Kind::RemoveFile:
            return resolve_path(effect.path).rfind("/tmp/", 0) == 0;
        case SimEffect::Kind::SetEnv:
        case SimEffect::Kind::UnsetEnv:
        case SimEffect::Kind::Chdir:
            return false;
    }
    return false;
}

bool SimSandbox::apply_effects(const std::vector<SimEffect>& effects, ExecResult& result) {
    for (const auto& effect : effects) {
        if (!effect_allowed(effect)) {
            result.exit_code = 126;
            result.stderr_text = "blocked: read-only constraint";
            result.stdout_text.clear();
            return false;  // the whole command is rejected, no effects applied
        }
    }
    for (const auto& effect : effects) {
        switch (effect.kind) {
            case SimEffect::Kind::WriteFile:
                state_.files[resolve_path(effect.path)] = effect.value;
                break;
            case SimEffect::Kind::AppendFile:
                state_.files[resolve_path(effect.path)] += effect.value;
                break;
            case SimEffect::Kind::RemoveFile:
                state_.files.erase(resolve_path(effect.path));
                break;
            case SimEffect::Kind::SetEnv:
                state_.env[effect.key] = effect.value;
                break;
            case SimEffect::Kind::UnsetEnv:
                state_.env.erase(effect.key);
                break;
            case SimEffect::Kind::Chdir:
                state_.cwd = resolve_path(effect.path);
                break;
        }
    }
    return true;
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string word;
    while (in >> word) out.push_back(word);
    return out;
}

std::string expand_env(const std::string& text, const std::map<std::string, std::string>& env) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '$' && i + 1 < text.size()) {
            std::size_t j = i + 1;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            std::string name = text.substr(i + 1, j - i - 1);
            if (!name.empty()) {
                auto it = env.find(name);
                if (it != env.end()) out += it->second;
                i = j - 1;
                continue;
            }
        }
        out += text[i];
    }
    return out;
}

}  // namespace

ExecResult SimSandbox::run_builtin(const std::string& command, bool& handled) {
    handled = true;
    ExecResult r;
    r.duration_s = 0.001;
    auto words = split_words(command);
    if (words.empty()) return r;
    const std::string& verb = words[0];

    if (verb == "true") return r;
    if (verb == "false") {
        r.exit_code = 1;
        return r;
    }
    if (verb == "echo") {
        std::string rest = command.size() > 5 ? command.substr(5) : "";
        r.stdout_text = expand_env(rest, state_.env) + "\n";
        return r;
    }
    if (verb == "touch" && words.size() >= 2) {
        SimEffect e{SimEffect::Kind::WriteFile, words[1], "", ""};
        std::string resolved = resolve_path(words[1]);
        if (readonly_guard_ && resolved.rfind("/tmp/", 0) != 0) {
            r.exit_code = 126;
            r.stderr_text = "blocked: read-only constraint";
            return r;
        }
        if (state_.files.find(resolved) == state_.files.end()) state_.files[resolved] = "";
        return r;
    }
    if (verb == "cat" && words.size() >= 2) {
        auto it = state_.files.find(resolve_path(words[1]));
        if (it == state_.files.end()) {
            r.exit_code = 1;
            r.stderr_text = "cat: " + words[1] + ": No such file or directory";
        } else {
            r.stdout_text = it->second;
        }
        return r;
    }
    if (verb == "ls") {
        std::string dir = words.size() >= 2 ? resolve_path(words[1]) : state_.cwd;
        if (dir.empty() || dir.back() != '/') dir += '/';
        std::string listing;
        for (const auto& [path, _] : state_.files)
            if (path.rfind(dir, 0) == 0) listing += path.substr(dir.size()) + "\n";
        r.stdout_text = listing;
        return r;
    }
    if (verb == "cd" && words.size() >= 2) {
        if (readonly_guard_) {
            r.exit_code = 126;
            r.stderr_text = "blocked: read-only constraint";
            return r;
        }
        state_.cwd = resolve_path(words[1]);
        return r;
    }
    if (verb == "rm" && words.size() >= 2) {
        const std::string& target = words.back();
        std::string resolved = resolve_path(target);
        if (readonly_guard_ && resolved.rfind("/tmp/", 0) != 0) {
            r.exit_code = 126;
            r.stderr_text = "blocked: read-only constraint";
            return r;
        }
        if (state_.files.erase(resolved) == 0) {
            r.exit_code = 1;
            r.stderr_text = "rm: cannot remove '" + target + "': No such file or directory";
        }
        return r;
    }
    handled = false;
    return r;
}

ExecResult SimSandbox::exec(const std::string& command, double timeout_s) {
    for (const auto& rule : rules_) {
        std::regex pattern(rule.pattern);
        if (!std::regex_search(command, pattern)) continue;
        if (!rule.when_file_exists.empty() &&
            state_.files.find(resolve_path(rule.when_file_exists)) == state_.files.end())
            continue;
        if (!rule.when_file_absent.empty() &&
            state_.files.find(resolve_path(rule.when_file_absent)) != state_.files.end())
            continue;
        ExecResult result;
        result.duration_s = rule.duration_s;
        if (rule.duration_s > timeout_s) {
            result.exit_code = kTimeoutExitCode;
            result.stderr_text = "timeout after " + std::to_string(timeout_s) + "s";
            result.duration_s = timeout_s;
            return result;  // effects not applied on simulated timeout
        }
        result.exit_code = rule.exit_code;
        result.stdout_text = rule.stdout_text;
        result.stderr_text = rule.stderr_text;
        apply_effects(rule.effects, result);
        return result;
    }

    bool handled = false;
    ExecResult builtin = run_builtin(command, handled);
    if (handled) return builtin;

    ExecResult r;
    r.exit_code = 127;
    r.stderr_text = "sh: command not found: " + command;
    return r;
}

void SimSandbox::set_env(const std::string& key, const std::string& value) {
    if (key.empty() || key.find('=') != std::string::npos) throw InvalidKey(key);
    if (readonly_guard_) throw InvalidKey(key + " (read-only session)");
    state_.env[key] = value;
}

std::shared_ptr<SimSandbox> SimSandbox::fork() const {
    auto clone = std::make_shared<SimSandbox>(rules_);
    clone->state_ = state_;
    return clone;
}

std::string SimSandbox::capture_state(const std::string&) {
    std::string id = "sim-snap-" + std::to_string(next_snapshot_++);
    snapshots_[id] = state_;  // deep copy
    return id;
}

void SimSandbox::restore_state(const std::string& snapshot_id) {
    auto it = snapshots_.find(snapshot_id);
    if (it == snapshots_.end()) throw SnapshotFailure("unknown snapshot " + snapshot_id);
    state_ = it->second;
}

void SimSandbox::discard_state(const std::string& snapshot_id) {
    snapshots_.erase(snapshot_id);
}

}  // namespace setupx
