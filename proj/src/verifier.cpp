#include "setupx/verifier.hpp"

#include <algorithm>
#include <sstream>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

std::vector<std::string> split_segments(const std::string& command) {
    // Split a shell line on &&, ||, ; and | so every stage gets filtered.
    std::vector<std::string> segments;
    std::string current;
    for (std::size_t i = 0; i < command.size(); ++i) {
        char c = command[i];
        if (c == ';' || c == '|' || (c == '&' && i + 1 < command.size() && command[i + 1] == '&')) {
            if (c == '&') ++i;
            if (c == '|' && i + 1 < command.size() && command[i + 1] == '|') ++i;
            segments.push_back(current);
            current.clear();
            continue;
        }
        current += c;
    }
    segments.push_back(current);
    return segments;
}

std::vector<std::string> tokenize(const std::string& segment) {
    std::istringstream in(segment);
    std::vector<std::string> tokens;
    std::string t;
    while (in >> t) tokens.push_back(t);
    return tokens;
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '\'' && s.back() == '\'') ||
                          (s.front() == '"' && s.back() == '"')))
        return s.substr(1, s.size() - 2);
    return s;
}

bool path_is_tmp_safe(const std::string& raw) {
    std::string path = strip_quotes(raw);
    if (path.empty()) return true;
    if (path == "/dev/null" || path.rfind("/dev/", 0) == 0) return true;
    return path == "/tmp" || path.rfind("/tmp/", 0) == 0;
}

bool is_flag(const std::string& token) { return !token.empty() && token[0] == '-'; }

const std::vector<std::string>& package_managers() {
    static const std::vector<std::string> managers = {
        "pip", "pip3", "apt",   "apt-get", "aptitude", "dpkg", "yum",    "dnf",
        "apk", "brew", "conda", "mamba",   "npm",      "yarn", "pnpm",   "poetry",
        "pipenv", "uv", "cargo", "gem"};
    return managers;
}

const std::vector<std::string>& mutation_verbs() {
    static const std::vector<std::string> verbs = {"install", "uninstall", "remove", "purge",
                                                   "upgrade", "add", "autoremove", "dist-upgrade"};
    return verbs;
}

const std::vector<std::string>& file_writers() {
    static const std::vector<std::string> writers = {"rm",    "mkdir", "rmdir",  "touch",
                                                     "truncate", "chmod", "chown", "tee",
                                                     "unlink"};
    return writers;
}

// Commands whose last path argument is the write target; sources are reads.
const std::vector<std::string>& dest_writers() {
    static const std::vector<std::string> writers = {"cp", "mv", "ln", "install"};
    return writers;
}

const std::vector<std::string>& git_mutations() {
    static const std::vector<std::string> verbs = {"commit", "push",  "reset", "checkout",
                                                   "clean",  "apply", "am",    "merge",
                                                   "rebase", "stash", "rm",    "mv",
                                                   "pull",   "restore"};
    return verbs;
}

FilterDecision check_segment(const std::string& segment) {
    auto tokens = tokenize(segment);

    // Redirections first: they can hang off any command.
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        if (t.find('>') == std::string::npos) continue;
        std::string target = t.substr(t.find_last_of('>') + 1);
        if (target.empty() && i + 1 < tokens.size()) target = tokens[i + 1];
        if (!target.empty() && target[0] == '&') continue;  // fd duplication (2>&1)
        if (!path_is_tmp_safe(target))
            return {false, "redirection target outside /tmp: " + target};
    }

    std::size_t first = 0;
    while (first < tokens.size() && tokens[first].find('=') != std::string::npos &&
           tokens[first].find('/') == std::string::npos)
        ++first;  // skip leading VAR=val assignments
    if (first >= tokens.size()) return {true, ""};
    const std::string verb = tokens[first];

    if (verb == "sudo") return {false, "privilege escalation"};
    if (verb == "export" || verb == "unset") return {false, "environment mutation"};

    if (std::find(package_managers().begin(), package_managers().end(), verb) !=
        package_managers().end()) {
        for (std::size_t i = first + 1; i < tokens.size(); ++i) {
            if (std::find(mutation_verbs().begin(), mutation_verbs().end(), tokens[i]) !=
                mutation_verbs().end())
                return {false, "package manager mutation: " + verb + " " + tokens[i]};
        }
        if (verb == "dpkg")
            for (std::size_t i = first + 1; i < tokens.size(); ++i)
                if (tokens[i] == "-i" || tokens[i] == "--install")
                    return {false, "package manager mutation: dpkg -i"};
    }

    // python -m pip install ...
    if (verb.rfind("python", 0) == 0) {
        for (std::size_t i = first + 1; i < tokens.size(); ++i) {
            if (tokens[i] != "-m" || i + 1 >= tokens.size()) continue;
            if (tokens[i + 1] == "ensurepip") return {false, "package manager mutation: ensurepip"};
            if (tokens[i + 1] == "pip") {
                for (std::size_t k = i + 2; k < tokens.size(); ++k)
                    if (std::find(mutation_verbs().begin(), mutation_verbs().end(), tokens[k]) !=
                        mutation_verbs().end())
                        return {false, "package manager mutation: python -m pip"};
            }
        }
    }

    if (std::find(file_writers().begin(), file_writers().end(), verb) != file_writers().end()) {
        for (std::size_t i = first + 1; i < tokens.size(); ++i) {
            if (is_flag(tokens[i])) continue;
            if (!path_is_tmp_safe(tokens[i]))
                return {false, verb + " targets a path outside /tmp: " + tokens[i]};
        }
    }

    if (std::find(dest_writers().begin(), dest_writers().end(), verb) != dest_writers().end()) {
        for (std::size_t i = tokens.size(); i-- > first + 1;) {
            if (is_flag(tokens[i])) continue;
            if (!path_is_tmp_safe(tokens[i]))
                return {false, verb + " destination outside /tmp: " + tokens[i]};
            break;  // only the last path is written
        }
    }

    if (verb == "dd") {
        for (std::size_t i = first + 1; i < tokens.size(); ++i)
            if (tokens[i].rfind("of=", 0) == 0 && !path_is_tmp_safe(tokens[i].substr(3)))
                return {false, "dd writes outside /tmp: " + tokens[i].substr(3)};
    }

    if (verb == "sed" || verb == "perl") {
        bool in_place = std::any_of(tokens.begin() + static_cast<std::ptrdiff_t>(first) + 1,
                                    tokens.end(), [](const std::string& t) {
                                        return t == "-i" || t.rfind("-i.", 0) == 0 ||
                                               t.rfind("-pi", 0) == 0;
                                    });
        if (in_place) {
            for (std::size_t i = first + 1; i < tokens.size(); ++i) {
                if (is_flag(tokens[i])) continue;
                if (!path_is_tmp_safe(tokens[i])) return {false, "in-place edit outside /tmp"};
            }
        }
    }

    if (verb == "git" && first + 1 < tokens.size()) {
        std::size_t sub = first + 1;
        while (sub < tokens.size() && is_flag(tokens[sub])) ++sub;
        if (sub < tokens.size() &&
            std::find(git_mutations().begin(), git_mutations().end(), tokens[sub]) !=
                git_mutations().end())
            return {false, "version control mutation: git " + tokens[sub]};
    }

    if (verb == "make") {
        for (std::size_t i = first + 1; i < tokens.size(); ++i)
            if (tokens[i] == "install") return {false, "make install writes outside the build tree"};
    }

    return {true, ""};
}

bool looks_like_test_runner(const std::string& command) {
    return command.find("pytest") != std::string::npos ||
           command.find("unittest") != std::string::npos ||
           command.find("tox") != std::string::npos ||
           command.find("runtests") != std::string::npos ||
           (command.find("python") != std::string::npos &&
            command.find("/tmp/") != std::string::npos);
}

std::string excerpt_of(const ExecResult& result, std::size_t max_chars = 600) {
    std::string text = "exit " + std::to_string(result.exit_code);
    std::string body = result.combined_output();
    if (!body.empty()) text += ": " + body;
    if (text.size() > max_chars) text = text.substr(0, max_chars) + "...";
    return text;
}

}  // namespace

const std::string& verify_outcome_name(VerifyOutcome outcome) {
    static const std::string pass = "pass", setup = "setup_induced_failure",
                             intrinsic = "project_intrinsic";
    switch (outcome) {
        case VerifyOutcome::Pass: return pass;
        case VerifyOutcome::ProjectIntrinsic: return intrinsic;
        default: return setup;
    }
}

VerifyOutcome verify_outcome_from_name(const std::string& name) {
    if (name == "pass") return VerifyOutcome::Pass;
    if (name == "setup_induced_failure") return VerifyOutcome::SetupInducedFailure;
    if (name == "project_intrinsic") return VerifyOutcome::ProjectIntrinsic;
    throw Error("unknown verifier outcome: " + name);
}

nlohmann::json verifier_report_to_json(const VerifierReport& report) {
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& [command, excerpt] : report.evidence)
        evidence.push_back({{"command", command}, {"excerpt", excerpt}});
    return {{"outcome", verify_outcome_name(report.outcome)},
            {"evidence", evidence},
            {"notes", report.notes}};
}

VerifierReport verifier_report_from_json(const nlohmann::json& j) {
    VerifierReport report;
    report.outcome =
        verify_outcome_from_name(j.value("outcome", std::string{"setup_induced_failure"}));
    for (const auto& e : j.value("evidence", nlohmann::json::array()))
        report.evidence.emplace_back(e.value("command", std::string{}),
                                     e.value("excerpt", std::string{}));
    report.notes = j.value("notes", std::string{});
    return report;
}

FilterDecision readonly_filter(const std::string& command) {
    for (const auto& segment : split_segments(command)) {
        FilterDecision d = check_segment(segment);
        if (!d.allowed) return d;
    }
    return {true, ""};
}

InLoopVerifier::InLoopVerifier(LlmGateway& gateway, const PromptLibrary& prompts,
                               VerifierConfig config, RunLog* log)
    : gateway_(gateway), prompts_(prompts), config_(config), log_(log) {}

VerifierReport InLoopVerifier::verify(Sandbox& sandbox, const std::vector<Step>& trajectory_tail) {
    struct GuardScope {
        Sandbox& sandbox;
        explicit GuardScope(Sandbox& s) : sandbox(s) { sandbox.set_readonly_guard(true); }
        ~GuardScope() { sandbox.set_readonly_guard(false); }
    } guard(sandbox);

    VerifierReport report;
    std::vector<std::string> session_notes;
    std::ostringstream transcript;
    {
        std::ostringstream tail;
        for (const auto& s : trajectory_tail)
            tail << "step " << s.index << ": " << action_kind_name(s.action.kind) << " -> "
                 << s.observation.kind << "\n";
        transcript << "Setup history (most recent steps):\n" << tail.str() << "\n";
    }

    bool reported = false;
    for (std::size_t step = 0; step < config_.max_steps && !reported; ++step) {
        std::vector<ChatMessage> messages = {
            {"system", prompts_.get("verifier")},
            {"user", transcript.str() + "\nReply with your next JSON action."},
        };
        std::string response;
        try {
            response = gateway_.chat(ChatRole::Verifier, messages,
                                     ResponseContract::StructuredDocument);
        } catch (const GatewayFailure& e) {
            session_notes.push_back(std::string("gateway failure: ") + e.what());
            break;
        }
        std::size_t brace = response.find('{');
        nlohmann::json j = brace == std::string::npos
                               ? nlohmann::json(nlohmann::json::value_t::discarded)
                               : nlohmann::json::parse(response.substr(brace), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("action") ||
            !j.at("action").is_string()) {
            transcript << "\n[format error] reply was not a valid action object; use "
                          "{\"action\":\"run\",...} or {\"action\":\"report\",...}\n";
            continue;
        }
        for (const char* field : {"command", "outcome", "notes"})
            if (j.contains(field) && !j.at(field).is_string()) j.erase(field);
        const std::string action = j.value("action", std::string{});
        if (action == "run") {
            const std::string command = j.value("command", std::string{});
            if (command.empty()) {
                transcript << "\n[format error] run requires a string 'command'\n";
                continue;
            }
            FilterDecision decision = readonly_filter(command);
            if (!decision.allowed) {
                std::string note =
                    "blocked: read-only constraint (" + decision.reason + "): " + command;
                session_notes.push_back(note);
                transcript << "\n$ " << command << "\nblocked: read-only constraint ("
                           << decision.reason << ")\n";
                if (log_) log_->note("verifier command blocked: " + command);
                continue;
            }
            ExecResult result = sandbox.exec(command, config_.command_timeout_s);
            report.evidence.emplace_back(command, excerpt_of(result));
            transcript << "\n$ " << command << "\n" << excerpt_of(result, 1200) << "\n";
        } else if (action == "report") {
            try {
                report.outcome = verify_outcome_from_name(j.value("outcome", std::string{}));
            } catch (const Error&) {
                transcript << "\n[format error] unknown outcome; use pass, "
                              "setup_induced_failure or project_intrinsic\n";
                continue;
            }
            report.notes = j.value("notes", std::string{});
            reported = true;
        } else {
            transcript << "\n[format error] unknown action '" << action << "'\n";
        }
    }

    if (!reported) {
        report.outcome = VerifyOutcome::SetupInducedFailure;
        report.notes = "verification inconclusive";
    }

    // A pass claim must be backed by a green native-runner (or smoke test)
    // result in the evidence; otherwise it is demoted.
    if (report.outcome == VerifyOutcome::Pass) {
        bool backed = std::any_of(report.evidence.begin(), report.evidence.end(),
                                  [](const auto& e) {
                                      return looks_like_test_runner(e.first) &&
                                             e.second.rfind("exit 0", 0) == 0;
                                  });
        if (!backed) {
            report.outcome = VerifyOutcome::SetupInducedFailure;
            session_notes.push_back("pass claim lacked green test evidence; demoted");
        }
    }

    if (report.outcome == VerifyOutcome::SetupInducedFailure && report.evidence.empty())
        report.evidence.emplace_back("(no commands executed)",
                                     report.notes.empty() ? "no evidence collected" : report.notes);

    for (const auto& note : session_notes) {
        if (!report.notes.empty()) report.notes += "\n";
        report.notes += note;
    }
    return report;
}

}  // namespace setupx
