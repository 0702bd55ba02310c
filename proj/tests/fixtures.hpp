#pragma once

// Shared scripted fixtures: the "lock-conflict" repository scenario in a
// healthy variant (the trialed fix really installs the dependency) and a
// mutated variant (the install effect is removed, so the setup only looks
// fixed and phase 2 must catch it).

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "setupx/distiller.hpp"
#include "setupx/gateway.hpp"
#include "setupx/store.hpp"
#include "setupx/trajectory.hpp"

namespace fixtures {

inline setupx::RepoTask lock_conflict_task() {
    setupx::RepoTask task;
    task.source = "https://example.com/lockapp.git";
    task.revision = "abc123";
    task.execution_targets = {"pytest"};
    task.name = "lockapp";
    return task;
}

inline nlohmann::json lock_conflict_rules(bool install_effect_present) {
    nlohmann::json install_ok = {
        {"pattern", "^poetry install"},
        {"when_file_exists", "/workspace/repo/.deps_ok"},
        {"exit_code", 0},
        {"stdout", "Installing dependencies from lock file... done"},
    };
    if (install_effect_present)
        install_ok["effects"] = nlohmann::json::array({{{"write", "/workspace/repo/.installed"}}});

    return nlohmann::json::array({
        {{"pattern", "^git clone"},
         {"exit_code", 0},
         {"stdout", "Cloning into 'repo'..."},
         {"effects",
          nlohmann::json::array(
              {{{"write", "/workspace/repo/pyproject.toml"}, {"content", "[tool.poetry]"}},
               {{"write", "/workspace/repo/poetry.lock"}, {"content", "stale lock"}},
               {{"chdir", "/workspace/repo"}}})}},
        {{"pattern", "^poetry lock"},
         {"exit_code", 0},
         {"stdout", "lock file regenerated"},
         {"effects", nlohmann::json::array({{{"write", "/workspace/repo/.deps_ok"}}})}},
        install_ok,
        {{"pattern", "^poetry install"},
         {"exit_code", 1},
         {"stderr",
          "Because lockapp depends on leftpad (>=2.0,<3.0)\nversion solving failed"}},
        {{"pattern", "^pytest"},
         {"when_file_exists", "/workspace/repo/.installed"},
         {"exit_code", 0},
         {"stdout", "5 passed in 0.2s"}},
        {{"pattern", "^pytest"},
         {"exit_code", 1},
         {"stderr", "ModuleNotFoundError: No module named 'leftpad'"}},
        {{"pattern", "import leftpad"},
         {"when_file_exists", "/workspace/repo/.installed"},
         {"exit_code", 0}},
        {{"pattern", "import leftpad"},
         {"exit_code", 1},
         {"stderr", "ImportError: No module named leftpad"}},
    });
}

inline nlohmann::json lock_conflict_chat_script(bool healthy) {
    auto act = [](const std::string& type, nlohmann::json content) {
        return nlohmann::json{{"thought", "scripted"}, {"action_type", type}, {"content", content}}
            .dump();
    };

    nlohmann::json setup = nlohmann::json::array();
    setup.push_back(act("SHELL_COMMAND", {{"command", "poetry install --no-interaction"}}));
    setup.push_back(act("TRY_XPU_SUGGESTION", {{"xpu_suggestion_id", "xpu_lock_fix"},
                                               {"command", ""},
                                               {"reasoning", "retrieved fix matches the error"}}));
    setup.push_back(act("VERIFY", nlohmann::json::object()));
    setup.push_back(act("FINISH", {{"message", "environment setup complete"}}));

    nlohmann::json retriever_select = nlohmann::json::array();
    retriever_select.push_back("poetry reports a dependency solving conflict during install");
    retriever_select.push_back(R"({"selected": ["xpu_lock_fix"]})");

    nlohmann::json retriever_audit = nlohmann::json::array();

    nlohmann::json verifier = nlohmann::json::array();
    if (healthy) {
        verifier.push_back(R"({"action": "run", "command": "ls"})");
        verifier.push_back(R"({"action": "run", "command": "pytest"})");
        verifier.push_back(
            R"({"action": "report", "outcome": "pass", "notes": "native suite green"})");
    } else {
        // the deceived verifier: tests fail but it calls the failure intrinsic
        verifier.push_back(R"({"action": "run", "command": "pytest"})");
        verifier.push_back(
            R"({"action": "report", "outcome": "project_intrinsic", "notes": "failures look pre-existing"})");
        // second retrieval happens after the failing VERIFY observation
        retriever_select.push_back("tests cannot import a core dependency after install");
        retriever_select.push_back(R"({"selected": ["xpu_lock_fix"]})");
        retriever_audit.push_back(
            R"([{"xpu_id": "xpu_lock_fix", "verdict": "failure", "rationale": "adopted but tests still fail"}])");
    }

    nlohmann::json prosecutor = nlohmann::json::array();
    prosecutor.push_back(R"({"action": "run", "command": "cat pyproject.toml"})");
    prosecutor.push_back(R"({"action": "run", "command": "python -c 'import leftpad'"})");
    prosecutor.push_back(R"({"action": "run", "command": "pytest"})");
    if (healthy) {
        prosecutor.push_back(R"({"action": "charges", "charges": []})");
    } else {
        prosecutor.push_back(R"({"action": "charges", "charges": [{
            "description": "core dependency leftpad is not importable under the configured interpreter",
            "category": "C3",
            "evidence": [{"command": "python -c 'import leftpad'",
                          "excerpt": "ImportError: No module named leftpad"}]
        }]})");
    }

    nlohmann::json judge = nlohmann::json::array();
    if (!healthy) {
        judge.push_back(R"({"commands": ["python -c 'import leftpad'"]})");
        judge.push_back(
            R"({"ruling": "upheld", "notes": "the import failure reproduces in a fresh session"})");
    }

    return nlohmann::json{{"setup", setup},
                          {"retriever_select", retriever_select},
                          {"retriever_audit", retriever_audit},
                          {"verifier", verifier},
                          {"prosecutor", prosecutor},
                          {"judge", judge}};
}

inline setupx::Xpu lock_fix_xpu() {
    setupx::Xpu x;
    x.id = "xpu_lock_fix";
    x.signals.keywords = {"poetry.lock", "dependency conflict"};
    x.signals.regexes = {"version solving failed"};
    x.signals.situation_triggers = {"poetry lock conflict during dependency install"};
    x.advice_nl = {"Regenerate the lock file inside the lock manager instead of bypassing it.",
                   "Rerun the managed install end-to-end afterwards."};
    x.atoms = {
        setupx::Atom{setupx::AtomKind::Shell, {{"cmd", "poetry lock --no-update"}}},
        setupx::Atom{setupx::AtomKind::Shell, {{"cmd", "poetry install --no-interaction"}}},
    };
    return x;
}

inline void seed_lock_fix_store(setupx::XpuStore& store, std::size_t dimension = 32) {
    setupx::HashEmbeddingBackend embedder(dimension);
    setupx::Xpu x = lock_fix_xpu();
    store.ingest(x, embedder.embed(setupx::Distiller::embedding_text(x)));
}

struct ScenarioFiles {
    std::string dir;
    std::string rules_path;
    std::string chat_path;
    std::string kb_path;
};

// Writes the scenario fixtures (and a seeded one-entry KB) into `dir` for
// file-driven entry points.
inline ScenarioFiles write_scenario_files(const std::string& dir, bool healthy) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    ScenarioFiles files;
    files.dir = dir;
    files.rules_path = dir + "/sim_fixture.json";
    files.chat_path = dir + "/chat_script.json";
    files.kb_path = dir + "/kb.jsonl";
    std::ofstream(files.rules_path) << lock_conflict_rules(healthy).dump(2);
    std::ofstream(files.chat_path) << lock_conflict_chat_script(healthy).dump(2);
    setupx::XpuStore store(32);
    seed_lock_fix_store(store, 32);
    store.save(files.kb_path);
    return files;
}

}  // namespace fixtures
