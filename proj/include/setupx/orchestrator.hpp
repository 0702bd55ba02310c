#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "setupx/adjudication.hpp"
#include "setupx/agent.hpp"
#include "setupx/distiller.hpp"
#include "setupx/gateway.hpp"
#include "setupx/retriever.hpp"
#include "setupx/store.hpp"

namespace setupx {

struct RunConfig {
    // backend selection
    std::string sandbox_backend = "sim";     // sim | docker
    std::string chat_backend = "scripted";   // scripted | remote
    std::string embedding_backend = "hash";  // hash | fixture | remote

    // scripted fixtures (per-task entries may override)
    std::string sim_fixture;
    std::string chat_script;
    std::string embedding_fixture;

    // remote endpoints; SETUPX_CHAT_URL / SETUPX_EMBED_URL / SETUPX_API_KEY
    // environment variables take precedence
    std::string chat_url;
    std::string chat_model = "qwen3.5-plus";
    std::string embed_url;
    std::string embed_model = "text-embedding-3-small";
    std::string api_key;

    // container engine
    std::string engine_url = "http://127.0.0.1:2375";

    Budgets budgets;  // max_steps 60, wall clock 3600 s
    RetrievalMode retrieval_mode = RetrievalMode::Selector;
    bool xpu_enabled = true;
    std::size_t retrieval_top_n = 10;
    std::size_t retrieval_top_k = 3;
    TierThresholds thresholds;
    std::size_t embedding_dimension = 1536;

    std::string prompt_dir;
    std::string output_dir = "runs";
    std::string kb_path;

    AgentConfig agent;
    VerifierConfig verifier;
    AdjudicationConfig adjudication;
    DistillerConfig distiller;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// One task entry in a batch file: the repo task plus optional per-task
// fixture overrides.
struct BatchTask {
    RepoTask task;
    std::string chat_script;
    std::string sim_fixture;
    std::string embedding_fixture;
};

std::vector<BatchTask> load_batch_tasks(const std::string& path);

struct RunRecord {
    RepoTask task;
    std::string trajectory_path;
    std::string adjudication_path;
    RunOutcome outcome = RunOutcome::Aborted;
    bool pass = false;
    std::vector<FailureCategory> failure_categories;
    std::string diagnostic;  // harness-level fault, when any
};

nlohmann::json run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

// The pass rule: a run passes iff no charge was filed or the judge rejected
// every accusation; timeout always fails.
bool compute_pass(RunOutcome outcome, const AdjudicationRecord& adjudication);

struct BatchSummary {
    std::size_t total = 0;
    std::size_t passed = 0;
    double pass_rate = 0.0;
    std::map<std::string, std::size_t> failures_per_category;  // multi-counted
    std::vector<RunRecord> records;
};

nlohmann::json batch_summary_to_json(const BatchSummary& summary);

struct DistillBatchReport {
    std::size_t records = 0;
    std::size_t new_entries = 0;
    std::size_t merged = 0;
    std::vector<nlohmann::json> per_record;
};

// Run harness: builds backends per config, executes setup then adjudication,
// and writes trajectory.jsonl / adjudication.json / record.json per run.
class Orchestrator {
public:
    Orchestrator(RunConfig config, XpuStore& store);

    RunRecord run_one(const BatchTask& task);
    BatchSummary run_batch(const std::vector<BatchTask>& tasks, std::size_t parallelism = 1);

    // Phase 2 alone: rebuilds the final environment by replaying a stored
    // trajectory against fresh backends, then prosecutes and judges it.
    AdjudicationRecord adjudicate(const Trajectory& trajectory, const BatchTask& task);

    DistillBatchReport distill_batch(const std::vector<RunRecord>& records);

    static BatchSummary summarize(std::vector<RunRecord> records);

private:
    struct Backends {
        std::shared_ptr<LlmGateway> gateway;
        std::shared_ptr<Sandbox> sandbox;
        std::function<std::shared_ptr<Sandbox>()> fork_for_adjudication;
    };
    Backends build_backends(const BatchTask& task) const;

    RunConfig config_;
    XpuStore& store_;
};

}  // namespace setupx
