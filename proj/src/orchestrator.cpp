#include "setupx/orchestrator.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "setupx/docker_sandbox.hpp"
#include "setupx/errors.hpp"
#include "setupx/prompts.hpp"

namespace setupx {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::string sanitize_name(const std::string& raw) {
    std::string out;
    for (char c : raw)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                   ? c
                   : '_';
    return out.empty() ? "run" : out;
}

std::string task_run_name(const RepoTask& task) {
    if (!task.name.empty()) return sanitize_name(task.name);
    std::string base = task.source;
    auto slash = base.find_last_of('/');
    if (slash != std::string::npos) base = base.substr(slash + 1);
    return sanitize_name(base);
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("sandbox")) {
        const auto& s = j.at("sandbox");
        c.sandbox_backend = s.value("backend", c.sandbox_backend);
        c.sim_fixture = s.value("fixture", c.sim_fixture);
        c.engine_url = s.value("engine_url", c.engine_url);
    }
    if (j.contains("chat")) {
        const auto& s = j.at("chat");
        c.chat_backend = s.value("backend", c.chat_backend);
        c.chat_script = s.value("script", c.chat_script);
        c.chat_url = s.value("url", c.chat_url);
        c.chat_model = s.value("model", c.chat_model);
        c.api_key = s.value("api_key", c.api_key);
    }
    if (j.contains("embedding")) {
        const auto& s = j.at("embedding");
        c.embedding_backend = s.value("backend", c.embedding_backend);
        c.embedding_fixture = s.value("fixture", c.embedding_fixture);
        c.embed_url = s.value("url", c.embed_url);
        c.embed_model = s.value("model", c.embed_model);
        c.embedding_dimension = s.value("dimension", c.embedding_dimension);
    }
    if (j.contains("budgets")) {
        c.budgets.max_steps = j.at("budgets").value("max_steps", c.budgets.max_steps);
        c.budgets.wall_clock_s = j.at("budgets").value("wall_clock", c.budgets.wall_clock_s);
    }
    if (j.contains("retrieval")) {
        const auto& s = j.at("retrieval");
        c.retrieval_mode = retrieval_mode_from_name(
            s.value("mode", retrieval_mode_name(c.retrieval_mode)));
        c.xpu_enabled = s.value("enabled", c.xpu_enabled);
        c.retrieval_top_n = s.value("top_n", c.retrieval_top_n);
        c.retrieval_top_k = s.value("top_k", c.retrieval_top_k);
    }
    if (j.contains("thresholds")) {
        const auto& s = j.at("thresholds");
        c.thresholds.golden_min_rate = s.value("golden_min_rate", c.thresholds.golden_min_rate);
        c.thresholds.cold_max_rate = s.value("cold_max_rate", c.thresholds.cold_max_rate);
        c.thresholds.min_hits = s.value("min_hits", c.thresholds.min_hits);
        c.thresholds.golden_boost = s.value("golden_boost", c.thresholds.golden_boost);
        c.thresholds.cold_boost = s.value("cold_boost", c.thresholds.cold_boost);
        c.thresholds.normal_boost = s.value("normal_boost", c.thresholds.normal_boost);
    }
    c.prompt_dir = j.value("prompt_dir", c.prompt_dir);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.kb_path = j.value("kb", c.kb_path);
    if (j.contains("agent")) {
        const auto& s = j.at("agent");
        c.agent.prompt_window_steps = s.value("window_steps", c.agent.prompt_window_steps);
        c.agent.observation_max_chars = s.value("observation_max_chars", c.agent.observation_max_chars);
        c.agent.reparse_retries = s.value("reparse_retries", c.agent.reparse_retries);
        c.agent.command_timeout_s = s.value("command_timeout", c.agent.command_timeout_s);
    }
    if (j.contains("verifier")) {
        c.verifier.max_steps = j.at("verifier").value("max_steps", c.verifier.max_steps);
        c.verifier.command_timeout_s =
            j.at("verifier").value("command_timeout", c.verifier.command_timeout_s);
    }
    if (j.contains("adjudication")) {
        const auto& s = j.at("adjudication");
        c.adjudication.prosecutor_max_steps =
            s.value("prosecutor_max_steps", c.adjudication.prosecutor_max_steps);
        c.adjudication.command_timeout_s =
            s.value("command_timeout", c.adjudication.command_timeout_s);
    }
    c.agent.xpu_enabled = c.xpu_enabled;

    // environment overrides for endpoint credentials
    c.chat_url = env_or("SETUPX_CHAT_URL", c.chat_url);
    c.embed_url = env_or("SETUPX_EMBED_URL", c.embed_url);
    c.api_key = env_or("SETUPX_API_KEY", c.api_key);

    if (c.budgets.wall_clock_s <= 0) throw Error("budgets.wall_clock must be positive");
    const TierThresholds& th = c.thresholds;
    if (!(0 <= th.cold_max_rate && th.cold_max_rate < th.golden_min_rate &&
          th.golden_min_rate <= 1.0))
        throw Error("thresholds require 0 <= cold_max_rate < golden_min_rate <= 1");
    if (th.golden_boost <= 0 || th.cold_boost <= 0 || th.normal_boost <= 0)
        throw Error("tier boosts must be positive");
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open config " + path);
    nlohmann::json j;
    in >> j;
    return run_config_from_json(j);
}

std::vector<BatchTask> load_batch_tasks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open task list " + path);
    nlohmann::json j;
    in >> j;
    std::vector<BatchTask> tasks;
    for (const auto& entry : j) {
        BatchTask t;
        t.task = repo_task_from_json(entry);
        t.chat_script = entry.value("chat_script", std::string{});
        t.sim_fixture = entry.value("sim_fixture", std::string{});
        t.embedding_fixture = entry.value("embedding_fixture", std::string{});
        tasks.push_back(std::move(t));
    }
    return tasks;
}

nlohmann::json run_record_to_json(const RunRecord& record) {
    nlohmann::json categories = nlohmann::json::array();
    for (auto c : record.failure_categories) categories.push_back(failure_category_name(c));
    return {{"repo_task", repo_task_to_json(record.task)},
            {"trajectory", record.trajectory_path},
            {"adjudication", record.adjudication_path},
            {"outcome", run_outcome_name(record.outcome)},
            {"pass", record.pass},
            {"failure_categories", categories},
            {"diagnostic", record.diagnostic}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord record;
    record.task = repo_task_from_json(j.at("repo_task"));
    record.trajectory_path = j.value("trajectory", std::string{});
    record.adjudication_path = j.value("adjudication", std::string{});
    record.outcome = run_outcome_from_name(j.value("outcome", std::string{"aborted"}));
    record.pass = j.value("pass", false);
    for (const auto& c : j.value("failure_categories", nlohmann::json::array()))
        record.failure_categories.push_back(failure_category_from_name(c.get<std::string>()));
    record.diagnostic = j.value("diagnostic", std::string{});
    return record;
}

bool compute_pass(RunOutcome outcome, const AdjudicationRecord& adjudication) {
    if (outcome == RunOutcome::Timeout) return false;
    return adjudication.charges.empty() ||
           adjudication.verdict.decision == Decision::NotGuilty;
}

Orchestrator::Orchestrator(RunConfig config, XpuStore& store)
    : config_(std::move(config)), store_(store) {}

Orchestrator::Backends Orchestrator::build_backends(const BatchTask& task) const {
    Backends b;

    std::shared_ptr<ChatBackend> chat;
    if (config_.chat_backend == "scripted") {
        const std::string script = task.chat_script.empty() ? config_.chat_script : task.chat_script;
        chat = script.empty() ? std::make_shared<ScriptedChatBackend>()
                              : ScriptedChatBackend::from_file(script);
    } else if (config_.chat_backend == "remote") {
        RemoteChatBackend::Options options;
        options.base_url = config_.chat_url;
        options.model = config_.chat_model;
        options.api_key = config_.api_key;
        chat = std::make_shared<RemoteChatBackend>(options);
    } else {
        throw Error("unknown chat backend: " + config_.chat_backend);
    }

    std::shared_ptr<EmbeddingBackend> embedding;
    if (config_.embedding_backend == "hash") {
        embedding = std::make_shared<HashEmbeddingBackend>(config_.embedding_dimension);
    } else if (config_.embedding_backend == "fixture") {
        const std::string fixture =
            task.embedding_fixture.empty() ? config_.embedding_fixture : task.embedding_fixture;
        embedding = FixtureEmbeddingBackend::from_file(
            fixture, std::make_shared<HashEmbeddingBackend>(config_.embedding_dimension));
    } else if (config_.embedding_backend == "remote") {
        RemoteEmbeddingBackend::Options options;
        options.base_url = config_.embed_url;
        options.model = config_.embed_model;
        options.api_key = config_.api_key;
        options.dimension = config_.embedding_dimension;
        embedding = std::make_shared<RemoteEmbeddingBackend>(options);
    } else {
        throw Error("unknown embedding backend: " + config_.embedding_backend);
    }

    b.gateway = std::make_shared<LlmGateway>(chat, embedding);

    if (config_.sandbox_backend == "sim") {
        const std::string fixture = task.sim_fixture.empty() ? config_.sim_fixture : task.sim_fixture;
        auto sim = fixture.empty() ? std::make_shared<SimSandbox>()
                                   : SimSandbox::from_fixture_file(fixture);
        b.sandbox = sim;
        // Phase-2 agents get fresh sessions over the committed (final) state.
        b.fork_for_adjudication = [sim]() -> std::shared_ptr<Sandbox> { return sim->fork(); };
    } else if (config_.sandbox_backend == "docker") {
        DockerSandbox::Options options;
        options.engine_url = config_.engine_url;
        options.base_image = task.task.base_image;
        auto docker = std::make_shared<DockerSandbox>(options);
        docker->provision();
        b.sandbox = docker;
        std::string engine_url = config_.engine_url;
        b.fork_for_adjudication = [docker, engine_url]() -> std::shared_ptr<Sandbox> {
            static std::atomic<std::uint64_t> counter{1};
            DockerSandbox::Options fresh;
            fresh.engine_url = engine_url;
            fresh.base_image =
                docker->commit_image("adjudication-" + std::to_string(counter.fetch_add(1)));
            auto sandbox = std::make_shared<DockerSandbox>(fresh);
            sandbox->provision();
            return sandbox;
        };
    } else {
        throw Error("unknown sandbox backend: " + config_.sandbox_backend);
    }
    return b;
}

RunRecord Orchestrator::run_one(const BatchTask& batch_task) {
    const RepoTask& task = batch_task.task;
    RunRecord record;
    record.task = task;

    namespace fs = std::filesystem;
    fs::path run_dir = fs::path(config_.output_dir) / task_run_name(task);
    fs::create_directories(run_dir);
    record.trajectory_path = (run_dir / "trajectory.jsonl").string();
    record.adjudication_path = (run_dir / "adjudication.json").string();

    RunLog log;
    try {
        if (task.revision.empty()) throw Error("repo task must pin a revision");
        Backends backends = build_backends(batch_task);
        backends.gateway->set_run_id(task_run_name(task));

        PromptLibrary prompts = config_.prompt_dir.empty() ? PromptLibrary()
                                                           : PromptLibrary(config_.prompt_dir);
        RetrieverConfig retriever_config;
        retriever_config.mode = config_.retrieval_mode;
        retriever_config.top_n = config_.retrieval_top_n;
        retriever_config.top_k = config_.retrieval_top_k;
        retriever_config.thresholds = config_.thresholds;
        Retriever retriever(store_, *backends.gateway, prompts, retriever_config, &log);

        InLoopVerifier verifier(*backends.gateway, prompts, config_.verifier, &log);
        AgentConfig agent_config = config_.agent;
        agent_config.xpu_enabled = config_.xpu_enabled;
        if (agent_config.atom_context.empty())
            agent_config.atom_context = {{"repo_dir", "/workspace/repo"},
                                         {"workdir", "/workspace"}};
        SetupAgent agent(*backends.sandbox, config_.xpu_enabled ? &retriever : nullptr, verifier,
                         *backends.gateway, prompts, agent_config, &log);

        Trajectory trajectory = agent.run(task, config_.budgets);
        record.outcome = trajectory.outcome;
        save_trajectory(trajectory, record.trajectory_path);

        // Phase 2: structurally separate sandbox handles, no shared prompt
        // history with the setup loop.
        Adjudicator adjudicator(*backends.gateway, prompts, config_.adjudication, &log);
        auto prosecutor_sandbox = backends.fork_for_adjudication();
        AdjudicationRecord adjudication;
        adjudication.charges = adjudicator.prosecute(*prosecutor_sandbox, trajectory, task);
        auto judge_sandbox = backends.fork_for_adjudication();
        adjudication.verdict = adjudicator.judge(adjudication.charges, *judge_sandbox);
        save_adjudication(adjudication, record.adjudication_path);

        record.pass = compute_pass(trajectory.outcome, adjudication);
        if (!record.pass) {
            std::vector<std::string> seen;
            for (const auto& ruling : adjudication.verdict.rulings) {
                if (ruling.ruling != Ruling::Upheld) continue;
                for (const auto& charge : adjudication.charges) {
                    if (charge.id != ruling.charge_id) continue;
                    const std::string name = failure_category_name(charge.category);
                    if (std::find(seen.begin(), seen.end(), name) == seen.end()) {
                        seen.push_back(name);
                        record.failure_categories.push_back(charge.category);
                    }
                }
            }
        }
    } catch (const std::exception& e) {
        record.pass = false;
        record.diagnostic = e.what();
        record.failure_categories = {FailureCategory::Other};
        log.note(std::string("harness fault: ") + e.what());
    }

    std::ofstream record_out(run_dir / "record.json");
    record_out << run_record_to_json(record).dump(2) << "\n";
    std::ofstream log_out(run_dir / "run.log");
    for (const auto& line : log.lines()) log_out << line << "\n";
    return record;
}

AdjudicationRecord Orchestrator::adjudicate(const Trajectory& trajectory,
                                            const BatchTask& task) {
    Backends backends = build_backends(task);
    backends.gateway->set_run_id("adjudicate-" + task_run_name(trajectory.task));
    PromptLibrary prompts =
        config_.prompt_dir.empty() ? PromptLibrary() : PromptLibrary(config_.prompt_dir);
    RunLog log;
    replay_trajectory(trajectory, *backends.sandbox, config_.agent.command_timeout_s);

    Adjudicator adjudicator(*backends.gateway, prompts, config_.adjudication, &log);
    AdjudicationRecord record;
    auto prosecutor_sandbox = backends.fork_for_adjudication();
    record.charges = adjudicator.prosecute(*prosecutor_sandbox, trajectory, trajectory.task);
    auto judge_sandbox = backends.fork_for_adjudication();
    record.verdict = adjudicator.judge(record.charges, *judge_sandbox);
    return record;
}

BatchSummary Orchestrator::summarize(std::vector<RunRecord> records) {
    BatchSummary summary;
    summary.total = records.size();
    for (const auto& record : records) {
        if (record.pass) {
            ++summary.passed;
        } else {
            // failures spanning several categories count in each row
            for (auto c : record.failure_categories)
                ++summary.failures_per_category[failure_category_name(c)];
        }
    }
    summary.pass_rate =
        summary.total == 0 ? 0.0 : static_cast<double>(summary.passed) / summary.total;
    summary.records = std::move(records);
    return summary;
}

BatchSummary Orchestrator::run_batch(const std::vector<BatchTask>& tasks,
                                     std::size_t parallelism) {
    std::vector<RunRecord> records(tasks.size());
    if (parallelism <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) records[i] = run_one(tasks[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= tasks.size()) return;
                records[i] = run_one(tasks[i]);
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < std::min(parallelism, tasks.size()); ++i)
            pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return summarize(std::move(records));
}

nlohmann::json batch_summary_to_json(const BatchSummary& summary) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : summary.records) records.push_back(run_record_to_json(r));
    // share of failed runs involving each category; multi-category failures
    // count in every applicable row, so rates may sum past 1
    std::size_t failed = summary.total - summary.passed;
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& [category, count] : summary.failures_per_category)
        rates[category] = failed == 0 ? 0.0 : static_cast<double>(count) / failed;
    return {{"total", summary.total},
            {"passed", summary.passed},
            {"pass_rate", summary.pass_rate},
            {"failures_per_category", summary.failures_per_category},
            {"failure_category_rates", rates},
            {"records", records}};
}

DistillBatchReport Orchestrator::distill_batch(const std::vector<RunRecord>& records) {
    DistillBatchReport report;
    PromptLibrary prompts =
        config_.prompt_dir.empty() ? PromptLibrary() : PromptLibrary(config_.prompt_dir);
    for (const auto& record : records) {
        try {
            BatchTask pseudo;
            pseudo.task = record.task;
            Backends b = build_backends(pseudo);
            b.gateway->set_run_id("distill-" + task_run_name(record.task));
            Distiller distiller(store_, *b.gateway, prompts, config_.distiller);

            Trajectory trajectory = load_trajectory(record.trajectory_path);
            std::optional<AdjudicationRecord> adjudication;
            if (!record.adjudication_path.empty() &&
                std::filesystem::exists(record.adjudication_path))
                adjudication = load_adjudication(record.adjudication_path);

            DistillationReport r = distiller.run(trajectory, adjudication, record.task.source);
            report.new_entries += r.new_count();
            report.merged += r.merged_count();
            report.per_record.push_back(distillation_report_to_json(r));
            ++report.records;
        } catch (const std::exception& e) {
            report.per_record.push_back({{"error", e.what()}});
            ++report.records;
        }
    }
    return report;
}

}  // namespace setupx
