// setupx CLI: run one setup, score batches, adjudicate stored trajectories,
// distill experience and manage the knowledge base.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "setupx/distiller.hpp"
#include "setupx/errors.hpp"
#include "setupx/kb_tools.hpp"
#include "setupx/orchestrator.hpp"

using namespace setupx;

namespace {

XpuStore open_store(const std::string& path, std::size_t dimension) {
    if (!path.empty() && std::filesystem::exists(path)) return XpuStore::load(path);
    return XpuStore(dimension);
}

void persist_store(XpuStore& store, const std::string& path) {
    if (!path.empty()) store.save(path);
}

int exit_code_for(const BatchSummary& summary) {
    return summary.passed == summary.total ? 0 : 1;
}

std::shared_ptr<EmbeddingBackend> embedding_backend_for(const RunConfig& config) {
    if (config.embedding_backend == "fixture" && !config.embedding_fixture.empty())
        return FixtureEmbeddingBackend::from_file(
            config.embedding_fixture,
            std::make_shared<HashEmbeddingBackend>(config.embedding_dimension));
    if (config.embedding_backend == "remote") {
        RemoteEmbeddingBackend::Options options;
        options.base_url = config.embed_url;
        options.model = config.embed_model;
        options.api_key = config.api_key;
        options.dimension = config.embedding_dimension;
        return std::make_shared<RemoteEmbeddingBackend>(options);
    }
    return std::make_shared<HashEmbeddingBackend>(config.embedding_dimension);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"setupx: experience-driven repository setup with speculative execution and "
                 "prosecutor-judge verification"};
    app.require_subcommand(1);
    app.fallthrough();  // --config may follow the subcommand

    std::string config_path;
    app.add_option("--config", config_path, "run configuration JSON")->envname("SETUPX_CONFIG");

    // run
    auto* run_cmd = app.add_subcommand("run", "set up one repository and adjudicate the result");
    std::string task_path;
    run_cmd->add_option("--task", task_path, "repo task JSON")->required();

    // batch
    auto* batch_cmd = app.add_subcommand("batch", "run a task list and report the pass rate");
    std::string tasks_path;
    std::size_t parallelism = 1;
    batch_cmd->add_option("--tasks", tasks_path, "task list JSON")->required();
    batch_cmd->add_option("--parallel", parallelism, "concurrent runs");

    // adjudicate
    auto* adjudicate_cmd =
        app.add_subcommand("adjudicate", "re-run phase-2 adjudication on a stored trajectory");
    std::string trajectory_path, adjudication_out;
    adjudicate_cmd->add_option("--trajectory", trajectory_path, "trajectory JSONL")->required();
    adjudicate_cmd->add_option("--out", adjudication_out, "adjudication output path");

    // distill
    auto* distill_cmd =
        app.add_subcommand("distill", "distill a trajectory (+ adjudication) into the KB");
    std::string distill_trajectory, distill_adjudication, distill_report_out;
    distill_cmd->add_option("--trajectory", distill_trajectory, "trajectory JSONL")->required();
    distill_cmd->add_option("--adjudication", distill_adjudication, "adjudication JSON");
    distill_cmd->add_option("--report", distill_report_out, "distillation report output path");

    // kb
    auto* kb_cmd = app.add_subcommand("kb", "knowledge base utilities");
    kb_cmd->require_subcommand(1);
    std::string kb_path;
    kb_cmd->add_option("--kb", kb_path, "store path (JSON Lines)")->required();

    auto* kb_stats_cmd = kb_cmd->add_subcommand("stats", "entry count, tier histogram, mean success rate");

    auto* kb_ingest_cmd = kb_cmd->add_subcommand("ingest", "ingest XPU records (one JSON per line)");
    std::string ingest_entries;
    kb_ingest_cmd->add_option("--entries", ingest_entries, "XPU JSONL file")->required();

    auto* kb_noise_cmd = kb_cmd->add_subcommand("noise", "append synthetic perturbation entries");
    std::string noise_out, noise_counts, noise_templates;
    std::uint64_t noise_seed = 1;
    kb_noise_cmd->add_option("--out", noise_out, "output store (defaults to --kb)");
    kb_noise_cmd->add_option("--seed", noise_seed, "noise RNG seed");
    kb_noise_cmd->add_option("--counts", noise_counts,
                             "per-class counts a,b,c (context,graft,blur)");
    kb_noise_cmd->add_option("--templates", noise_templates, "noise templates JSON");

    auto* kb_prune_cmd = kb_cmd->add_subcommand("prune", "remove entries by source repository");
    std::string prune_repos;
    kb_prune_cmd->add_option("--repos", prune_repos, "comma-separated provenance list")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);

        if (run_cmd->parsed() || batch_cmd->parsed()) {
            XpuStore store = open_store(config.kb_path, config.embedding_dimension);
            Orchestrator orchestrator(config, store);
            BatchSummary summary;
            if (run_cmd->parsed()) {
                std::ifstream in(task_path);
                if (!in) throw IoFailure("cannot open task " + task_path);
                nlohmann::json j;
                in >> j;
                BatchTask task;
                task.task = repo_task_from_json(j);
                task.chat_script = j.value("chat_script", std::string{});
                task.sim_fixture = j.value("sim_fixture", std::string{});
                task.embedding_fixture = j.value("embedding_fixture", std::string{});
                summary = Orchestrator::summarize({orchestrator.run_one(task)});
            } else {
                summary = orchestrator.run_batch(load_batch_tasks(tasks_path), parallelism);
            }
            persist_store(store, config.kb_path);
            std::cout << batch_summary_to_json(summary).dump(2) << "\n";
            return exit_code_for(summary);
        }

        if (adjudicate_cmd->parsed()) {
            Trajectory trajectory = load_trajectory(trajectory_path);
            XpuStore store = open_store(config.kb_path, config.embedding_dimension);
            Orchestrator orchestrator(config, store);
            BatchTask task;
            task.task = trajectory.task;
            AdjudicationRecord record = orchestrator.adjudicate(trajectory, task);
            if (!adjudication_out.empty()) save_adjudication(record, adjudication_out);
            bool pass = compute_pass(trajectory.outcome, record);
            nlohmann::json out = adjudication_to_json(record);
            out["pass"] = pass;
            out["outcome"] = run_outcome_name(trajectory.outcome);
            std::cout << out.dump(2) << "\n";
            return pass ? 0 : 1;
        }

        if (distill_cmd->parsed()) {
            XpuStore store = open_store(config.kb_path, config.embedding_dimension);
            RunRecord record;
            record.trajectory_path = distill_trajectory;
            record.adjudication_path = distill_adjudication;
            record.task = load_trajectory(distill_trajectory).task;
            Orchestrator orchestrator(config, store);
            DistillBatchReport report = orchestrator.distill_batch({record});
            persist_store(store, config.kb_path);
            nlohmann::json out = {{"records", report.records},
                                  {"new", report.new_entries},
                                  {"merged", report.merged},
                                  {"per_record", report.per_record}};
            if (!distill_report_out.empty()) {
                std::ofstream f(distill_report_out);
                f << out.dump(2) << "\n";
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }

        if (kb_cmd->parsed()) {
            XpuStore store = open_store(kb_path, config.embedding_dimension);
            if (kb_stats_cmd->parsed()) {
                StoreStats stats = store.stats(config.thresholds);
                nlohmann::json out = {{"entries", stats.entries},
                                      {"tiers",
                                       {{"golden", stats.golden},
                                        {"normal", stats.normal},
                                        {"cold", stats.cold}}},
                                      {"mean_success_rate", stats.mean_success_rate},
                                      {"dimension", stats.dimension}};
                std::cout << out.dump(2) << "\n";
                return 0;
            }
            if (kb_ingest_cmd->parsed()) {
                auto embedder = embedding_backend_for(config);
                std::ifstream in(ingest_entries);
                if (!in) throw IoFailure("cannot open " + ingest_entries);
                std::string line;
                std::size_t count = 0;
                while (std::getline(in, line)) {
                    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                    Xpu xpu = xpu_from_json(nlohmann::json::parse(line));
                    store.ingest(xpu, embedder->embed(Distiller::embedding_text(xpu)));
                    ++count;
                }
                persist_store(store, kb_path);
                std::cout << "ingested " << count << " entries, store size " << store.size()
                          << "\n";
                return 0;
            }
            if (kb_noise_cmd->parsed()) {
                NoiseConfig noise;
                noise.seed = noise_seed;
                if (!noise_templates.empty())
                    noise.templates = NoiseTemplates::from_file(noise_templates);
                if (!noise_counts.empty()) {
                    unsigned long a = 0, b = 0, c = 0;
                    if (std::sscanf(noise_counts.c_str(), "%lu,%lu,%lu", &a, &b, &c) != 3)
                        throw Error("--counts expects a,b,c");
                    noise.counts = {a, b, c};
                }
                std::size_t added = append_noise(store, noise);
                store.save(noise_out.empty() ? kb_path : noise_out);
                std::cout << "added " << added << " noise entries, store size " << store.size()
                          << "\n";
                return 0;
            }
            if (kb_prune_cmd->parsed()) {
                std::vector<std::string> repos;
                std::string current;
                for (char ch : prune_repos + ",") {
                    if (ch == ',') {
                        if (!current.empty()) repos.push_back(current);
                        current.clear();
                    } else {
                        current += ch;
                    }
                }
                auto removed = store.prune_by_provenance(repos);
                persist_store(store, kb_path);
                std::cout << "pruned " << removed.size() << " entries, store size "
                          << store.size() << "\n";
                return 0;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
