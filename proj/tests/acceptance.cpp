// Acceptance suite: one criterion per function, one pass/fail line each.
// Fully hermetic: simulated sandbox, scripted chat, local embeddings.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "setupx/agent.hpp"
#include "setupx/kb_tools.hpp"
#include "setupx/orchestrator.hpp"

using namespace setupx;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int number;
    std::string title;
    std::function<void(std::vector<std::string>&)> run;
    double max_seconds = 0.0;  // 0 = no runtime bound
};

void expect(std::vector<std::string>& failures, bool condition, const std::string& what) {
    if (!condition) failures.push_back(what);
}

// -- independent oracle for criteria 1 and 2 ---------------------------------

double oracle_composite(double sim, std::int64_t hits, std::int64_t successes) {
    double rate = hits > 0 ? static_cast<double>(successes) / static_cast<double>(hits) : 0.0;
    double boost = 1.0;
    if (hits >= 5 && rate >= 0.2)
        boost = 1.5;
    else if (hits >= 5 && rate < 0.1)
        boost = 0.6;
    return sim * (1.0 + rate) * boost;
}

int oracle_tier_exact(std::int64_t hits, std::int64_t successes) {
    // 0 = golden, 1 = normal, 2 = cold, via integer comparisons (a=1/5, b=1/10)
    if (hits >= 5) {
        if (successes * 5 >= hits) return 0;
        if (successes * 10 < hits) return 2;
    }
    return 1;
}

void criterion_composite_oracle(std::vector<std::string>& failures) {
    std::mt19937 rng(20260810);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        double sim = unit(rng);
        std::int64_t hits = rng() % 101;
        std::int64_t successes = hits == 0 ? 0 : static_cast<std::int64_t>(rng() % (hits + 1));
        std::int64_t fail_count =
            hits - successes == 0 ? 0 : static_cast<std::int64_t>(rng() % (hits - successes + 1));
        double got = composite_score(sim, Telemetry{hits, successes, fail_count});
        double want = oracle_composite(sim, hits, successes);
        if (std::fabs(got - want) > 1e-12) {
            failures.push_back("mismatch at sim=" + std::to_string(sim) + " hits=" +
                               std::to_string(hits) + " successes=" + std::to_string(successes));
            return;
        }
    }
}

void criterion_tier_grid(std::vector<std::string>& failures) {
    for (std::int64_t hits = 0; hits <= 10; ++hits) {
        for (std::int64_t successes = 0; successes <= hits; ++successes) {
            Tier got = assign_tier(Telemetry{hits, successes, hits - successes});
            int got_code = got == Tier::Golden ? 0 : (got == Tier::Normal ? 1 : 2);
            if (got_code != oracle_tier_exact(hits, successes)) {
                failures.push_back("grid mismatch at hits=" + std::to_string(hits) +
                                   " successes=" + std::to_string(successes));
                return;
            }
        }
    }
    // explicit boundary probes: r = 0.1 is Normal, r = 0.2 is Golden
    expect(failures, assign_tier(Telemetry{10, 1, 9}) == Tier::Normal, "r=0.1 must be Normal");
    expect(failures, assign_tier(Telemetry{10, 2, 8}) == Tier::Golden, "r=0.2 must be Golden");
    expect(failures, assign_tier(Telemetry{100, 10, 90}) == Tier::Normal,
           "r=0.1 at hits=100 must be Normal");
    expect(failures, assign_tier(Telemetry{100, 20, 80}) == Tier::Golden,
           "r=0.2 at hits=100 must be Golden");
}

// -- criteria 3 and 4: simulator laws -----------------------------------------

std::vector<SimRule> trial_rules() {
    return SimSandbox::rules_from_json(nlohmann::json::parse(R"([
      {"pattern": "^mut([0-9]) (.*)$", "exit_code": 0, "stdout": "mutated"},
      {"pattern": "^bad$", "exit_code": 1, "stderr": "task failed hard"},
      {"pattern": "^probe-dirty$", "exit_code": 1, "stderr": "original error persists"},
      {"pattern": "^probe-clean$", "exit_code": 0, "stdout": "all clear"}
    ])"));
}

void criterion_trial_law(std::vector<std::string>& failures) {
    std::mt19937 rng(31337);
    for (int trial_case = 0; trial_case < 600; ++trial_case) {
        SimSandbox sandbox(trial_rules());
        // randomized pre-trial state and stack
        std::size_t preexisting = rng() % 3;
        for (std::size_t i = 0; i < preexisting; ++i) {
            sandbox.exec("touch pre" + std::to_string(i));
            sandbox.push_checkpoint("pre");
        }
        sandbox.set_env("SEED", std::to_string(rng() % 100));

        SimState before = sandbox.state_copy();
        std::size_t depth_before = sandbox.stack_depth();

        std::vector<std::string> commands;
        std::size_t mutations = rng() % 4;
        for (std::size_t i = 0; i < mutations; ++i)
            commands.push_back("touch trialfile" + std::to_string(i));
        bool inject_failure = rng() % 2 == 0;
        if (inject_failure) {
            std::size_t at = commands.empty() ? 0 : rng() % (commands.size() + 1);
            commands.insert(commands.begin() + static_cast<std::ptrdiff_t>(at), "bad");
        }
        if (commands.empty()) commands.push_back("touch trialfile0");

        std::optional<ErrorProbe> probe;
        bool probe_blocks = false;
        switch (rng() % 3) {
            case 0: break;
            case 1:
                probe = ErrorProbe{"probe-clean", "original error persists"};
                break;
            case 2:
                probe = ErrorProbe{"probe-dirty", "original error persists"};
                probe_blocks = true;
                break;
        }

        bool expect_success = !inject_failure && !probe_blocks;
        TrialOutcome outcome = sandbox.trial(commands, probe);

        if (expect_success) {
            if (outcome.status != TrialStatus::Success ||
                sandbox.stack_depth() != depth_before + 1 ||
                sandbox.state().files.count(sandbox.state().cwd + "/trialfile0") == 0) {
                failures.push_back("success branch violated at case " +
                                   std::to_string(trial_case));
                return;
            }
        } else {
            if (outcome.status != TrialStatus::Failure ||
                sandbox.stack_depth() != depth_before || !(sandbox.state_copy() == before)) {
                failures.push_back("failure branch violated at case " +
                                   std::to_string(trial_case));
                return;
            }
        }
    }
}

void criterion_lifo_oracle(std::vector<std::string>& failures) {
    // the pinned example: rollback(2) over [s1, s2, s3] restores s2
    {
        SimSandbox sandbox;
        sandbox.push_checkpoint("s1");
        sandbox.exec("touch a");
        SimState at_s2 = sandbox.state_copy();
        sandbox.push_checkpoint("s2");
        sandbox.exec("touch b");
        sandbox.push_checkpoint("s3");
        sandbox.exec("touch c");
        Snapshot restored = sandbox.rollback(2);
        expect(failures, restored.label == "s2", "rollback(2) must restore s2");
        expect(failures, sandbox.stack_depth() == 1 &&
                             sandbox.snapshot_stack().front().label == "s1",
               "stack must be [s1] after rollback(2)");
        expect(failures, sandbox.state_copy() == at_s2, "state must equal s2's capture");
    }

    std::mt19937 rng(77);
    for (int sequence = 0; sequence < 600; ++sequence) {
        SimSandbox sandbox;
        SimState model;
        std::vector<SimState> model_stack;
        std::size_t ops = 3 + rng() % 14;
        for (std::size_t op = 0; op < ops; ++op) {
            switch (rng() % 4) {
                case 0: {
                    std::string f = "f" + std::to_string(rng() % 8);
                    sandbox.exec("touch " + f);
                    model.files.emplace("/workspace/" + f, "");
                    break;
                }
                case 1: {
                    std::string key = "E" + std::to_string(rng() % 4);
                    std::string value = std::to_string(rng() % 50);
                    sandbox.set_env(key, value);
                    model.env[key] = value;
                    break;
                }
                case 2:
                    sandbox.push_checkpoint("cp");
                    model_stack.push_back(model);
                    break;
                case 3: {
                    if (model_stack.empty()) break;
                    std::size_t n = 1 + rng() % model_stack.size();
                    sandbox.rollback(n);
                    model = model_stack[model_stack.size() - n];
                    model_stack.resize(model_stack.size() - n);
                    break;
                }
            }
        }
        if (!(sandbox.state_copy() == model) || sandbox.stack_depth() != model_stack.size()) {
            failures.push_back("model divergence in sequence " + std::to_string(sequence));
            return;
        }
    }
}

// -- criterion 5: delayed audit ------------------------------------------------

void criterion_audit_rule(std::vector<std::string>& failures) {
    XpuStore store(2);
    auto mk = [&](const std::string& id, Telemetry t) {
        Xpu x;
        x.id = id;
        x.advice_nl = {"advice"};
        x.telemetry = t;
        store.ingest(x, Embedding{1.0, 0.0});
    };
    mk("win", Telemetry{63, 37, 15});
    mk("lose", Telemetry{10, 1, 5});
    mk("skip", Telemetry{7, 2, 2});

    auto chat = std::make_shared<ScriptedChatBackend>();
    chat->push(ChatRole::RetrieverAudit, R"([
        {"xpu_id": "win", "verdict": "success"},
        {"xpu_id": "lose", "verdict": "failure"},
        {"xpu_id": "skip", "verdict": "neutral"}])");
    LlmGateway gateway(chat, std::make_shared<HashEmbeddingBackend>(2));
    PromptLibrary prompts;
    Retriever retriever(store, gateway, prompts);

    RetrievalAnchor anchor;
    anchor.serial = 1;
    anchor.recommended_ids = {"win", "lose", "skip"};
    auto verdicts = retriever.audit_previous(anchor, {});
    expect(failures, verdicts.size() == 3, "three verdicts expected");
    expect(failures, store.get("win")->telemetry == Telemetry{63, 38, 15},
           "success must apply (+1, 0) to (successes, failures)");
    expect(failures, store.get("lose")->telemetry == Telemetry{10, 1, 6},
           "failure must apply (0, +1)");
    expect(failures, store.get("skip")->telemetry == Telemetry{7, 2, 2},
           "neutral must be a no-op");

    auto again = retriever.audit_previous(anchor, {});
    expect(failures, again.empty(), "re-auditing one anchor must be a no-op");
    expect(failures, store.get("win")->telemetry == Telemetry{63, 38, 15},
           "double audit must apply updates once");
    expect(failures,
           store.get("win")->telemetry.hits == 63 && store.get("lose")->telemetry.hits == 10,
           "audits must never change hits");
}

// -- criterion 6: retrieval ranking ---------------------------------------------

void criterion_retrieval_ranking(std::vector<std::string>& failures) {
    auto with_cosine = [](double c) { return Embedding{c, std::sqrt(1.0 - c * c)}; };
    HybridSituation situation;
    situation.state_summary = "ranking case";
    std::map<std::string, Embedding> fixture = {{situation.to_text(), Embedding{1.0, 0.0}}};

    // the constructed Golden-vs-Cold pair
    {
        XpuStore store(2);
        Xpu cold;
        cold.id = "cold_entry";
        cold.advice_nl = {"a"};
        cold.telemetry = Telemetry{6, 0, 6};
        Xpu golden;
        golden.id = "golden_entry";
        golden.advice_nl = {"a"};
        golden.telemetry = Telemetry{63, 37, 15};
        store.ingest(cold, with_cosine(0.90));
        store.ingest(golden, with_cosine(0.70));

        LlmGateway gateway(std::make_shared<ScriptedChatBackend>(),
                           std::make_shared<FixtureEmbeddingBackend>(fixture, 2));
        PromptLibrary prompts;
        RetrieverConfig config;
        config.mode = RetrievalMode::Direct;
        Retriever retriever(store, gateway, prompts, config);
        RetrievalResult result = retriever.retrieve(situation, {}, 0);
        expect(failures, result.candidates.size() == 2, "two candidates expected");
        expect(failures, result.candidates[0].xpu_id == "golden_entry",
               "the golden entry must outrank the cold one");
        expect(failures,
               std::fabs(result.candidates[0].score - 0.7 * (1.0 + 37.0 / 63.0) * 1.5) < 1e-9,
           "golden score must be about 1.667");
        expect(failures, std::fabs(result.candidates[1].score - 0.54) < 1e-9,
               "cold score must be 0.54");
    }

    // randomized store: direct order equals brute-force knn + composite-score sort
    {
        std::mt19937 rng(4096);
        std::normal_distribution<double> gauss(0.0, 1.0);
        XpuStore store(8);
        for (int i = 0; i < 50; ++i) {
            Embedding e(8);
            for (auto& x : e) x = gauss(rng);
            std::int64_t hits = rng() % 20;
            Xpu x;
            x.id = "r" + std::to_string(100 + i);
            x.advice_nl = {"a"};
            x.telemetry = Telemetry{hits, hits ? static_cast<std::int64_t>(rng() % (hits + 1)) : 0, 0};
            x.telemetry.failures = x.telemetry.hits - x.telemetry.successes;
            store.ingest(x, e);
        }
        Embedding query(8);
        for (auto& x : query) x = gauss(rng);
        std::map<std::string, Embedding> fixture2 = {{situation.to_text(), query}};
        LlmGateway gateway(std::make_shared<ScriptedChatBackend>(),
                           std::make_shared<FixtureEmbeddingBackend>(fixture2, 8));
        PromptLibrary prompts;
        RetrieverConfig config;
        config.mode = RetrievalMode::Direct;
        Retriever retriever(store, gateway, prompts, config);

        auto pool = store.knn(query, 10);
        std::vector<std::pair<std::string, double>> want;
        for (const auto& [id, sim] : pool)
            want.emplace_back(id, oracle_composite(sim, store.get(id)->telemetry.hits,
                                             store.get(id)->telemetry.successes));
        std::stable_sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        RetrievalResult result = retriever.retrieve(situation, {}, 0);
        expect(failures, result.xpus.size() == 3, "direct mode returns top-3");
        for (std::size_t i = 0; i < result.xpus.size(); ++i)
            expect(failures, result.xpus[i].id == want[i].first,
                   "direct order diverges from the brute-force oracle at " + std::to_string(i));
    }

    // selector: subset of top-10, hallucinations dropped
    {
        XpuStore store(2);
        for (int i = 0; i < 15; ++i) {
            Xpu x;
            x.id = "s" + std::to_string(100 + i);
            x.advice_nl = {"a"};
            store.ingest(x, with_cosine(0.99 - 0.05 * i));
        }
        auto chat = std::make_shared<ScriptedChatBackend>();
        chat->push(ChatRole::RetrieverSelect,
                   R"({"selected": ["ghost", "s104", "s100", "s113"]})");
        LlmGateway gateway(chat, std::make_shared<FixtureEmbeddingBackend>(fixture, 2));
        PromptLibrary prompts;
        RunLog log;
        Retriever retriever(store, gateway, prompts, {}, &log);
        RetrievalResult result = retriever.retrieve(situation, {}, 0);

        std::vector<std::string> top10;
        for (const auto& c : result.candidates) top10.push_back(c.xpu_id);
        expect(failures, top10.size() == 10, "candidate pool must be top-10");
        for (const auto& xpu : result.xpus)
            expect(failures,
                   std::find(top10.begin(), top10.end(), xpu.id) != top10.end(),
                   "selector output must be a subset of the top-10 candidates");
        for (const auto& xpu : result.xpus)
            expect(failures, xpu.id != "ghost", "hallucinated ids must be dropped");
        expect(failures, log.contains("ghost"), "dropped ids must be logged");
        // s113 ranks 14th by similarity, outside the top-10 pool
        for (const auto& xpu : result.xpus)
            expect(failures, xpu.id != "s113", "ids outside the top-10 pool must be dropped");
    }
}

// -- criterion 7: dedup gate -----------------------------------------------------

void criterion_dedup_gate(std::vector<std::string>& failures) {
    auto with_cosine = [](double c) { return Embedding{c, std::sqrt(1.0 - c * c)}; };
    auto candidate = [](const std::string& trigger) {
        Xpu x;
        x.signals.keywords = {"candidate keyword"};
        x.signals.situation_triggers = {trigger};
        x.advice_nl = {"candidate advice"};
        return CandidateXpu{x};
    };
    PromptLibrary prompts;

    // 0.84: bypasses the judge, ingested new
    {
        XpuStore store(2);
        store.ingest(fixtures::lock_fix_xpu(), with_cosine(1.0));
        auto chat = std::make_shared<ScriptedChatBackend>();
        std::map<std::string, Embedding> fixture = {
            {"far candidate advice", with_cosine(0.84)}};
        LlmGateway gateway(chat, std::make_shared<FixtureEmbeddingBackend>(fixture, 2));
        Distiller distiller(store, gateway, prompts);
        auto outcomes = distiller.dedup_and_ingest({candidate("far")});
        expect(failures, chat->calls_made(ChatRole::Distiller) == 0,
               "0.84 must not reach the equivalence judge");
        expect(failures,
               outcomes.size() == 1 && outcomes[0].action == IngestAction::IngestedNew,
               "0.84 must ingest as new");
        expect(failures, store.size() == 2, "store must grow by one");
        expect(failures, store.get(outcomes[0].xpu_id)->telemetry == Telemetry{},
               "new ingests carry zero telemetry");
    }

    // 0.86 + confirmed duplicate: merged, keyword union, size unchanged
    {
        XpuStore store(2);
        store.ingest(fixtures::lock_fix_xpu(), with_cosine(1.0));
        auto chat = std::make_shared<ScriptedChatBackend>();
        chat->push(ChatRole::Distiller,
                   R"({"duplicate": true, "fused_advice": ["one fused line"]})");
        std::map<std::string, Embedding> fixture = {
            {"near candidate advice", with_cosine(0.86)}};
        LlmGateway gateway(chat, std::make_shared<FixtureEmbeddingBackend>(fixture, 2));
        Distiller distiller(store, gateway, prompts);
        auto outcomes = distiller.dedup_and_ingest({candidate("near")});
        expect(failures, chat->calls_made(ChatRole::Distiller) == 1,
               "0.86 must reach the equivalence judge exactly once");
        expect(failures,
               outcomes.size() == 1 && outcomes[0].action == IngestAction::MergedInto,
               "confirmed duplicates must merge");
        expect(failures, store.size() == 1, "merges never change store size");
        auto merged = store.get("xpu_lock_fix");
        bool has_old = std::find(merged->signals.keywords.begin(),
                                 merged->signals.keywords.end(),
                                 "poetry.lock") != merged->signals.keywords.end();
        bool has_new = std::find(merged->signals.keywords.begin(),
                                 merged->signals.keywords.end(),
                                 "candidate keyword") != merged->signals.keywords.end();
        expect(failures, has_old && has_new, "merged keywords must union both parents");
    }

    // 0.86 + judged distinct: ingested as new with zero telemetry
    {
        XpuStore store(2);
        store.ingest(fixtures::lock_fix_xpu(), with_cosine(1.0));
        auto chat = std::make_shared<ScriptedChatBackend>();
        chat->push(ChatRole::Distiller, R"({"duplicate": false})");
        std::map<std::string, Embedding> fixture = {
            {"near candidate advice", with_cosine(0.86)}};
        LlmGateway gateway(chat, std::make_shared<FixtureEmbeddingBackend>(fixture, 2));
        Distiller distiller(store, gateway, prompts);
        auto outcomes = distiller.dedup_and_ingest({candidate("near")});
        expect(failures,
               outcomes.size() == 1 && outcomes[0].action == IngestAction::IngestedNew,
               "judged-distinct candidates must ingest as new");
        expect(failures, store.size() == 2, "store must grow by one");
        expect(failures, store.get(outcomes[0].xpu_id)->telemetry == Telemetry{},
               "new ingests carry zero telemetry");
    }
}

// -- criteria 8 and 9: end-to-end pipeline and pass rule -------------------------

struct ScenarioRun {
    RunRecord record;
    fs::path dir;
};

ScenarioRun run_scenario(bool healthy, const std::string& label, double wall_clock = 3600.0) {
    fs::path dir = fs::temp_directory_path() / ("setupx-acceptance-" + label);
    fs::remove_all(dir);
    auto files = fixtures::write_scenario_files((dir / "fixtures").string(), healthy);
    XpuStore store = XpuStore::load(files.kb_path);

    RunConfig config;
    config.sandbox_backend = "sim";
    config.chat_backend = "scripted";
    config.embedding_backend = "hash";
    config.embedding_dimension = 32;
    config.output_dir = (dir / "runs").string();
    config.budgets.wall_clock_s = wall_clock;

    Orchestrator orchestrator(config, store);
    BatchTask task;
    task.task = fixtures::lock_conflict_task();
    task.task.name = label;
    task.chat_script = files.chat_path;
    task.sim_fixture = files.rules_path;
    return ScenarioRun{orchestrator.run_one(task), dir};
}

void criterion_end_to_end(std::vector<std::string>& failures) {
    ScenarioRun healthy = run_scenario(true, "healthy");
    expect(failures, healthy.record.pass, "healthy scenario must pass");
    expect(failures, healthy.record.outcome == RunOutcome::Finished,
           "healthy scenario must finish");
    Trajectory t = load_trajectory(healthy.record.trajectory_path);
    bool saw_fail = false, saw_trial = false, saw_verify = false, saw_finish = false;
    for (const auto& s : t.steps) {
        if (s.observation.detail.value("exit_code", 0) != 0) saw_fail = true;
        if (s.action.kind == ActionKind::TryXpuSuggestion &&
            s.observation.detail.value("status", std::string{}) == "success")
            saw_trial = true;
        if (s.action.kind == ActionKind::Verify &&
            s.observation.detail.value("outcome", std::string{}) == "pass")
            saw_verify = true;
        if (s.action.kind == ActionKind::Finish && s.observation.kind == "finish")
            saw_finish = true;
    }
    expect(failures, saw_fail && saw_trial && saw_verify && saw_finish,
           "healthy run must follow fail -> retrieve -> trial -> verify -> finish");
    expect(failures, !t.anchors.empty(), "retrieval must have recorded an anchor");
    AdjudicationRecord adjudication = load_adjudication(healthy.record.adjudication_path);
    expect(failures, adjudication.charges.empty(), "healthy run must draw no charges");
    expect(failures, adjudication.verdict.decision == Decision::NotGuilty,
           "healthy run must be not guilty");
    fs::remove_all(healthy.dir);

    ScenarioRun mutated = run_scenario(false, "mutated");
    expect(failures, !mutated.record.pass, "mutated scenario must fail");
    AdjudicationRecord verdict = load_adjudication(mutated.record.adjudication_path);
    expect(failures, verdict.charges.size() == 1 &&
                         verdict.charges[0].category == FailureCategory::C3,
           "mutated scenario must draw a C3 charge");
    expect(failures, verdict.verdict.decision == Decision::Guilty,
           "mutated scenario must be ruled guilty");
    expect(failures,
           mutated.record.failure_categories ==
               std::vector<FailureCategory>{FailureCategory::C3},
           "the run record must carry the C3 category");
    fs::remove_all(mutated.dir);
}

void criterion_pass_rule(std::vector<std::string>& failures) {
    // recompute pass from the stored artifacts of both fixtures
    for (bool healthy : {true, false}) {
        ScenarioRun run = run_scenario(healthy, healthy ? "recompute-h" : "recompute-m");
        Trajectory t = load_trajectory(run.record.trajectory_path);
        AdjudicationRecord a = load_adjudication(run.record.adjudication_path);
        expect(failures, compute_pass(t.outcome, a) == run.record.pass,
               "stored artifacts must reproduce the recorded pass flag");
        fs::remove_all(run.dir);
    }

    // a wall-clock-exceeded run fails regardless of the verdict
    ScenarioRun timed_out = run_scenario(true, "timeout", 0.0);
    expect(failures, timed_out.record.outcome == RunOutcome::Timeout,
           "zero wall clock must time out");
    expect(failures, !timed_out.record.pass, "timeout must fail the run");
    AdjudicationRecord a = load_adjudication(timed_out.record.adjudication_path);
    expect(failures, a.charges.empty() && !timed_out.record.pass,
           "timeout must override an acquittal");
    fs::remove_all(timed_out.dir);

    // decision = (any ruling upheld) over randomized ruling lists
    std::mt19937 rng(606);
    for (int i = 0; i < 1000; ++i) {
        std::vector<ChargeRuling> rulings;
        bool any = false;
        std::size_t n = rng() % 5;
        for (std::size_t k = 0; k < n; ++k) {
            ChargeRuling r;
            r.charge_id = std::to_string(k);
            if (rng() % 2) {
                r.ruling = Ruling::Upheld;
                any = true;
            } else {
                r.ruling = Ruling::Dismissed;
                r.dismissal_reason = DismissalReason::ExternalFactor;
            }
            rulings.push_back(r);
        }
        if (decide(rulings) != (any ? Decision::Guilty : Decision::NotGuilty)) {
            failures.push_back("verdict rule violated on randomized rulings");
            return;
        }
    }
}

// -- criterion 10: verifier read-only ---------------------------------------------

void criterion_verifier_readonly(std::vector<std::string>& failures) {
    auto strip_tmp = [](SimState s) {
        for (auto it = s.files.begin(); it != s.files.end();)
            it = it->first.rfind("/tmp/", 0) == 0 ? s.files.erase(it) : std::next(it);
        return s;
    };

    struct Fixture {
        std::string name;
        nlohmann::json verifier_script;
    };
    std::vector<Fixture> fixture_list = {
        {"green",
         {R"({"action": "run", "command": "ls"})", R"({"action": "run", "command": "pytest"})",
          R"({"action": "report", "outcome": "pass", "notes": "ok"})"}},
        {"pip-attempt",
         {R"({"action": "run", "command": "pip install leftpad"})",
          R"({"action": "run", "command": "pytest"})",
          R"({"action": "report", "outcome": "setup_induced_failure", "notes": "missing dep"})"}},
        {"smoke-write",
         {R"({"action": "run", "command": "write_smoke"})",
          R"({"action": "run", "command": "python /tmp/smoke.py"})",
          R"({"action": "report", "outcome": "pass", "notes": "smoke ok"})"}},
        {"sneaky-effect",
         {R"({"action": "run", "command": "helper-tool"})",
          R"({"action": "report", "outcome": "project_intrinsic", "notes": "gave up"})"}},
    };

    auto rules = SimSandbox::rules_from_json(nlohmann::json::parse(R"json([
        {"pattern": "^pytest$", "exit_code": 0, "stdout": "3 passed"},
        {"pattern": "^write_smoke$", "exit_code": 0,
         "effects": [{"write": "/tmp/smoke.py", "content": "print(1)"}]},
        {"pattern": "python /tmp/smoke.py", "exit_code": 0, "stdout": "1"},
        {"pattern": "^helper-tool$", "exit_code": 0,
         "effects": [{"write": "/workspace/repo/generated.py"}]}
    ])json"));

    for (const auto& fixture : fixture_list) {
        SimSandbox sandbox(rules);
        sandbox.exec("touch repo_marker");
        sandbox.set_env("KEEP", "1");
        SimState before = sandbox.state_copy();

        auto chat = std::make_shared<ScriptedChatBackend>();
        for (const auto& line : fixture.verifier_script)
            chat->push(ChatRole::Verifier, line.get<std::string>());
        LlmGateway gateway(chat, std::make_shared<HashEmbeddingBackend>(4));
        PromptLibrary prompts;
        InLoopVerifier verifier(gateway, prompts);
        VerifierReport report = verifier.verify(sandbox, {});

        if (!(strip_tmp(sandbox.state_copy()) == strip_tmp(before))) {
            failures.push_back("state changed outside /tmp in fixture " + fixture.name);
            return;
        }
        if (fixture.name == "pip-attempt") {
            expect(failures,
                   report.notes.find("blocked: read-only constraint") != std::string::npos &&
                       report.notes.find("pip install leftpad") != std::string::npos,
                   "the blocked install attempt must appear in the notes");
        }
    }
}

// -- criterion 11: FINISH guard ------------------------------------------------------

void criterion_finish_guard(std::vector<std::string>& failures) {
    auto rules = SimSandbox::rules_from_json(nlohmann::json::parse(
        R"([{"pattern": "^git clone", "exit_code": 0},
            {"pattern": "^pytest$", "exit_code": 0, "stdout": "1 passed"}])"));
    SimSandbox sandbox(rules);
    auto chat = std::make_shared<ScriptedChatBackend>();
    chat->push(ChatRole::Setup, R"({"action_type": "FINISH", "content": {"message": "early"}})");
    chat->push(ChatRole::Setup, R"({"action_type": "VERIFY", "content": {}})");
    chat->push(ChatRole::Setup, R"({"action_type": "FINISH", "content": {"message": "done"}})");
    chat->push(ChatRole::Verifier, R"({"action": "run", "command": "pytest"})");
    chat->push(ChatRole::Verifier, R"({"action": "report", "outcome": "pass", "notes": "ok"})");
    LlmGateway gateway(chat, std::make_shared<HashEmbeddingBackend>(4));
    PromptLibrary prompts;
    XpuStore store(4);
    Retriever retriever(store, gateway, prompts);
    InLoopVerifier verifier(gateway, prompts);
    SetupAgent agent(sandbox, &retriever, verifier, gateway, prompts);
    Trajectory t = agent.run(fixtures::lock_conflict_task(), Budgets{20, 3600.0});

    expect(failures, t.outcome == RunOutcome::Finished, "the run must eventually finish");
    bool premature_rejected = false;
    for (const auto& s : t.steps)
        if (s.action.kind == ActionKind::Finish && s.observation.kind == "error" &&
            s.observation.text.find("VERIFY") != std::string::npos)
            premature_rejected = true;
    expect(failures, premature_rejected,
           "FINISH before a successful VERIFY must be rejected with the loop continuing");
    expect(failures, t.has_qualifying_verify(),
           "a finished trajectory must contain a qualifying VERIFY step");
    expect(failures, t.steps.back().action.kind == ActionKind::Finish,
           "the FINISH step must be last");
}

// -- criterion 12: noise generator -----------------------------------------------------

void criterion_noise_generator(std::vector<std::string>& failures) {
    XpuStore store(16);
    std::mt19937 rng(12);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 600; ++i) {
        Xpu x;
        x.id = "real_" + std::to_string(1000 + i);
        x.advice_nl = {"advice " + std::to_string(i)};
        x.signals.situation_triggers = {"situation " + std::to_string(i)};
        x.signals.context = {{"os", "ubuntu:22.04"}};
        Embedding e(16);
        for (auto& v : e) v = gauss(rng);
        store.ingest(x, e);
    }

    NoiseConfig cfg;
    cfg.seed = 2026;
    auto noise = generate_noise(store, cfg);
    auto noise_again = generate_noise(store, cfg);

    std::size_t ctx = 0, graft = 0, blur = 0;
    for (const auto& entry : noise) {
        if (entry.xpu.id.rfind("noise_ctx_", 0) == 0) ++ctx;
        if (entry.xpu.id.rfind("noise_graft_", 0) == 0) ++graft;
        if (entry.xpu.id.rfind("noise_blur_", 0) == 0) ++blur;
        if (!(entry.xpu.telemetry == Telemetry{}) ||
            assign_tier(entry.xpu.telemetry) != Tier::Normal) {
            failures.push_back("noise entry with non-zero telemetry: " + entry.xpu.id);
            return;
        }
    }
    expect(failures, ctx == 600 && graft == 450 && blur == 450,
           "default config must emit exactly 600/450/450 per class");

    std::vector<Embedding> real;
    for (const auto& id : store.ids()) real.push_back(store.get_entry(id)->embedding);
    for (const auto& entry : noise) {
        double best = -1.0;
        for (const auto& r : real) best = std::max(best, cosine_similarity(r, entry.embedding));
        if (best < 0.9) {
            failures.push_back("noise embedding left its parent neighborhood: " + entry.xpu.id);
            return;
        }
    }

    expect(failures, noise.size() == noise_again.size(), "seeded reruns must match in size");
    for (std::size_t i = 0; i < noise.size(); ++i) {
        if (!(xpu_to_json(noise[i].xpu) == xpu_to_json(noise_again[i].xpu)) ||
            !(noise[i].embedding == noise_again[i].embedding)) {
            failures.push_back("seeded rerun diverged at entry " + std::to_string(i));
            return;
        }
    }
}

// -- criterion 13: persistence and concurrency ---------------------------------------

void criterion_persistence(std::vector<std::string>& failures) {
    fs::path dir = fs::temp_directory_path() / "setupx-acceptance-persist";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // store round-trip
    XpuStore store(4);
    std::mt19937 rng(8);
    for (int i = 0; i < 20; ++i) {
        Xpu x;
        x.id = "p" + std::to_string(i);
        x.advice_nl = {"advice " + std::to_string(i)};
        x.telemetry = Telemetry{static_cast<std::int64_t>(10 + i), static_cast<std::int64_t>(i),
                                static_cast<std::int64_t>(5)};
        x.provenance = i % 2 ? "repoA" : "";
        Embedding e(4);
        for (auto& v : e) v = static_cast<double>(rng() % 1000) / 1000.0;
        store.ingest(x, e);
    }
    std::string store_path = (dir / "store.jsonl").string();
    store.save(store_path);
    XpuStore loaded = XpuStore::load(store_path);
    bool stores_equal = loaded.size() == store.size();
    for (const auto& id : store.ids()) {
        auto a = store.get_entry(id);
        auto b = loaded.get_entry(id);
        stores_equal = stores_equal && b.has_value() && a->xpu == b->xpu &&
                       a->embedding == b->embedding;
    }
    expect(failures, stores_equal, "store save/load must be the identity");

    // trajectory round-trip via the scripted scenario
    ScenarioRun run = run_scenario(true, "persist");
    Trajectory t1 = load_trajectory(run.record.trajectory_path);
    std::string copy_path = (dir / "trajectory_copy.jsonl").string();
    save_trajectory(t1, copy_path);
    Trajectory t2 = load_trajectory(copy_path);
    bool trajectories_equal =
        t1.steps.size() == t2.steps.size() && t1.outcome == t2.outcome &&
        t1.anchors.size() == t2.anchors.size();
    for (std::size_t i = 0; trajectories_equal && i < t1.steps.size(); ++i)
        trajectories_equal = step_to_json(t1.steps[i]) == step_to_json(t2.steps[i]);
    expect(failures, trajectories_equal, "trajectory save/load must be the identity");
    fs::remove_all(run.dir);

    // concurrent telemetry updates from 8 workers lose no increments
    XpuStore concurrent(2);
    Xpu shared;
    shared.id = "shared";
    shared.advice_nl = {"advice"};
    concurrent.ingest(shared, Embedding{1.0, 0.0});
    constexpr int kWorkers = 8, kEach = 1000;
    std::vector<std::thread> workers;
    for (int w = 0; w < kWorkers; ++w)
        workers.emplace_back([&concurrent] {
            for (int i = 0; i < kEach; ++i)
                concurrent.update_telemetry("shared", TelemetryDelta{1, 1, 0});
        });
    for (auto& w : workers) w.join();
    Telemetry final_counters = concurrent.get("shared")->telemetry;
    expect(failures,
           final_counters.hits == kWorkers * kEach && final_counters.successes == kWorkers * kEach,
           "final counters must equal the sum of applied deltas");

    fs::remove_all(dir);
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "Composite-score oracle (1e-12 over randomized telemetry)",
         criterion_composite_oracle, 1.0},
        {2, "Tier boundary grid (exhaustive, exact-arithmetic oracle)", criterion_tier_grid, 1.0},
        {3, "Speculative-trial law (restore on failure, retain on success)",
         criterion_trial_law, 10.0},
        {4, "LIFO rollback oracle (random sequences vs pure model)", criterion_lifo_oracle, 10.0},
        {5, "Delayed-audit update rule (success/failure/neutral deltas)", criterion_audit_rule},
        {6, "Retrieval ranking (brute-force oracle, golden-vs-cold, selector subset)",
         criterion_retrieval_ranking},
        {7, "Dedup gate (0.84 bypasses, 0.86 reaches the judge)", criterion_dedup_gate},
        {8, "End-to-end scripted pipeline (healthy passes, mutated draws C3)",
         criterion_end_to_end, 30.0},
        {9, "Pass-rule conformance (recompute from artifacts, timeout fails)",
         criterion_pass_rule},
        {10, "Verifier read-only (state equal outside /tmp, blocks logged)",
         criterion_verifier_readonly},
        {11, "FINISH guard (premature FINISH rejected, VERIFY required)",
         criterion_finish_guard},
        {12, "Noise generator (600/450/450, zero telemetry, cosine >= 0.9, seeded)",
         criterion_noise_generator},
        {13, "Persistence (round-trip identities, no lost concurrent updates)",
         criterion_persistence},
    };

    int failed = 0;
    for (const auto& criterion : criteria) {
        std::vector<std::string> failures;
        auto start = std::chrono::steady_clock::now();
        try {
            criterion.run(failures);
        } catch (const std::exception& e) {
            failures.push_back(std::string("exception: ") + e.what());
        }
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (criterion.max_seconds > 0 && elapsed > criterion.max_seconds)
            failures.push_back("runtime " + std::to_string(elapsed) + "s exceeds " +
                               std::to_string(criterion.max_seconds) + "s");
        if (failures.empty()) {
            std::printf("PASS criterion %2d: %s (%.3fs)\n", criterion.number,
                        criterion.title.c_str(), elapsed);
        } else {
            ++failed;
            std::printf("FAIL criterion %2d: %s (%.3fs)\n", criterion.number,
                        criterion.title.c_str(), elapsed);
            for (const auto& f : failures) std::printf("      - %s\n", f.c_str());
        }
    }
    std::printf("%d/%zu acceptance criteria passed\n", static_cast<int>(criteria.size()) - failed,
                criteria.size());
    return failed == 0 ? 0 : 1;
}
