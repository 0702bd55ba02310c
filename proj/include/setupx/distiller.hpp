#pragma once

#include <optional>
#include <string>
#include <vector>

#include "setupx/adjudication.hpp"
#include "setupx/gateway.hpp"
#include "setupx/prompts.hpp"
#include "setupx/runlog.hpp"
#include "setupx/store.hpp"
#include "setupx/trajectory.hpp"

namespace setupx {

struct ProblemFixPair {
    std::size_t problem_step = 0;
    std::string problem_error;
    std::size_t fix_step = 0;  // always >= problem_step (forward attribution)
    std::string fix_action;
    double confidence = 0.0;
};

// An XPU-shaped candidate: no id yet, zero telemetry.
struct CandidateXpu {
    Xpu xpu;
};

enum class IngestAction { IngestedNew, MergedInto };

struct IngestOutcome {
    IngestAction action = IngestAction::IngestedNew;
    std::string xpu_id;
};

struct DistillationReport {
    std::vector<ProblemFixPair> pairs;
    std::size_t candidates = 0;
    std::vector<IngestOutcome> outcomes;

    std::size_t new_count() const;
    std::size_t merged_count() const;
};

nlohmann::json distillation_report_to_json(const DistillationReport& report);

struct DistillerConfig {
    double dedup_threshold = 0.85;
};

// Offline four-step distillation: verdict-aware extraction of problem-fix
// pairs, schema-level distillation into candidate XPUs, then coarse-to-fine
// deduplication against the store.
class Distiller {
public:
    Distiller(XpuStore& store, LlmGateway& gateway, const PromptLibrary& prompts,
              DistillerConfig config = {}, RunLog* log = nullptr);

    // Chat-driven extraction, verdict first. Pairs claiming a fix before the
    // problem are dropped and logged. Gateway failure yields an empty list.
    std::vector<ProblemFixPair> ingest_trajectory(const Trajectory& trajectory,
                                                  const std::optional<AdjudicationRecord>& adjudication);

    // One candidate per root cause; candidates failing schema validation are
    // skipped with a diagnostic.
    std::vector<CandidateXpu> distill(const std::vector<ProblemFixPair>& pairs);

    // Per candidate: embed, pre-filter at the dedup threshold, judge
    // equivalence against the top hit only, then merge or ingest as new.
    std::vector<IngestOutcome> dedup_and_ingest(const std::vector<CandidateXpu>& candidates,
                                                const std::string& provenance = "");

    // Full pipeline over one run; returns the cumulative report.
    DistillationReport run(const Trajectory& trajectory,
                           const std::optional<AdjudicationRecord>& adjudication,
                           const std::string& provenance = "");

    // Text embedded for a candidate: situation triggers plus the first advice
    // sentence, mirroring the retrieval-side hybrid situation semantics.
    static std::string embedding_text(const Xpu& xpu);

private:
    XpuStore& store_;
    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    DistillerConfig config_;
    RunLog* log_;
};

}  // namespace setupx
