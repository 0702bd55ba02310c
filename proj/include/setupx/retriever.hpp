#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "setupx/gateway.hpp"
#include "setupx/prompts.hpp"
#include "setupx/runlog.hpp"
#include "setupx/store.hpp"
#include "setupx/trajectory.hpp"

namespace setupx {

enum class RetrievalMode { Selector, Direct };
const std::string& retrieval_mode_name(RetrievalMode mode);
RetrievalMode retrieval_mode_from_name(const std::string& name);

// Retrieval query: a model-written state summary paired with the raw output
// and extracted error lines of the last command.
struct HybridSituation {
    std::string state_summary;
    std::string raw_output;
    std::string error_text;

    std::string to_text() const;
    bool empty() const { return state_summary.empty() && raw_output.empty() && error_text.empty(); }
};

enum class AuditOutcome { Success, Failure, Neutral };
const std::string& audit_outcome_name(AuditOutcome outcome);

struct AuditVerdict {
    std::string xpu_id;
    AuditOutcome outcome = AuditOutcome::Neutral;
    std::string rationale;
};

struct RetrievalResult {
    std::vector<Xpu> xpus;
    RetrievalAnchor anchor;
    std::vector<RetrievalCandidate> candidates;  // the ranked top-n pool
};

// Lines considered failure signals when excerpting error text and when the
// agent decides whether to trigger retrieval.
bool line_is_error_signal(const std::string& line);
std::string extract_error_lines(const std::string& output, std::size_t max_lines = 20);

struct RetrieverConfig {
    RetrievalMode mode = RetrievalMode::Selector;
    std::size_t top_n = 10;
    std::size_t top_k = 3;
    TierThresholds thresholds;
    std::size_t situation_max_chars = 4000;
    std::size_t raw_tail_lines = 40;
    std::size_t audit_window_steps = 5;
};

// The retriever agent: builds hybrid situations, runs coarse-to-fine
// retrieval, records anchors and audits the previous recommendation before
// each new retrieval.
class Retriever {
public:
    Retriever(XpuStore& store, LlmGateway& gateway, const PromptLibrary& prompts,
              RetrieverConfig config = {}, RunLog* log = nullptr);

    // One chat call produces the state summary; raw output / error lines are
    // excerpted deterministically. A gateway failure degrades to a raw-only
    // situation. Throws Error on an empty trajectory tail.
    HybridSituation build_situation(const std::vector<Step>& trajectory_tail,
                                    const ExecResult& last_result);

    // Audits the pending anchor (if any), embeds the situation, ranks the
    // top-n by composite score, applies the configured mode, increments hits
    // for every returned entry and records a fresh anchor.
    RetrievalResult retrieve(const HybridSituation& situation,
                             const std::vector<Step>& trajectory,
                             std::size_t trajectory_position);

    // Applies the delayed-audit update rule to the store: success -> one more
    // success, failure -> one more failure, neutral -> no change; hits are
    // never touched. An anchor is consumed at most once; re-audits return
    // empty without side effects.
    std::vector<AuditVerdict> audit_previous(const RetrievalAnchor& anchor,
                                             const std::vector<Step>& trajectory);

    const std::optional<RetrievalAnchor>& pending_anchor() const { return pending_anchor_; }
    void clear_pending_anchor() { pending_anchor_.reset(); }

private:
    std::vector<RetrievalCandidate> rank_candidates(const Embedding& query) const;
    std::vector<std::string> select_with_model(const std::vector<RetrievalCandidate>& candidates,
                                               const HybridSituation& situation);

    XpuStore& store_;
    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    RetrieverConfig config_;
    RunLog* log_;
    std::optional<RetrievalAnchor> pending_anchor_;
    std::set<std::uint64_t> consumed_anchors_;
    std::uint64_t next_anchor_serial_ = 1;
};

}  // namespace setupx
