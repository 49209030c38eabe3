#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "batchflip/flips.hpp"
#include "batchflip/scoring.hpp"
#include "batchflip/stats.hpp"
#include "batchflip/types.hpp"

namespace batchflip {

struct AnalyzeOptions {
    std::string baseline_condition;
    RefusalPatternSet patterns = RefusalPatternSet::default_v1();
    NormalizationPolicy policy;
    bool exclude_retried = true;
    std::optional<EndpointConfig> judge_endpoint;
    std::string rubric_id = "refusal-rubric-v1";
    std::string config_hash;  // echoed into the report
    std::uint64_t seed = 0;   // echoed into the report
    bool campaign_complete = true;
};

struct ConditionAxisStat {
    std::string condition;
    Axis axis = Axis::safety;
    std::int64_t flips = 0;
    std::int64_t pairs = 0;
    double rate = 0.0;
    stats::Interval ci;
};

struct CampaignAnalysis {
    std::string baseline_condition;
    std::string pattern_version;
    std::string config_hash;
    std::uint64_t seed = 0;
    bool campaign_complete = true;

    std::vector<ScoredRow> scored;
    std::vector<ConditionedRow> rows;
    std::vector<std::string> unpairable;
    std::vector<FlipRecord> flips;
    std::vector<TextChange> text_changes;
    std::int64_t excluded_cells = 0;
    std::int64_t retried_excluded = 0;
    std::int64_t failed_records = 0;
    std::int64_t unknown_labels = 0;

    FlipRateSummary safety;
    FlipRateSummary capability;
    std::optional<double> ratio;  // nullopt when capability rate is zero
    bool ratio_defined = false;
    DirectionSummary direction;
    std::map<std::string, AgreementResult> agreement_by_pair;  // "A|B"
    double instability_overall = 0.0;
    std::vector<ModelFragilityRow> fragility;

    std::vector<ConditionAxisStat> by_condition;
    std::map<std::string, stats::TestResult> mcnemar_by_condition;  // safety
    std::optional<stats::TestResult> cochran;                       // safety
    std::optional<stats::MantelHaenszelResult> mh;                  // safety

    struct Correlation {
        double r = 0.0;
        stats::Interval bootstrap_ci;
        double loo_min = 0.0;
        double loo_max = 0.0;
        double slope = 0.0;      // least-squares, y on x
        double intercept = 0.0;
    };
    std::optional<Correlation> instability_correlation;  // needs >= 3 models

    json to_json() const;  // the report.json payload, fully deterministic
};

// Scores target records, pairs them against the baseline, and runs the
// full battery. Judge-scored prompts go through the blinded judge when
// opts.judge_endpoint is set; otherwise they score unknown.
CampaignAnalysis analyze_campaign(const std::vector<ResponseRecord>& records,
                                  const std::vector<PromptSpec>& corpus,
                                  const AnalyzeOptions& opts);

// ---- adjudication ----

enum class Verdict { genuine, scorer_artifact, unresolved };

struct AdjudicationRecord {
    std::string prompt_id;
    std::string from_condition;
    std::string to_condition;
    Verdict verdict = Verdict::unresolved;
    std::string reviewer_id;
    std::string notes;
};

class IntegrityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class VerdictParseError : public std::runtime_error {
  public:
    VerdictParseError(int line, const std::string& msg);
    int line() const { return line_; }

  private:
    int line_;
};

// JSONL review file ordered by prompt_id plus a sibling "<path>.sum"
// checksum binding the export to the campaign. The checksum covers each row
// with verdict/reviewer_id/notes cleared, so reviewers can fill those in
// without invalidating it. Throws std::runtime_error when a flip has no
// backing response record, std::invalid_argument when flips is empty.
void export_candidates(const std::vector<FlipRecord>& flips,
                       const std::vector<ResponseRecord>& records,
                       const std::map<std::string, PromptSpec>& corpus,
                       const std::string& path,
                       const std::string& campaign_config_hash);

struct AdjudicationSummary {
    std::int64_t genuine = 0;
    std::int64_t artifacts = 0;
    std::int64_t unresolved = 0;
    std::int64_t resolved() const { return genuine + artifacts; }
    double genuine_fraction = 0.0;
    std::vector<AdjudicationRecord> records;
};

// Verifies the sibling checksum, parses verdicts (unknown token ->
// VerdictParseError with the line number), and computes the genuine
// fraction over resolved rows.
AdjudicationSummary import_verdicts(const std::string& path,
                                    const std::string& campaign_config_hash);

// ---- rendering ----

struct RenderOptions {
    bool include_text = false;  // raw response text stays out by default
    std::optional<AdjudicationSummary> adjudication;
};

// Writes report.json, report.md, tables/*.csv and charts/*.svg under
// out_dir. Byte-identical output for identical analysis inputs.
void render_report(const CampaignAnalysis& analysis, const std::string& out_dir,
                   const RenderOptions& opts = {});

}  // namespace batchflip
