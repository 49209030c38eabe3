#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "batchflip/stats.hpp"
#include "batchflip/types.hpp"

namespace batchflip {

// Pure transformations from scored rows to flip analytics. Everything here
// is deterministic over immutable inputs.

struct PairingResult {
    std::vector<ConditionedRow> rows;
    std::vector<std::string> unpairable;  // prompts missing the baseline cell
};

class AmbiguousRowsError : public std::runtime_error {
  public:
    explicit AmbiguousRowsError(std::vector<std::string> offenders);
    const std::vector<std::string>& offenders() const { return offenders_; }

  private:
    std::vector<std::string> offenders_;
};

// One ConditionedRow per (prompt, repeat) having the baseline cell and at
// least one alternate. Duplicate (prompt, condition, repeat) rows raise
// AmbiguousRowsError naming the offenders.
PairingResult pair_rows(const std::vector<ScoredRow>& scored,
                        const std::string& baseline_condition,
                        const std::map<std::string, PromptSpec>& corpus);

struct TextChange {
    std::string prompt_id;
    std::string from_condition;
    std::string to_condition;
};

struct FlipDetection {
    std::vector<FlipRecord> flips;
    std::vector<TextChange> text_changes;  // label flips included
    int excluded_cells = 0;                // unknown on either side
};

FlipDetection detect_flips(const ConditionedRow& row);
FlipDetection detect_flips(const std::vector<ConditionedRow>& rows);

struct FlipRateSummary {
    Axis axis = Axis::safety;
    std::int64_t numerator = 0;    // flips
    std::int64_t denominator = 0;  // comparable baseline-alternate pairs
    double rate = 0.0;
    stats::Interval wilson_ci;
    std::int64_t excluded = 0;  // pairs dropped for unknown labels
    bool has_data = false;
};

FlipRateSummary flip_rates(const std::vector<ConditionedRow>& rows, Axis axis);

// safety.rate / capability.rate; nullopt marks the undefined-ratio case
// (capability rate zero).
std::optional<double> safety_capability_ratio(const FlipRateSummary& safety,
                                              const FlipRateSummary& capability);

struct DirectionSummary {
    std::int64_t unsafe_count = 0;
    std::int64_t safe_count = 0;
    double pooled_fraction_unsafe = 0.0;
    stats::Interval wilson_ci;
    double binomial_p_two_sided = 1.0;  // vs 0.5
    bool net_safe = false;
    bool has_data = false;
};

// Safety-axis flips only; capability flips are direction-neutral and
// rejected here.
DirectionSummary direction_summary(const std::vector<FlipRecord>& flips);

struct AgreementResult {
    std::int64_t matches = 0;
    std::int64_t comparable = 0;
    double fraction = 0.0;
    bool has_data = false;
};

AgreementResult agreement(const std::vector<ConditionedRow>& rows,
                          const std::string& cond_a, const std::string& cond_b);

// Fraction of rows with any cross-condition normalized-text change.
double instability(const std::vector<ConditionedRow>& rows);

struct CorrectedRate {
    double genuine_fraction = 0.0;
    double corrected_rate = 0.0;
    std::int64_t genuine = 0;
    std::int64_t reviewed = 0;
};

CorrectedRate corrected_rate(const FlipRateSummary& raw, std::int64_t genuine,
                             std::int64_t reviewed);

struct ModelFragilityRow {
    std::string model_id;
    double safety_flip_rate = 0.0;
    stats::Interval safety_ci;
    double capability_flip_rate = 0.0;
    stats::Interval capability_ci;
    double instability = 0.0;
    std::string alignment_category;  // optional tag

    json to_json() const;
};

// Sorted descending by safety flip rate, ties broken by model_id.
std::vector<ModelFragilityRow> fragility_table(
    std::vector<ModelFragilityRow> rows);

}  // namespace batchflip
