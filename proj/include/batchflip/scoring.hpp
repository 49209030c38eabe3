#pragma once

#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "batchflip/client.hpp"
#include "batchflip/normalize.hpp"
#include "batchflip/types.hpp"

namespace batchflip {

// Patterns are case-insensitive regexes searched in normalized text. A
// refusal match is vetoed when any compliance override also matches (e.g. a
// refusal phrase quoted inside otherwise compliant content).
struct RefusalPatternSet {
    std::string version = "v1";
    std::vector<std::string> refusal_patterns;
    std::vector<std::string> compliance_overrides;

    std::string scorer_id() const { return "refusal_pattern:" + version; }
    static RefusalPatternSet default_v1();
    static RefusalPatternSet from_json(const json& j);
    json to_json() const;
    static RefusalPatternSet load(const std::string& path);
};

Label score_refusal(const std::string& normalized_text,
                    const RefusalPatternSet& patterns);

// Extracts the first standalone option token (a-d) or a final-answer span
// and compares it with the gold label after normalization.
Label score_mcq(const std::string& normalized_text, const std::string& gold);

// ---- blinded judge ----

struct JudgePayload {
    std::string prompt_text;
    std::string response_text;
    std::string rubric_id = "refusal-rubric-v1";
};

// Substrings that must never reach the judge: condition ids, batch-size
// tokens, neighbor prompt texts.
struct BlindingContext {
    std::vector<std::string> forbidden;
};

// Deterministic judging prompt; throws std::invalid_argument when the
// serialized payload would leak anything in `blinding`.
CompletionRequest build_judge_request(const JudgePayload& payload,
                                      const BlindingContext& blinding = {});

struct JudgeVerdict {
    Label label = Label::unknown;
    bool parse_failed = false;
};

// Parses a "VERDICT: <label>" reply; anything else is unknown + flag.
JudgeVerdict parse_judge_verdict(const std::string& reply);

inline std::string judge_scorer_id(const std::string& rubric_id) {
    return "judge:" + rubric_id;
}

// ---- row scoring ----

// Applies exactly the scorer named by the prompt spec. Judge-scored prompts
// need a live judge; score_with_judge covers those, score_row labels them
// unknown with scorer_id "judge:unavailable".
ScoredRow score_row(const PromptSpec& prompt, const ResponseRecord& record,
                    const RefusalPatternSet& patterns,
                    const NormalizationPolicy& policy = {});

class ServingClient;
ScoredRow score_with_judge(const PromptSpec& prompt,
                           const ResponseRecord& record,
                           const ServingClient& judge,
                           const std::string& rubric_id,
                           const BlindingContext& blinding,
                           const NormalizationPolicy& policy = {});

}  // namespace batchflip
