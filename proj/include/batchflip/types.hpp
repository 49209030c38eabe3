#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace batchflip {

using json = nlohmann::json;

// ---- enums ----

enum class Axis { safety, capability };

enum class TaskFamily {
    advbench_refusal,
    jailbreak_amplification,
    bbq_bias,
    mmlu_real,
    arc_challenge,
    truthfulqa,
    custom,
};

enum class ScorerKind { refusal_pattern, mcq_exact, judge };

enum class Label { refusal, compliance, correct, incorrect, unknown };

enum class ConditionKind {
    sequential,
    synchronized_batch,
    true_batch,
    composition,
};

enum class KernelMode { standard, batch_invariant };

enum class TransportStatus { ok, retried_ok, failed };

enum class FlipDirection { unsafe_direction, safe_direction, capability_flip };

std::string to_string(Axis v);
std::string to_string(ScorerKind v);
std::string to_string(Label v);
std::string to_string(ConditionKind v);
std::string to_string(KernelMode v);
std::string to_string(TransportStatus v);
std::string to_string(FlipDirection v);

Axis axis_from_string(const std::string& s);
ScorerKind scorer_from_string(const std::string& s);
Label label_from_string(const std::string& s);
ConditionKind condition_kind_from_string(const std::string& s);
KernelMode kernel_mode_from_string(const std::string& s);
TransportStatus transport_status_from_string(const std::string& s);
FlipDirection flip_direction_from_string(const std::string& s);

// ---- domain types ----

// All value objects below are immutable in spirit: once built they are only
// copied/moved between threads, never mutated in place.

struct PromptSpec {
    std::string id;
    TaskFamily task_family = TaskFamily::custom;
    std::string custom_family;  // family name when task_family == custom
    Axis axis = Axis::safety;
    std::string text;
    std::optional<std::string> gold_label;  // capability prompts only
    ScorerKind scorer = ScorerKind::refusal_pattern;

    std::string family_name() const;
    static PromptSpec from_json(const json& j);
    json to_json() const;
};

struct DecodeParams {
    double temperature = 0.0;  // must be exactly 0.0
    int max_tokens = 256;
    int max_context = 2048;

    static DecodeParams from_json(const json& j);
    json to_json() const;
};

struct ServingCondition {
    std::string id;
    ConditionKind kind = ConditionKind::sequential;
    int batch_size = 1;
    int concurrency = 1;
    std::vector<std::string> neighbor_pool;  // composition only
    KernelMode kernel_mode = KernelMode::standard;
    DecodeParams decode;
    std::vector<int> start_offsets_ms;  // optional temporal-overlap sweep

    static ServingCondition from_json(const json& j);
    json to_json() const;
};

struct ResponseRecord {
    std::string prompt_id;
    std::string condition_id;
    int attempt = 1;
    std::string raw_text;
    std::string normalized_text;
    std::int64_t t_start = 0;  // monotonic ns
    std::int64_t t_end = 0;
    TransportStatus transport_status = TransportStatus::ok;
    std::map<std::string, std::string> provenance;
    // Orchestrator bookkeeping (not server metadata):
    int repeat = 0;
    std::string request_tag;
    std::string role = "target";  // "target" or "neighbor"
    std::string window_id;

    bool ok() const { return transport_status != TransportStatus::failed; }
    static ResponseRecord from_json(const json& j);
    json to_json() const;
};

struct ScoredRow {
    std::string prompt_id;
    std::string condition_id;
    Label label = Label::unknown;
    std::string scorer_id;
    std::uint64_t text_hash = 0;
    int repeat = 0;

    static ScoredRow from_json(const json& j);
    json to_json() const;
};

struct ConditionedRow {
    std::string prompt_id;
    Axis axis = Axis::safety;
    std::map<std::string, ScoredRow> cells;  // condition_id -> cell
    std::string baseline_condition_id;
    int repeat = 0;

    static ConditionedRow from_json(const json& j);
    json to_json() const;
};

struct FlipRecord {
    std::string prompt_id;
    std::string from_condition;
    std::string to_condition;
    Label from_label = Label::unknown;
    Label to_label = Label::unknown;
    FlipDirection direction = FlipDirection::capability_flip;
    bool text_changed = false;

    static FlipRecord from_json(const json& j);
    json to_json() const;
};

// ---- corpus ----

struct ValidationError {
    std::string prompt_id;
    std::string message;
};

std::vector<ValidationError> validate_corpus(
    const std::vector<PromptSpec>& prompts);

// JSON Lines, one PromptSpec per line, UTF-8. Throws std::runtime_error on
// unreadable file or unparseable line.
std::vector<PromptSpec> load_corpus(const std::string& path);
void save_corpus(const std::vector<PromptSpec>& prompts,
                 const std::string& path);

}  // namespace batchflip
