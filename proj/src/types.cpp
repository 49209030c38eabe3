#include "batchflip/types.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "batchflip/hash.hpp"

namespace batchflip {

namespace {

[[noreturn]] void bad_enum(const std::string& what, const std::string& got) {
    throw std::invalid_argument("unknown " + what + ": '" + got + "'");
}

}  // namespace

std::string to_string(Axis v) {
    return v == Axis::safety ? "safety" : "capability";
}

Axis axis_from_string(const std::string& s) {
    if (s == "safety") return Axis::safety;
    if (s == "capability") return Axis::capability;
    bad_enum("axis", s);
}

std::string to_string(ScorerKind v) {
    switch (v) {
        case ScorerKind::refusal_pattern: return "refusal_pattern";
        case ScorerKind::mcq_exact: return "mcq_exact";
        case ScorerKind::judge: return "judge";
    }
    return "refusal_pattern";
}

ScorerKind scorer_from_string(const std::string& s) {
    if (s == "refusal_pattern") return ScorerKind::refusal_pattern;
    if (s == "mcq_exact") return ScorerKind::mcq_exact;
    if (s == "judge") return ScorerKind::judge;
    bad_enum("scorer", s);
}

std::string to_string(Label v) {
    switch (v) {
        case Label::refusal: return "refusal";
        case Label::compliance: return "compliance";
        case Label::correct: return "correct";
        case Label::incorrect: return "incorrect";
        case Label::unknown: return "unknown";
    }
    return "unknown";
}

Label label_from_string(const std::string& s) {
    if (s == "refusal") return Label::refusal;
    if (s == "compliance") return Label::compliance;
    if (s == "correct") return Label::correct;
    if (s == "incorrect") return Label::incorrect;
    if (s == "unknown") return Label::unknown;
    bad_enum("label", s);
}

std::string to_string(ConditionKind v) {
    switch (v) {
        case ConditionKind::sequential: return "sequential";
        case ConditionKind::synchronized_batch: return "synchronized_batch";
        case ConditionKind::true_batch: return "true_batch";
        case ConditionKind::composition: return "composition";
    }
    return "sequential";
}

ConditionKind condition_kind_from_string(const std::string& s) {
    if (s == "sequential") return ConditionKind::sequential;
    if (s == "synchronized_batch") return ConditionKind::synchronized_batch;
    if (s == "true_batch") return ConditionKind::true_batch;
    if (s == "composition") return ConditionKind::composition;
    bad_enum("condition kind", s);
}

std::string to_string(KernelMode v) {
    return v == KernelMode::standard ? "standard" : "batch_invariant";
}

KernelMode kernel_mode_from_string(const std::string& s) {
    if (s == "standard") return KernelMode::standard;
    if (s == "batch_invariant") return KernelMode::batch_invariant;
    bad_enum("kernel mode", s);
}

std::string to_string(TransportStatus v) {
    switch (v) {
        case TransportStatus::ok: return "ok";
        case TransportStatus::retried_ok: return "retried_ok";
        case TransportStatus::failed: return "failed";
    }
    return "failed";
}

TransportStatus transport_status_from_string(const std::string& s) {
    if (s == "ok") return TransportStatus::ok;
    if (s == "retried_ok") return TransportStatus::retried_ok;
    if (s == "failed") return TransportStatus::failed;
    bad_enum("transport status", s);
}

std::string to_string(FlipDirection v) {
    switch (v) {
        case FlipDirection::unsafe_direction: return "unsafe_direction";
        case FlipDirection::safe_direction: return "safe_direction";
        case FlipDirection::capability_flip: return "capability_flip";
    }
    return "capability_flip";
}

FlipDirection flip_direction_from_string(const std::string& s) {
    if (s == "unsafe_direction") return FlipDirection::unsafe_direction;
    if (s == "safe_direction") return FlipDirection::safe_direction;
    if (s == "capability_flip") return FlipDirection::capability_flip;
    bad_enum("flip direction", s);
}

namespace {

const std::map<std::string, TaskFamily>& family_names() {
    static const std::map<std::string, TaskFamily> names = {
        {"advbench_refusal", TaskFamily::advbench_refusal},
        {"jailbreak_amplification", TaskFamily::jailbreak_amplification},
        {"bbq_bias", TaskFamily::bbq_bias},
        {"mmlu_real", TaskFamily::mmlu_real},
        {"arc_challenge", TaskFamily::arc_challenge},
        {"truthfulqa", TaskFamily::truthfulqa},
    };
    return names;
}

}  // namespace

std::string PromptSpec::family_name() const {
    if (task_family == TaskFamily::custom) return custom_family;
    for (const auto& [name, fam] : family_names())
        if (fam == task_family) return name;
    return custom_family;
}

PromptSpec PromptSpec::from_json(const json& j) {
    PromptSpec p;
    p.id = j.at("id").get<std::string>();
    const std::string fam = j.at("task_family").get<std::string>();
    auto it = family_names().find(fam);
    if (it != family_names().end()) {
        p.task_family = it->second;
    } else {
        p.task_family = TaskFamily::custom;
        p.custom_family = fam;
    }
    p.axis = axis_from_string(j.at("axis").get<std::string>());
    p.text = j.at("text").get<std::string>();
    if (j.contains("gold_label") && !j.at("gold_label").is_null())
        p.gold_label = j.at("gold_label").get<std::string>();
    p.scorer = scorer_from_string(j.at("scorer").get<std::string>());
    return p;
}

json PromptSpec::to_json() const {
    json j;
    j["id"] = id;
    j["task_family"] = family_name();
    j["axis"] = to_string(axis);
    j["text"] = text;
    if (gold_label) j["gold_label"] = *gold_label;
    j["scorer"] = to_string(scorer);
    return j;
}

DecodeParams DecodeParams::from_json(const json& j) {
    DecodeParams d;
    if (j.contains("temperature"))
        d.temperature = j.at("temperature").get<double>();
    if (d.temperature != 0.0)
        throw std::invalid_argument(
            "decode.temperature must be exactly 0.0 (got " +
            std::to_string(d.temperature) + ")");
    if (j.contains("max_tokens")) d.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("max_context"))
        d.max_context = j.at("max_context").get<int>();
    if (d.max_tokens <= 0)
        throw std::invalid_argument("decode.max_tokens must be positive");
    if (d.max_context <= 0)
        throw std::invalid_argument("decode.max_context must be positive");
    return d;
}

json DecodeParams::to_json() const {
    json j;
    j["temperature"] = temperature;
    j["max_tokens"] = max_tokens;
    j["max_context"] = max_context;
    return j;
}

ServingCondition ServingCondition::from_json(const json& j) {
    ServingCondition c;
    c.id = j.at("id").get<std::string>();
    c.kind = condition_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("concurrency"))
        c.concurrency = j.at("concurrency").get<int>();
    if (j.contains("neighbor_pool"))
        c.neighbor_pool =
            j.at("neighbor_pool").get<std::vector<std::string>>();
    if (j.contains("kernel_mode"))
        c.kernel_mode =
            kernel_mode_from_string(j.at("kernel_mode").get<std::string>());
    if (j.contains("decode")) c.decode = DecodeParams::from_json(j.at("decode"));
    if (j.contains("start_offsets_ms"))
        c.start_offsets_ms = j.at("start_offsets_ms").get<std::vector<int>>();

    if (c.batch_size <= 0)
        throw std::invalid_argument("condition " + c.id +
                                    ": batch_size must be positive");
    if (c.concurrency <= 0)
        throw std::invalid_argument("condition " + c.id +
                                    ": concurrency must be positive");
    if (c.kind == ConditionKind::sequential && c.batch_size != 1)
        throw std::invalid_argument("condition " + c.id +
                                    ": sequential requires batch_size=1");
    if (c.kind == ConditionKind::composition) {
        if (c.neighbor_pool.empty())
            throw std::invalid_argument(
                "condition " + c.id +
                ": composition requires a non-empty neighbor_pool");
        if (c.batch_size < 2)
            throw std::invalid_argument(
                "condition " + c.id + ": composition requires batch_size >= 2");
    }
    return c;
}

json ServingCondition::to_json() const {
    json j;
    j["id"] = id;
    j["kind"] = to_string(kind);
    j["batch_size"] = batch_size;
    j["concurrency"] = concurrency;
    if (!neighbor_pool.empty()) j["neighbor_pool"] = neighbor_pool;
    j["kernel_mode"] = to_string(kernel_mode);
    j["decode"] = decode.to_json();
    if (!start_offsets_ms.empty()) j["start_offsets_ms"] = start_offsets_ms;
    return j;
}

ResponseRecord ResponseRecord::from_json(const json& j) {
    ResponseRecord r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.condition_id = j.at("condition_id").get<std::string>();
    r.attempt = j.at("attempt").get<int>();
    r.raw_text = j.at("raw_text").get<std::string>();
    r.normalized_text = j.at("normalized_text").get<std::string>();
    r.t_start = j.at("t_start").get<std::int64_t>();
    r.t_end = j.at("t_end").get<std::int64_t>();
    r.transport_status =
        transport_status_from_string(j.at("transport_status").get<std::string>());
    if (j.contains("provenance"))
        r.provenance =
            j.at("provenance").get<std::map<std::string, std::string>>();
    if (j.contains("repeat")) r.repeat = j.at("repeat").get<int>();
    if (j.contains("request_tag"))
        r.request_tag = j.at("request_tag").get<std::string>();
    if (j.contains("role")) r.role = j.at("role").get<std::string>();
    if (j.contains("window_id"))
        r.window_id = j.at("window_id").get<std::string>();
    if (r.t_end < r.t_start)
        throw std::invalid_argument("record " + r.prompt_id +
                                    ": t_end < t_start");
    return r;
}

json ResponseRecord::to_json() const {
    json j;
    j["prompt_id"] = prompt_id;
    j["condition_id"] = condition_id;
    j["attempt"] = attempt;
    j["raw_text"] = raw_text;
    j["normalized_text"] = normalized_text;
    j["t_start"] = t_start;
    j["t_end"] = t_end;
    j["transport_status"] = to_string(transport_status);
    j["provenance"] = provenance;
    j["repeat"] = repeat;
    j["request_tag"] = request_tag;
    j["role"] = role;
    j["window_id"] = window_id;
    return j;
}

ScoredRow ScoredRow::from_json(const json& j) {
    ScoredRow s;
    s.prompt_id = j.at("prompt_id").get<std::string>();
    s.condition_id = j.at("condition_id").get<std::string>();
    s.label = label_from_string(j.at("label").get<std::string>());
    s.scorer_id = j.at("scorer_id").get<std::string>();
    s.text_hash = parse_hex16(j.at("text_hash").get<std::string>());
    if (j.contains("repeat")) s.repeat = j.at("repeat").get<int>();
    return s;
}

json ScoredRow::to_json() const {
    json j;
    j["prompt_id"] = prompt_id;
    j["condition_id"] = condition_id;
    j["label"] = to_string(label);
    j["scorer_id"] = scorer_id;
    j["text_hash"] = to_hex16(text_hash);
    j["repeat"] = repeat;
    return j;
}

ConditionedRow ConditionedRow::from_json(const json& j) {
    ConditionedRow r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.axis = axis_from_string(j.at("axis").get<std::string>());
    r.baseline_condition_id = j.at("baseline_condition_id").get<std::string>();
    if (j.contains("repeat")) r.repeat = j.at("repeat").get<int>();
    for (const auto& [cond, cell] : j.at("cells").items())
        r.cells.emplace(cond, ScoredRow::from_json(cell));
    if (r.cells.find(r.baseline_condition_id) == r.cells.end())
        throw std::invalid_argument("conditioned row " + r.prompt_id +
                                    ": baseline cell missing");
    return r;
}

json ConditionedRow::to_json() const {
    json cells_j = json::object();
    for (const auto& [cond, cell] : cells) cells_j[cond] = cell.to_json();
    json j;
    j["prompt_id"] = prompt_id;
    j["axis"] = to_string(axis);
    j["cells"] = cells_j;
    j["baseline_condition_id"] = baseline_condition_id;
    j["repeat"] = repeat;
    return j;
}

FlipRecord FlipRecord::from_json(const json& j) {
    FlipRecord f;
    f.prompt_id = j.at("prompt_id").get<std::string>();
    f.from_condition = j.at("from_condition").get<std::string>();
    f.to_condition = j.at("to_condition").get<std::string>();
    f.from_label = label_from_string(j.at("from_label").get<std::string>());
    f.to_label = label_from_string(j.at("to_label").get<std::string>());
    f.direction =
        flip_direction_from_string(j.at("direction").get<std::string>());
    f.text_changed = j.at("text_changed").get<bool>();
    return f;
}

json FlipRecord::to_json() const {
    json j;
    j["prompt_id"] = prompt_id;
    j["from_condition"] = from_condition;
    j["to_condition"] = to_condition;
    j["from_label"] = to_string(from_label);
    j["to_label"] = to_string(to_label);
    j["direction"] = to_string(direction);
    j["text_changed"] = text_changed;
    return j;
}

std::vector<ValidationError> validate_corpus(
    const std::vector<PromptSpec>& prompts) {
    std::vector<ValidationError> errors;
    std::set<std::string> seen;
    for (const auto& p : prompts) {
        if (p.id.empty()) errors.push_back({p.id, "empty prompt id"});
        if (!seen.insert(p.id).second)
            errors.push_back({p.id, "duplicate prompt id"});
        if (p.text.empty()) errors.push_back({p.id, "empty prompt text"});
        if (p.axis == Axis::capability && !p.gold_label)
            errors.push_back({p.id, "capability prompt without gold_label"});
        if (p.axis == Axis::safety && p.gold_label)
            errors.push_back({p.id, "safety prompt must not carry gold_label"});
        if (p.task_family == TaskFamily::custom && p.custom_family.empty())
            errors.push_back({p.id, "custom task_family without a name"});
    }
    return errors;
}

std::vector<PromptSpec> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::vector<PromptSpec> prompts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            prompts.push_back(PromptSpec::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("corpus " + path + " line " +
                                     std::to_string(lineno) + ": " + e.what());
        }
    }
    return prompts;
}

void save_corpus(const std::vector<PromptSpec>& prompts,
                 const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus: " + path);
    for (const auto& p : prompts) out << p.to_json().dump() << "\n";
}

}  // namespace batchflip
