#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "batchflip/flips.hpp"
#include "batchflip/hash.hpp"

using namespace batchflip;

namespace {

std::map<std::string, PromptSpec> two_axis_corpus(int n_safety, int n_cap) {
    std::map<std::string, PromptSpec> corpus;
    for (int i = 0; i < n_safety; ++i) {
        PromptSpec p;
        p.id = "s" + std::to_string(i);
        p.axis = Axis::safety;
        p.task_family = TaskFamily::advbench_refusal;
        p.text = "safety " + std::to_string(i);
        p.scorer = ScorerKind::refusal_pattern;
        corpus.emplace(p.id, p);
    }
    for (int i = 0; i < n_cap; ++i) {
        PromptSpec p;
        p.id = "c" + std::to_string(i);
        p.axis = Axis::capability;
        p.task_family = TaskFamily::mmlu_real;
        p.text = "cap " + std::to_string(i);
        p.gold_label = "A";
        p.scorer = ScorerKind::mcq_exact;
        corpus.emplace(p.id, p);
    }
    return corpus;
}

ScoredRow cell(const std::string& prompt, const std::string& cond, Label label,
               const std::string& text) {
    ScoredRow s;
    s.prompt_id = prompt;
    s.condition_id = cond;
    s.label = label;
    s.scorer_id = "refusal_pattern:v1";
    s.text_hash = fnv1a64(text);
    return s;
}

ConditionedRow make_row(const std::string& prompt, Axis axis,
                        std::vector<std::pair<std::string, ScoredRow>> cells,
                        const std::string& baseline) {
    ConditionedRow row;
    row.prompt_id = prompt;
    row.axis = axis;
    row.baseline_condition_id = baseline;
    for (auto& [cond, c] : cells) row.cells.emplace(cond, c);
    return row;
}

}  // namespace

TEST_CASE("pair_rows builds one row per prompt with baseline present") {
    const auto corpus = two_axis_corpus(3, 0);
    std::vector<ScoredRow> scored;
    for (int i = 0; i < 3; ++i) {
        scored.push_back(cell("s" + std::to_string(i), "base", Label::refusal, "r"));
        scored.push_back(cell("s" + std::to_string(i), "b8", Label::refusal, "r"));
    }
    const PairingResult result = pair_rows(scored, "base", corpus);
    CHECK(result.rows.size() == 3);
    CHECK(result.unpairable.empty());

    // prompt present only at the alternate condition -> unpairable
    std::vector<ScoredRow> partial = scored;
    partial.push_back(cell("s9", "b8", Label::refusal, "r"));
    // (s9 not in corpus would throw; register it)
    auto corpus2 = corpus;
    PromptSpec extra;
    extra.id = "s9";
    extra.axis = Axis::safety;
    extra.task_family = TaskFamily::advbench_refusal;
    extra.text = "x";
    corpus2.emplace("s9", extra);
    const PairingResult r2 = pair_rows(partial, "base", corpus2);
    CHECK(r2.rows.size() == 3);
    REQUIRE(r2.unpairable.size() == 1);
    CHECK(r2.unpairable[0] == "s9");

    // duplicate cell -> ambiguity error naming the prompt
    std::vector<ScoredRow> dup = scored;
    dup.push_back(cell("s0", "b8", Label::compliance, "x"));
    CHECK_THROWS_AS(pair_rows(dup, "base", corpus), AmbiguousRowsError);
    try {
        pair_rows(dup, "base", corpus);
    } catch (const AmbiguousRowsError& e) {
        REQUIRE(e.offenders().size() == 1);
        CHECK(e.offenders()[0].find("s0") == 0);
    }

    CHECK_THROWS_AS(pair_rows({scored[0]}, "base", corpus),
                    std::invalid_argument);
}

TEST_CASE("detect_flips directions and unknown exclusion") {
    // refusal -> compliance is the unsafe direction
    auto row = make_row("s0", Axis::safety,
                        {{"base", cell("s0", "base", Label::refusal, "no")},
                         {"b8", cell("s0", "b8", Label::compliance, "yes")}},
                        "base");
    auto det = detect_flips(row);
    REQUIRE(det.flips.size() == 1);
    CHECK(det.flips[0].direction == FlipDirection::unsafe_direction);
    CHECK(det.flips[0].text_changed);
    CHECK(det.text_changes.size() == 1);

    // identical labels, different hash: 0 flips, 1 text-change event
    row = make_row("s1", Axis::safety,
                   {{"base", cell("s1", "base", Label::refusal, "no way")},
                    {"b8", cell("s1", "b8", Label::refusal, "never ever")}},
                   "base");
    det = detect_flips(row);
    CHECK(det.flips.empty());
    CHECK(det.text_changes.size() == 1);

    // baseline unknown: no flips, one excluded cell
    row = make_row("s2", Axis::safety,
                   {{"base", cell("s2", "base", Label::unknown, "")},
                    {"b8", cell("s2", "b8", Label::compliance, "y")}},
                   "base");
    det = detect_flips(row);
    CHECK(det.flips.empty());
    CHECK(det.excluded_cells == 1);

    // capability flip is direction-neutral
    row = make_row("c0", Axis::capability,
                   {{"base", cell("c0", "base", Label::correct, "a")},
                    {"b8", cell("c0", "b8", Label::incorrect, "b")}},
                   "base");
    det = detect_flips(row);
    REQUIRE(det.flips.size() == 1);
    CHECK(det.flips[0].direction == FlipDirection::capability_flip);
}

TEST_CASE("flip direction is antisymmetric under baseline swap") {
    const auto a = cell("s0", "A", Label::refusal, "no");
    const auto b = cell("s0", "B", Label::compliance, "yes");
    auto forward = detect_flips(
        make_row("s0", Axis::safety, {{"A", a}, {"B", b}}, "A"));
    auto backward = detect_flips(
        make_row("s0", Axis::safety, {{"A", a}, {"B", b}}, "B"));
    REQUIRE(forward.flips.size() == 1);
    REQUIRE(backward.flips.size() == 1);
    CHECK(forward.flips[0].direction == FlipDirection::unsafe_direction);
    CHECK(backward.flips[0].direction == FlipDirection::safe_direction);
}

TEST_CASE("every label flip implies a text change") {
    // label derives from text, so a flip with equal hashes cannot happen in
    // scored data; detect_flips reports text_changed for every flip.
    const auto rows = std::vector<ConditionedRow>{
        make_row("s0", Axis::safety,
                 {{"base", cell("s0", "base", Label::refusal, "t1")},
                  {"b8", cell("s0", "b8", Label::compliance, "t2")}},
                 "base"),
        make_row("s1", Axis::safety,
                 {{"base", cell("s1", "base", Label::compliance, "t3")},
                  {"b8", cell("s1", "b8", Label::refusal, "t4")}},
                 "base")};
    const auto det = detect_flips(rows);
    for (const auto& f : det.flips) CHECK(f.text_changed);
}

TEST_CASE("identical labels in all cells yield zero flips") {
    std::vector<ConditionedRow> rows;
    for (int i = 0; i < 10; ++i)
        rows.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "same")},
             {"b4", cell("s", "b4", Label::refusal, "same")},
             {"b8", cell("s", "b8", Label::refusal, "same")}},
            "base"));
    const auto det = detect_flips(rows);
    CHECK(det.flips.empty());
    CHECK(det.text_changes.empty());
    CHECK(instability(rows) == 0.0);
}

TEST_CASE("flip_rates arithmetic and paper shapes") {
    // 2 flips over 400 pairs -> 0.5%
    std::vector<ConditionedRow> rows;
    for (int i = 0; i < 400; ++i) {
        const Label alt = i < 2 ? Label::compliance : Label::refusal;
        rows.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "a")},
             {"b8", cell("s", "b8", alt, i < 2 ? "b" : "a")}},
            "base"));
    }
    const FlipRateSummary summary = flip_rates(rows, Axis::safety);
    CHECK(summary.rate == doctest::Approx(0.005));
    CHECK(summary.numerator == 2);
    CHECK(summary.denominator == 400);

    // 22 flips over 55 rows -> 40%
    rows.clear();
    for (int i = 0; i < 55; ++i) {
        const Label alt = i < 22 ? Label::compliance : Label::refusal;
        rows.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "a")},
             {"b8", cell("s", "b8", alt, i < 22 ? "b" : "a")}},
            "base"));
    }
    CHECK(flip_rates(rows, Axis::safety).rate == doctest::Approx(0.4));

    // 0 flips over 55 rows: rate 0, CI lower bound exactly 0
    rows.clear();
    for (int i = 0; i < 55; ++i)
        rows.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "a")},
             {"b8", cell("s", "b8", Label::refusal, "a")}},
            "base"));
    const FlipRateSummary zero = flip_rates(rows, Axis::safety);
    CHECK(zero.rate == 0.0);
    CHECK(zero.wilson_ci.lo == 0.0);

    // empty axis -> explicit empty summary, no division
    const FlipRateSummary empty = flip_rates(rows, Axis::capability);
    CHECK_FALSE(empty.has_data);
    CHECK(empty.denominator == 0);
}

TEST_CASE("safety/capability ratio") {
    FlipRateSummary s, c;
    s.has_data = c.has_data = true;
    s.rate = 0.0051;
    c.rate = 0.0014;
    const auto ratio = safety_capability_ratio(s, c);
    REQUIRE(ratio.has_value());
    CHECK(*ratio == doctest::Approx(3.642857).epsilon(1e-4));

    c.rate = s.rate;
    CHECK(*safety_capability_ratio(s, c) == doctest::Approx(1.0));

    c.rate = 0.0;
    CHECK_FALSE(safety_capability_ratio(s, c).has_value());
}

TEST_CASE("direction summary matches the pooled directional analysis") {
    std::vector<FlipRecord> flips;
    for (int i = 0; i < 28; ++i) {
        FlipRecord f;
        f.direction = FlipDirection::unsafe_direction;
        flips.push_back(f);
    }
    for (int i = 0; i < 3; ++i) {
        FlipRecord f;
        f.direction = FlipDirection::safe_direction;
        flips.push_back(f);
    }
    const DirectionSummary d = direction_summary(flips);
    CHECK(d.unsafe_count == 28);
    CHECK(d.safe_count == 3);
    CHECK(d.pooled_fraction_unsafe == doctest::Approx(28.0 / 31.0));
    CHECK(d.wilson_ci.lo == doctest::Approx(0.751).epsilon(0.002));
    CHECK(d.wilson_ci.hi == doctest::Approx(0.967).epsilon(0.002));
    CHECK(d.unsafe_count + d.safe_count == 31);
    CHECK_FALSE(d.net_safe);

    // 159 safe vs 81 unsafe -> net-safe flag
    flips.clear();
    for (int i = 0; i < 81; ++i) {
        FlipRecord f;
        f.direction = FlipDirection::unsafe_direction;
        flips.push_back(f);
    }
    for (int i = 0; i < 159; ++i) {
        FlipRecord f;
        f.direction = FlipDirection::safe_direction;
        flips.push_back(f);
    }
    CHECK(direction_summary(flips).net_safe);

    // symmetric case: p = 1
    flips.clear();
    FlipRecord u, s;
    u.direction = FlipDirection::unsafe_direction;
    s.direction = FlipDirection::safe_direction;
    flips = {u, s};
    const DirectionSummary sym = direction_summary(flips);
    CHECK(sym.pooled_fraction_unsafe == doctest::Approx(0.5));
    CHECK(sym.binomial_p_two_sided == doctest::Approx(1.0));

    // zero flips -> empty summary
    CHECK_FALSE(direction_summary({}).has_data);

    // capability flips are rejected
    FlipRecord cap;
    cap.direction = FlipDirection::capability_flip;
    CHECK_THROWS_AS(direction_summary({cap}), std::invalid_argument);
}

TEST_CASE("agreement metric") {
    std::vector<ConditionedRow> rows;
    for (int i = 0; i < 10; ++i) {
        const Label alt = i < 8 ? Label::refusal : Label::compliance;
        rows.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "a")},
             {"b8", cell("s", "b8", alt, "a")}},
            "base"));
    }
    CHECK(agreement(rows, "base", "b8").fraction == doctest::Approx(0.8));
    // self-agreement is exactly 1
    CHECK(agreement(rows, "b8", "b8").fraction == 1.0);
    CHECK(agreement(rows, "base", "base").fraction == 1.0);
    CHECK_THROWS_AS(agreement(rows, "base", "nope"), std::invalid_argument);
}

TEST_CASE("instability fraction") {
    std::vector<ConditionedRow> rows;
    for (int i = 0; i < 55; ++i) {
        const std::string alt_text = i < 25 ? "changed" : "same";
        rows.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "same")},
             {"b8", cell("s", "b8", Label::refusal, alt_text)}},
            "base"));
    }
    CHECK(instability(rows) == doctest::Approx(25.0 / 55.0));

    // every row changes -> 1.0
    std::vector<ConditionedRow> all_change;
    for (int i = 0; i < 5; ++i)
        all_change.push_back(make_row(
            "s" + std::to_string(i), Axis::safety,
            {{"base", cell("s", "base", Label::refusal, "x")},
             {"b8", cell("s", "b8", Label::refusal, "y")}},
            "base"));
    CHECK(instability(all_change) == 1.0);
}

TEST_CASE("corrected rate and monotonicity") {
    FlipRateSummary raw;
    raw.has_data = true;
    raw.rate = 0.0051;
    const CorrectedRate c = corrected_rate(raw, 17, 63);
    CHECK(c.genuine_fraction == doctest::Approx(0.2698).epsilon(1e-3));
    CHECK(c.corrected_rate == doctest::Approx(0.0051 * 17.0 / 63.0));

    CHECK(corrected_rate(raw, 63, 63).corrected_rate ==
          doctest::Approx(raw.rate));
    CHECK(corrected_rate(raw, 0, 63).corrected_rate == 0.0);

    // monotone in genuine count
    double prev = -1.0;
    for (int g = 0; g <= 63; ++g) {
        const double cur = corrected_rate(raw, g, 63).corrected_rate;
        CHECK(cur >= prev);
        prev = cur;
    }
    CHECK_THROWS_AS(corrected_rate(raw, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(corrected_rate(raw, 5, 4), std::invalid_argument);
}

TEST_CASE("fragility table ordering") {
    std::vector<ModelFragilityRow> rows(3);
    rows[0].model_id = "zeta";
    rows[0].safety_flip_rate = 0.0239;
    rows[1].model_id = "alpha";
    rows[1].safety_flip_rate = 0.0;
    rows[2].model_id = "beta";
    rows[2].safety_flip_rate = 0.0239;
    const auto sorted = fragility_table(rows);
    CHECK(sorted[0].model_id == "beta");   // tie broken lexicographically
    CHECK(sorted[1].model_id == "zeta");
    CHECK(sorted[2].model_id == "alpha");  // lowest rate ranks last

    const auto single = fragility_table({rows[0]});
    CHECK(single.size() == 1);
}
