#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace batchflip::stats {

// All functions here are pure and deterministic. Tail probabilities are
// computed from in-repo series/continued-fraction implementations of the
// regularized incomplete gamma and beta functions so results match across
// platforms to well below 1e-10.

// ---- special functions ----

double lgamma_fn(double x);
double normal_cdf(double x);
// Inverse of the standard normal CDF (Wichura's AS241), |error| < 1e-13.
double normal_quantile(double p);
// Regularized lower/upper incomplete gamma P(a,x), Q(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);
// Regularized incomplete beta I_x(a,b).
double beta_inc(double a, double b, double x);
// Upper-tail probabilities.
double chi_square_sf(double x, double df);
double f_dist_sf(double x, double df1, double df2);
// log C(n,k)
double lchoose(std::int64_t n, std::int64_t k);

// ---- results ----

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct TestResult {
    std::optional<double> statistic;  // absent for exact tests
    double p_value = 1.0;
    std::optional<int> df;
    std::string method;
    bool degenerate = false;
};

struct PairedBinaryTable {
    // a = both positive, b = baseline only, c = alternate only, d = neither.
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::int64_t c = 0;
    std::int64_t d = 0;
    std::int64_t n() const { return a + b + c + d; }
};

enum class McnemarMode { exact, chi_square_cc };

struct StratumTable {
    double a = 0;
    double b = 0;
    double c = 0;
    double d = 0;
};

struct MantelHaenszelResult {
    double pooled_or = 1.0;
    TestResult test;
};

struct AnovaResult {
    double f = 0.0;
    double p_value = 1.0;
    double eta_squared = 0.0;
    int df_between = 0;
    int df_within = 0;
};

enum class ExecMode { serial, parallel };

struct BootstrapResult {
    Interval ci;
    std::int64_t redraws = 0;  // degenerate resamples that were redrawn
};

struct LeaveOneOutResult {
    double min_r = 0.0;
    double max_r = 0.0;
    int excluded = 0;  // drops that produced zero variance
};

struct MdeResult {
    double mde_pp = 0.0;  // percentage points
    bool detectable = false;
    double rejection_rate = 0.0;  // at the returned effect
};

// ---- the battery ----

Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence);

// Exact two-sided p: sum of all outcome probabilities <= P(observed k)
// (small-p method), capped at 1.
TestResult binomial_test_two_sided(std::int64_t k, std::int64_t n, double p0);

TestResult mcnemar(const PairedBinaryTable& table, McnemarMode mode);

// outcomes: one row per subject, one column per condition, entries 0/1.
TestResult cochran_q(const std::vector<std::vector<int>>& outcomes);

MantelHaenszelResult mantel_haenszel(const std::vector<StratumTable>& strata);

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

double pearson_r(std::span<const double> xs, std::span<const double> ys);

// Percentile bootstrap over seeded resamples; identical output for serial
// and parallel execution (per-resample sub-seeds derive from (seed, index)).
BootstrapResult bootstrap_ci_r(
    const std::vector<std::pair<double, double>>& pairs, int resamples,
    double confidence, std::uint64_t seed, ExecMode mode = ExecMode::serial);

LeaveOneOutResult leave_one_out_r(
    const std::vector<std::pair<double, double>>& pairs);

// Fraction of simulated paired experiments the exact McNemar test rejects at
// `alpha` when the alternate condition adds `effect` one-directional
// discordance over `baseline_flip_rate`. This simulator is the MDE
// definition.
double mcnemar_rejection_rate(std::int64_t n_pairs, double baseline_flip_rate,
                              double effect, double alpha, int simulations,
                              std::uint64_t seed,
                              ExecMode mode = ExecMode::serial);

// Smallest effect on a 0.1pp grid in [0, 50pp] whose rejection frequency
// reaches `power`. detectable=false when no grid point reaches it.
MdeResult mde_paired(std::int64_t n_pairs, double alpha, double power,
                     double baseline_flip_rate, int simulations,
                     std::uint64_t seed, ExecMode mode = ExecMode::serial);

}  // namespace batchflip::stats
