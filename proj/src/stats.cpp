#include "batchflip/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "batchflip/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace batchflip::stats {

namespace {

constexpr double kEps = 1e-16;
constexpr double kFpMin = 1e-300;
constexpr int kMaxIter = 500;

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument(msg);
}

}  // namespace

// Lanczos approximation (g = 7, 9 terms). Implemented in-repo so results do
// not depend on the platform's libm.
double lgamma_fn(double x) {
    static const double coef[9] = {
        0.99999999999980993,      676.5203681218851,   -1259.1392167224028,
        771.32342877765313,       -176.61502916214059, 12.507343278686905,
        -0.13857109526572012,     9.9843695780195716e-6,
        1.5056327351493116e-7};
    if (std::isnan(x)) return x;
    if (x < 0.5) {
        // Reflection; only hit for arguments we never produce from counts.
        return std::log(M_PI / std::sin(M_PI * x)) - lgamma_fn(1.0 - x);
    }
    const double xm1 = x - 1.0;
    double a = coef[0];
    for (int i = 1; i < 9; ++i) a += coef[i] / (xm1 + i);
    const double t = xm1 + 7.5;
    return 0.5 * std::log(2.0 * M_PI) + (xm1 + 0.5) * std::log(t) - t +
           std::log(a);
}

namespace {

// Series for the regularized lower incomplete gamma, x < a+1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lgamma_fn(a));
}

// Continued fraction (modified Lentz) for the regularized upper incomplete
// gamma, x >= a+1.
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - lgamma_fn(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (a <= 0.0) fail("gamma_p: a must be > 0");
    if (x < 0.0) fail("gamma_p: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (a <= 0.0) fail("gamma_q: a must be > 0");
    if (x < 0.0) fail("gamma_q: x must be >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

namespace {

double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double beta_inc(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) fail("beta_inc: a, b must be > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(lgamma_fn(a + b) - lgamma_fn(a) -
                               lgamma_fn(b) + a * std::log(x) +
                               b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double chi_square_sf(double x, double df) {
    if (df <= 0.0) fail("chi_square_sf: df must be > 0");
    if (x <= 0.0) return 1.0;
    return gamma_q(df / 2.0, x / 2.0);
}

double f_dist_sf(double x, double df1, double df2) {
    if (df1 <= 0.0 || df2 <= 0.0) fail("f_dist_sf: df must be > 0");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return beta_inc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x));
}

double normal_cdf(double x) {
    if (x == 0.0) return 0.5;
    const double half_tail = 0.5 * gamma_q(0.5, x * x / 2.0);
    return x > 0.0 ? 1.0 - half_tail : half_tail;
}

// Wichura's algorithm AS 241 (PPND16).
double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) fail("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) *
                      r + 6.7265770927008700853e4) *
                     r + 4.5921953931549871457e4) *
                    r + 1.3731693765509461125e4) *
                   r + 1.9715909503065514427e3) *
                  r + 1.3314166789178437745e2) *
                 r + 3.3871328727963666080e0);
        const double den =
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) *
                      r + 3.9307895800092710610e4) *
                     r + 2.1213794301586595867e4) *
                    r + 5.3941960214247511077e3) *
                   r + 6.8718700749205790830e2) *
                  r + 4.2313330701600911252e1) *
                 r + 1.0);
        return q * num / den;
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r +
                   2.27238449892691845833e-2) *
                      r + 2.41780725177450611770e-1) *
                     r + 1.27045825245236838258e0) *
                    r + 3.64784832476320460504e0) *
                   r + 5.76949722146069140550e0) *
                  r + 4.63033784615654529590e0) *
                 r + 1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r +
                   5.47593808499534494600e-4) *
                      r + 1.51986665636164571966e-2) *
                     r + 1.48103976427480074590e-1) *
                    r + 6.89767334985100004550e-1) *
                   r + 1.67638483018380384940e0) *
                  r + 2.05319162663775882187e0) *
                 r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r +
                   2.71155556874348757815e-5) *
                      r + 1.24266094738807843860e-3) *
                     r + 2.65321895265761230930e-2) *
                    r + 2.96560571828504891230e-1) *
                   r + 1.78482653991729133580e0) *
                  r + 5.46378491116411436990e0) *
                 r + 6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r +
                   1.42151175831644588870e-7) *
                      r + 1.84631831751005468180e-5) *
                     r + 7.86869131145613259100e-4) *
                    r + 1.48753612908506148525e-2) *
                   r + 1.36929880922735805310e-1) *
                  r + 5.99832206555887937690e-1) *
                 r + 1.0);
        val = num / den;
    }
    return q < 0.0 ? -val : val;
}

double lchoose(std::int64_t n, std::int64_t k) {
    if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
    return lgamma_fn(static_cast<double>(n) + 1.0) -
           lgamma_fn(static_cast<double>(k) + 1.0) -
           lgamma_fn(static_cast<double>(n - k) + 1.0);
}

Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence) {
    if (n <= 0) fail("wilson_interval: n must be > 0");
    if (k < 0 || k > n) fail("wilson_interval: k must be in [0, n]");
    if (!(confidence > 0.0 && confidence < 1.0))
        fail("wilson_interval: confidence must be in (0,1)");
    const double z = normal_quantile(0.5 + confidence / 2.0);
    const double nn = static_cast<double>(n);
    const double phat = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (phat + z2 / (2.0 * nn)) / denom;
    const double half =
        (z / denom) *
        std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn));
    Interval iv{center - half, center + half};
    iv.lo = std::max(0.0, iv.lo);
    iv.hi = std::min(1.0, iv.hi);
    if (k == 0) iv.lo = 0.0;
    if (k == n) iv.hi = 1.0;
    return iv;
}

TestResult binomial_test_two_sided(std::int64_t k, std::int64_t n, double p0) {
    if (n <= 0) fail("binomial_test: n must be > 0");
    if (k < 0 || k > n) fail("binomial_test: k must be in [0, n]");
    if (!(p0 >= 0.0 && p0 <= 1.0)) fail("binomial_test: p0 must be in [0,1]");

    TestResult out;
    out.method = "binomial-exact-two-sided";
    out.df = std::nullopt;
    if (p0 == 0.0) {
        out.p_value = (k == 0) ? 1.0 : 0.0;
        return out;
    }
    if (p0 == 1.0) {
        out.p_value = (k == n) ? 1.0 : 0.0;
        return out;
    }

    double p = 0.0;
    if (n <= 55) {
        // Binomial coefficients are exact in double up to n = 55; this path
        // matches brute-force enumeration to the last bit or near it.
        std::vector<double> choose(static_cast<std::size_t>(n) + 1);
        choose[0] = 1.0;
        for (std::int64_t j = 1; j <= n; ++j)
            choose[static_cast<std::size_t>(j)] =
                choose[static_cast<std::size_t>(j - 1)] *
                static_cast<double>(n - j + 1) / static_cast<double>(j);
        std::vector<double> prob(static_cast<std::size_t>(n) + 1);
        for (std::int64_t j = 0; j <= n; ++j)
            prob[static_cast<std::size_t>(j)] =
                choose[static_cast<std::size_t>(j)] *
                std::pow(p0, static_cast<double>(j)) *
                std::pow(1.0 - p0, static_cast<double>(n - j));
        const double cutoff = prob[static_cast<std::size_t>(k)] * (1.0 + 1e-7);
        for (std::int64_t j = 0; j <= n; ++j)
            if (prob[static_cast<std::size_t>(j)] <= cutoff)
                p += prob[static_cast<std::size_t>(j)];
    } else {
        const double logp = std::log(p0);
        const double log1mp = std::log1p(-p0);
        const double lgn = lgamma_fn(static_cast<double>(n) + 1.0);
        auto logprob = [&](std::int64_t j) {
            return lgn - lgamma_fn(static_cast<double>(j) + 1.0) -
                   lgamma_fn(static_cast<double>(n - j) + 1.0) +
                   static_cast<double>(j) * logp +
                   static_cast<double>(n - j) * log1mp;
        };
        const double cutoff = logprob(k) + 1e-7;
        for (std::int64_t j = 0; j <= n; ++j) {
            const double lp = logprob(j);
            if (lp <= cutoff) p += std::exp(lp);
        }
    }
    out.p_value = std::min(1.0, p);
    return out;
}

TestResult mcnemar(const PairedBinaryTable& table, McnemarMode mode) {
    if (table.a < 0 || table.b < 0 || table.c < 0 || table.d < 0)
        fail("mcnemar: counts must be non-negative");
    if (table.n() <= 0) fail("mcnemar: empty table");
    const std::int64_t b = table.b;
    const std::int64_t c = table.c;
    const std::int64_t m = b + c;
    if (mode == McnemarMode::exact) {
        TestResult out;
        out.method = "mcnemar-exact";
        if (m == 0) {
            out.p_value = 1.0;
            out.degenerate = true;
            return out;
        }
        out = binomial_test_two_sided(b, m, 0.5);
        out.method = "mcnemar-exact";
        return out;
    }
    TestResult out;
    out.method = "mcnemar-chi-square-cc";
    out.df = 1;
    if (m == 0) {
        out.statistic = 0.0;
        out.p_value = 1.0;
        out.degenerate = true;
        return out;
    }
    const double diff = std::fabs(static_cast<double>(b - c)) - 1.0;
    const double stat = diff * diff / static_cast<double>(m);
    out.statistic = stat;
    out.p_value = chi_square_sf(stat, 1.0);
    return out;
}

TestResult cochran_q(const std::vector<std::vector<int>>& outcomes) {
    if (outcomes.empty()) fail("cochran_q: no subjects");
    const std::size_t L = outcomes.front().size();
    if (L < 2) fail("cochran_q: need >= 2 conditions");
    for (const auto& row : outcomes) {
        if (row.size() != L) fail("cochran_q: matrix is not rectangular");
        for (int v : row)
            if (v != 0 && v != 1) fail("cochran_q: entries must be 0/1");
    }
    std::vector<double> col_sums(L, 0.0);
    double total = 0.0;
    double row_sq = 0.0;
    for (const auto& row : outcomes) {
        double r = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
            col_sums[j] += row[j];
            r += row[j];
        }
        total += r;
        row_sq += r * r;
    }
    const double Ld = static_cast<double>(L);
    const double denom = Ld * total - row_sq;
    TestResult out;
    out.method = "cochran-q";
    out.df = static_cast<int>(L) - 1;
    if (denom == 0.0) {
        out.statistic = 0.0;
        out.p_value = 1.0;
        out.degenerate = true;
        return out;
    }
    const double cbar = total / Ld;
    double ss = 0.0;
    for (double cj : col_sums) ss += (cj - cbar) * (cj - cbar);
    const double q = Ld * (Ld - 1.0) * ss / denom;
    out.statistic = q;
    out.p_value = chi_square_sf(q, Ld - 1.0);
    return out;
}

MantelHaenszelResult mantel_haenszel(const std::vector<StratumTable>& strata) {
    if (strata.empty()) fail("mantel_haenszel: no strata");
    double or_num = 0.0;
    double or_den = 0.0;
    double sum_a = 0.0;
    double sum_e = 0.0;
    double sum_v = 0.0;
    int usable = 0;
    for (const auto& s : strata) {
        if (s.a < 0 || s.b < 0 || s.c < 0 || s.d < 0)
            fail("mantel_haenszel: counts must be non-negative");
        double a = s.a, b = s.b, c = s.c, d = s.d;
        if (a == 0 || b == 0 || c == 0 || d == 0) {
            a += 0.5;
            b += 0.5;
            c += 0.5;
            d += 0.5;
        }
        const double n_adj = a + b + c + d;
        or_num += a * d / n_adj;
        or_den += b * c / n_adj;

        const double n = s.a + s.b + s.c + s.d;
        if (n < 2) continue;
        const double v = (s.a + s.b) * (s.c + s.d) * (s.a + s.c) *
                         (s.b + s.d) / (n * n * (n - 1.0));
        if (v == 0.0) continue;
        sum_a += s.a;
        sum_e += (s.a + s.b) * (s.a + s.c) / n;
        sum_v += v;
        ++usable;
    }
    if (usable == 0) fail("mantel_haenszel: all strata degenerate");
    MantelHaenszelResult out;
    out.pooled_or = or_num / or_den;
    const double diff = std::max(0.0, std::fabs(sum_a - sum_e) - 0.5);
    const double stat = diff * diff / sum_v;
    out.test.statistic = stat;
    out.test.df = 1;
    out.test.method = "mantel-haenszel-cc";
    out.test.p_value = chi_square_sf(stat, 1.0);
    return out;
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) fail("anova_oneway: need >= 2 groups");
    std::size_t total_n = 0;
    for (const auto& g : groups) {
        if (g.empty()) fail("anova_oneway: empty group");
        total_n += g.size();
    }
    const int df_between = static_cast<int>(groups.size()) - 1;
    const int df_within = static_cast<int>(total_n - groups.size());
    if (df_within < 1) fail("anova_oneway: df_within must be >= 1");

    AnovaResult out;
    out.df_between = df_between;
    out.df_within = df_within;

    bool all_identical = true;
    const double first = groups.front().front();
    for (const auto& g : groups)
        for (double v : g)
            if (v != first) all_identical = false;
    if (all_identical) {
        out.f = 0.0;
        out.p_value = 1.0;
        out.eta_squared = 0.0;
        return out;
    }

    double grand = 0.0;
    for (const auto& g : groups)
        for (double v : g) grand += v;
    grand /= static_cast<double>(total_n);

    double ss_between = 0.0;
    double ss_within = 0.0;
    for (const auto& g : groups) {
        double m = 0.0;
        for (double v : g) m += v;
        m /= static_cast<double>(g.size());
        ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) ss_within += (v - m) * (v - m);
    }
    const double ss_total = ss_between + ss_within;
    out.eta_squared = ss_total > 0.0 ? ss_between / ss_total : 0.0;
    if (ss_between == 0.0) {
        out.f = 0.0;
        out.p_value = 1.0;
        return out;
    }
    if (ss_within == 0.0) {
        out.f = std::numeric_limits<double>::infinity();
        out.p_value = 0.0;
        return out;
    }
    out.f = (ss_between / df_between) / (ss_within / df_within);
    out.p_value = f_dist_sf(out.f, df_between, df_within);
    return out;
}

namespace {

// Exact collinearity detection through cross products. For
// exactly-representable inputs (integer-valued fixtures and the like) the
// differences and products below are exact, so perfectly linear data is
// recognized without any tolerance and r comes out as exactly +/-1.
// Returns 0 when not (provably) collinear.
int collinear_sign(std::span<const double> xs, std::span<const double> ys) {
    const double x0 = xs[0];
    const double y0 = ys[0];
    double dx = 0.0, dy = 0.0;
    bool found = false;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] != x0 || ys[i] != y0) {
            dx = xs[i] - x0;
            dy = ys[i] - y0;
            found = true;
            break;
        }
    }
    if (!found || dx == 0.0 || dy == 0.0) return 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double lhs = (xs[i] - x0) * dy;
        const double rhs = (ys[i] - y0) * dx;
        if (!std::isfinite(lhs) || !std::isfinite(rhs) || lhs != rhs) return 0;
    }
    return ((dy > 0.0) == (dx > 0.0)) ? 1 : -1;
}

}  // namespace

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) fail("pearson_r: length mismatch");
    if (xs.size() < 2) fail("pearson_r: need >= 2 points");
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        fail("pearson_r: zero variance, correlation undefined");
    if (const int sign = collinear_sign(xs, ys); sign != 0)
        return static_cast<double>(sign);
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

namespace {

struct PairsView {
    const std::vector<std::pair<double, double>>& pairs;
};

// r over a resample given by indices; returns false when degenerate.
bool resample_r(const std::vector<std::pair<double, double>>& pairs,
                const std::vector<std::size_t>& idx, std::vector<double>& xbuf,
                std::vector<double>& ybuf, double* r_out) {
    const std::size_t n = idx.size();
    for (std::size_t k = 0; k < n; ++k) {
        xbuf[k] = pairs[idx[k]].first;
        ybuf[k] = pairs[idx[k]].second;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += xbuf[k];
        my += ybuf[k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = xbuf[k] - mx;
        const double dy = ybuf[k] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return false;
    if (const int sign = collinear_sign(xbuf, ybuf); sign != 0) {
        *r_out = static_cast<double>(sign);
        return true;
    }
    *r_out = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    return true;
}

double percentile_type7(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    const double h = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

BootstrapResult bootstrap_ci_r(
    const std::vector<std::pair<double, double>>& pairs, int resamples,
    double confidence, std::uint64_t seed, ExecMode mode) {
    if (pairs.size() < 3) fail("bootstrap_ci_r: need >= 3 pairs");
    if (resamples < 1000) fail("bootstrap_ci_r: need >= 1000 resamples");
    if (!(confidence > 0.0 && confidence < 1.0))
        fail("bootstrap_ci_r: confidence must be in (0,1)");
    bool x_varies = false, y_varies = false;
    for (const auto& p : pairs) {
        if (p.first != pairs.front().first) x_varies = true;
        if (p.second != pairs.front().second) y_varies = true;
    }
    if (!x_varies || !y_varies)
        fail("bootstrap_ci_r: pairs can never achieve variance");

    const std::size_t n = pairs.size();
    const int B = resamples;
    std::vector<double> rs(static_cast<std::size_t>(B), 0.0);
    std::atomic<std::int64_t> redraws{0};
    std::atomic<bool> exhausted{false};

    auto run_one = [&](int i) {
        Xoshiro256ss rng(sub_seed(seed, static_cast<std::uint64_t>(i)));
        std::vector<std::size_t> idx(n);
        std::vector<double> xbuf(n), ybuf(n);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            for (std::size_t j = 0; j < n; ++j)
                idx[j] = static_cast<std::size_t>(rng.bounded(n));
            double r;
            if (resample_r(pairs, idx, xbuf, ybuf, &r)) {
                rs[static_cast<std::size_t>(i)] = r;
                if (attempt > 0) redraws += attempt;
                return;
            }
        }
        exhausted = true;
    };

    if (mode == ExecMode::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int i = 0; i < B; ++i) run_one(i);
    } else {
        for (int i = 0; i < B; ++i) run_one(i);
    }
    if (exhausted)
        throw std::runtime_error("bootstrap_ci_r: resample redraw limit hit");

    std::vector<double> sorted = rs;
    std::sort(sorted.begin(), sorted.end());
    const double q_lo = (1.0 - confidence) / 2.0;
    BootstrapResult out;
    out.ci.lo = percentile_type7(sorted, q_lo);
    out.ci.hi = percentile_type7(sorted, 1.0 - q_lo);
    out.redraws = redraws.load();
    return out;
}

LeaveOneOutResult leave_one_out_r(
    const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 4) fail("leave_one_out_r: need >= 4 pairs");
    LeaveOneOutResult out;
    out.min_r = std::numeric_limits<double>::infinity();
    out.max_r = -std::numeric_limits<double>::infinity();
    std::vector<double> xs(pairs.size() - 1), ys(pairs.size() - 1);
    for (std::size_t drop = 0; drop < pairs.size(); ++drop) {
        std::size_t w = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (i == drop) continue;
            xs[w] = pairs[i].first;
            ys[w] = pairs[i].second;
            ++w;
        }
        try {
            const double r = pearson_r(xs, ys);
            out.min_r = std::min(out.min_r, r);
            out.max_r = std::max(out.max_r, r);
        } catch (const std::invalid_argument&) {
            ++out.excluded;
        }
    }
    if (!std::isfinite(out.min_r))
        throw std::runtime_error("leave_one_out_r: every drop degenerate");
    return out;
}

double mcnemar_rejection_rate(std::int64_t n_pairs, double baseline_flip_rate,
                              double effect, double alpha, int simulations,
                              std::uint64_t seed, ExecMode mode) {
    if (n_pairs < 1) fail("mcnemar_rejection_rate: n_pairs must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        fail("mcnemar_rejection_rate: alpha must be in (0,1)");
    if (baseline_flip_rate < 0.0 || effect < 0.0 ||
        2.0 * baseline_flip_rate + effect > 1.0)
        fail("mcnemar_rejection_rate: probabilities exceed 1");
    if (simulations < 1) fail("mcnemar_rejection_rate: simulations >= 1");

    const double q = baseline_flip_rate;
    const double t1 = q;
    const double t2 = 2.0 * q;
    const double t3 = 2.0 * q + effect;

    auto simulate = [&](int s) -> int {
        Xoshiro256ss rng(sub_seed(seed, static_cast<std::uint64_t>(s)));
        std::int64_t b = 0, c = 0;
        for (std::int64_t i = 0; i < n_pairs; ++i) {
            const double u = rng.next_double();
            if (u < t1)
                ++b;
            else if (u < t2)
                ++c;
            else if (u < t3)
                ++c;
        }
        if (b + c == 0) return 0;
        const TestResult t = binomial_test_two_sided(b, b + c, 0.5);
        return t.p_value <= alpha ? 1 : 0;
    };

    std::int64_t rejections = 0;
    if (mode == ExecMode::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : rejections)
#endif
        for (int s = 0; s < simulations; ++s) rejections += simulate(s);
    } else {
        for (int s = 0; s < simulations; ++s) rejections += simulate(s);
    }
    return static_cast<double>(rejections) / static_cast<double>(simulations);
}

MdeResult mde_paired(std::int64_t n_pairs, double alpha, double power,
                     double baseline_flip_rate, int simulations,
                     std::uint64_t seed, ExecMode mode) {
    if (!(alpha > 0.0 && alpha < 1.0)) fail("mde_paired: alpha in (0,1)");
    if (!(power > 0.0 && power < 1.0)) fail("mde_paired: power in (0,1)");
    if (simulations < 2000) fail("mde_paired: need >= 2000 simulations");

    MdeResult out;
    // 0.1pp grid over [0, 50pp].
    for (int step = 0; step <= 500; ++step) {
        const double delta = static_cast<double>(step) / 1000.0;
        if (2.0 * baseline_flip_rate + delta > 1.0) break;
        const double rate = mcnemar_rejection_rate(
            n_pairs, baseline_flip_rate, delta, alpha, simulations,
            sub_seed(seed, static_cast<std::uint64_t>(step)), mode);
        if (rate >= power) {
            out.mde_pp = delta * 100.0;
            out.detectable = true;
            out.rejection_rate = rate;
            return out;
        }
        out.rejection_rate = rate;
    }
    out.detectable = false;
    return out;
}

}  // namespace batchflip::stats
