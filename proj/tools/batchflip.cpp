// batchflip: paired testing of refusal stability across serving batch
// conditions. Subcommands cover campaign execution, analysis, adjudication,
// report rendering, statistics diagnostics, the mock server, and artifact
// verification.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "batchflip/dispatch.hpp"
#include "batchflip/hash.hpp"
#include "batchflip/mock_server.hpp"
#include "batchflip/report.hpp"
#include "batchflip/stats.hpp"

namespace fs = std::filesystem;
using namespace batchflip;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitUnreachable = 3;
constexpr int kExitIncomplete = 4;

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

// --set dotted.path=value overrides on the config document.
void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set expects path=value, got '" + assignment + "'");
    std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    for (auto& c : path)
        if (c == '.') c = '/';
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // plain string
    }
    config[json::json_pointer("/" + path)] = parsed;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + std::string(e.what()));
    }
    return j;
}

struct AnalyzeArgs {
    std::string records_path;
    std::string corpus_path;
    std::string baseline;
    std::string patterns_path;
    std::string judge_url;
    std::string judge_model;
    std::string manifest_path;
    bool include_retried = false;
};

CampaignAnalysis run_analysis(const AnalyzeArgs& args) {
    const auto records = load_records(args.records_path);
    const auto corpus = load_corpus(args.corpus_path);
    AnalyzeOptions opts;
    opts.baseline_condition = args.baseline;
    if (!args.patterns_path.empty())
        opts.patterns = RefusalPatternSet::load(args.patterns_path);
    opts.exclude_retried = !args.include_retried;
    if (!args.judge_url.empty()) {
        EndpointConfig judge;
        judge.base_url = args.judge_url;
        judge.model_name =
            args.judge_model.empty() ? "judge-model" : args.judge_model;
        opts.judge_endpoint = judge;
    }
    if (!args.manifest_path.empty()) {
        const json manifest = load_json_file(args.manifest_path);
        opts.config_hash = manifest.value("config_hash", "");
        opts.seed = manifest.value("seed", std::uint64_t{0});
        opts.campaign_complete = manifest.value("complete", true);
    }
    return analyze_campaign(records, corpus, opts);
}

void print_interval(const stats::Interval& iv, int precision) {
    std::printf("%.*f %.*f\n", precision, iv.lo, precision, iv.hi);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paired batch-condition refusal robustness harness"};
    app.require_subcommand(1);

    // ---- run ----
    auto* run = app.add_subcommand("run", "execute a campaign");
    std::string run_config, run_out;
    std::uint64_t run_seed = 0;
    bool run_resume = false;
    std::vector<std::string> run_sets;
    run->add_option("--config", run_config, "campaign config JSON")->required();
    run->add_option("--out", run_out, "output directory")->required();
    run->add_option("--seed", run_seed, "campaign seed (required, no default)")
        ->required();
    run->add_flag("--resume", run_resume, "resume an interrupted campaign");
    run->add_option("--set", run_sets,
                    "override a config field, e.g. "
                    "--set conditions.0.batch_size=16");

    // ---- analyze ----
    auto* analyze = app.add_subcommand("analyze", "score records and write report.json");
    AnalyzeArgs an;
    std::string analyze_out;
    analyze->add_option("--records", an.records_path, "records JSONL")->required();
    analyze->add_option("--corpus", an.corpus_path, "corpus JSONL")->required();
    analyze->add_option("--baseline", an.baseline, "baseline condition id")->required();
    analyze->add_option("--out", analyze_out, "output directory")->required();
    analyze->add_option("--patterns", an.patterns_path, "refusal pattern set JSON");
    analyze->add_option("--judge-url", an.judge_url, "judge endpoint base URL");
    analyze->add_option("--judge-model", an.judge_model, "judge model name");
    analyze->add_option("--manifest", an.manifest_path, "campaign manifest.json");
    analyze->add_flag("--include-retried", an.include_retried,
                      "keep retried records in the analysis");

    // ---- report ----
    auto* report = app.add_subcommand("report", "render the full report artifacts");
    AnalyzeArgs rp;
    std::string report_out, report_review;
    bool report_include_text = false;
    report->add_option("--records", rp.records_path, "records JSONL")->required();
    report->add_option("--corpus", rp.corpus_path, "corpus JSONL")->required();
    report->add_option("--baseline", rp.baseline, "baseline condition id")->required();
    report->add_option("--out", report_out, "output directory")->required();
    report->add_option("--patterns", rp.patterns_path, "refusal pattern set JSON");
    report->add_option("--judge-url", rp.judge_url, "judge endpoint base URL");
    report->add_option("--judge-model", rp.judge_model, "judge model name");
    report->add_option("--manifest", rp.manifest_path, "campaign manifest.json");
    report->add_option("--adjudication", report_review,
                       "imported review file for corrected rates");
    report->add_flag("--include-text", report_include_text,
                     "include raw response text (off by default)");
    report->add_flag("--include-retried", rp.include_retried,
                     "keep retried records in the analysis");

    // ---- adjudicate-export ----
    auto* adj_export =
        app.add_subcommand("adjudicate-export", "export flip candidates for review");
    AnalyzeArgs ae;
    std::string export_path;
    adj_export->add_option("--records", ae.records_path, "records JSONL")->required();
    adj_export->add_option("--corpus", ae.corpus_path, "corpus JSONL")->required();
    adj_export->add_option("--baseline", ae.baseline, "baseline condition id")->required();
    adj_export->add_option("--out", export_path, "review file path")->required();
    adj_export->add_option("--patterns", ae.patterns_path, "pattern set JSON");
    adj_export->add_option("--manifest", ae.manifest_path, "campaign manifest.json");

    // ---- adjudicate-import ----
    auto* adj_import =
        app.add_subcommand("adjudicate-import", "import verdicts, write corrected rates");
    AnalyzeArgs ai;
    std::string import_review, import_out;
    adj_import->add_option("--review", import_review, "filled review file")->required();
    adj_import->add_option("--records", ai.records_path, "records JSONL")->required();
    adj_import->add_option("--corpus", ai.corpus_path, "corpus JSONL")->required();
    adj_import->add_option("--baseline", ai.baseline, "baseline condition id")->required();
    adj_import->add_option("--out", import_out, "output directory")->required();
    adj_import->add_option("--patterns", ai.patterns_path, "pattern set JSON");
    adj_import->add_option("--manifest", ai.manifest_path, "campaign manifest.json");

    // ---- mock-serve ----
    auto* mock = app.add_subcommand("mock-serve", "run the deterministic mock server");
    std::string mock_behavior, mock_log, mock_host = "127.0.0.1";
    int mock_port = 8099;
    mock->add_option("--behavior", mock_behavior, "behavior JSON")->required();
    mock->add_option("--port", mock_port, "listen port");
    mock->add_option("--host", mock_host, "bind address");
    mock->add_option("--log", mock_log, "request log JSONL path");

    // ---- verify ----
    auto* verify = app.add_subcommand("verify", "re-check record checksums and manifest");
    std::string verify_dir;
    verify->add_option("--dir", verify_dir, "campaign output directory")->required();

    // ---- stats ----
    auto* stats_cmd = app.add_subcommand("stats", "statistics diagnostics");
    stats_cmd->require_subcommand(1);
    int precision = 3;
    stats_cmd->add_option("--precision", precision, "printed decimal digits");

    auto* wilson = stats_cmd->add_subcommand("wilson", "Wilson score interval");
    std::int64_t w_k = 0, w_n = 0;
    double w_conf = 0.95;
    wilson->add_option("--k", w_k)->required();
    wilson->add_option("--n", w_n)->required();
    wilson->add_option("--confidence", w_conf);

    auto* binom = stats_cmd->add_subcommand("binom", "exact two-sided binomial test");
    std::int64_t b_k = 0, b_n = 0;
    double b_p0 = 0.5;
    binom->add_option("--k", b_k)->required();
    binom->add_option("--n", b_n)->required();
    binom->add_option("--p0", b_p0);

    auto* mcn = stats_cmd->add_subcommand("mcnemar", "McNemar paired test");
    std::int64_t m_a = 0, m_b = 0, m_c = 0, m_d = 0;
    std::string m_mode = "exact";
    mcn->add_option("--a", m_a);
    mcn->add_option("--b", m_b)->required();
    mcn->add_option("--c", m_c)->required();
    mcn->add_option("--d", m_d);
    mcn->add_option("--mode", m_mode, "exact|cc");

    auto* cq = stats_cmd->add_subcommand("cochranq", "Cochran's Q");
    std::vector<std::string> cq_rows;
    cq->add_option("--row", cq_rows, "subject outcomes, e.g. --row 1,0,1")
        ->required();

    auto* mh_cmd = stats_cmd->add_subcommand("mh", "Mantel-Haenszel");
    std::vector<std::string> mh_strata;
    mh_cmd->add_option("--stratum", mh_strata, "a,b,c,d per stratum")->required();

    auto* anova = stats_cmd->add_subcommand("anova", "one-way ANOVA");
    std::vector<std::string> anova_groups;
    anova->add_option("--group", anova_groups, "comma-separated samples")
        ->required();

    auto* pearson = stats_cmd->add_subcommand("pearson", "Pearson correlation");
    std::string p_x, p_y;
    pearson->add_option("--x", p_x)->required();
    pearson->add_option("--y", p_y)->required();

    auto* boot = stats_cmd->add_subcommand("bootstrap", "bootstrap CI for r");
    std::string bt_x, bt_y;
    int bt_resamples = 10000;
    double bt_conf = 0.95;
    std::uint64_t bt_seed = 0;
    bool bt_parallel = false;
    boot->add_option("--x", bt_x)->required();
    boot->add_option("--y", bt_y)->required();
    boot->add_option("--resamples", bt_resamples);
    boot->add_option("--confidence", bt_conf);
    boot->add_option("--seed", bt_seed)->required();
    boot->add_flag("--parallel", bt_parallel);

    auto* loo = stats_cmd->add_subcommand("loo", "leave-one-out r range");
    std::string loo_x, loo_y;
    loo->add_option("--x", loo_x)->required();
    loo->add_option("--y", loo_y)->required();

    auto* mde = stats_cmd->add_subcommand("mde", "simulated minimum detectable effect");
    std::int64_t mde_pairs = 0;
    double mde_alpha = 0.05, mde_power = 0.8, mde_baseline = 0.01;
    int mde_sims = 4000;
    std::uint64_t mde_seed = 0;
    bool mde_parallel = false;
    mde->add_option("--pairs", mde_pairs)->required();
    mde->add_option("--alpha", mde_alpha);
    mde->add_option("--power", mde_power);
    mde->add_option("--baseline", mde_baseline);
    mde->add_option("--sims", mde_sims);
    mde->add_option("--seed", mde_seed)->required();
    mde->add_flag("--parallel", mde_parallel);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // help/version exit 0; every parse or validation failure exits 2
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) {
            json config_json = load_json_file(run_config);
            for (const auto& s : run_sets) apply_override(config_json, s);
            CampaignConfig cfg = CampaignConfig::from_json(config_json);
            cfg.seed = run_seed;
            cfg.output_dir = run_out;
            const CampaignResult result =
                run_campaign(cfg, run_resume, &std::cerr);
            std::cerr << "campaign complete: " << result.records_written
                      << " records (" << result.failures << " failed, "
                      << result.windows_skipped << " windows resumed) -> "
                      << result.records_path << "\n";
            return kExitOk;
        }

        if (*analyze) {
            const CampaignAnalysis analysis = run_analysis(an);
            fs::create_directories(analyze_out);
            std::ofstream out(fs::path(analyze_out) / "report.json",
                              std::ios::trunc | std::ios::binary);
            out << analysis.to_json().dump(2) << "\n";
            std::cerr << "analysis written to " << analyze_out
                      << "/report.json\n";
            return analysis.campaign_complete ? kExitOk : kExitIncomplete;
        }

        if (*report) {
            const CampaignAnalysis analysis = run_analysis(rp);
            RenderOptions ropts;
            ropts.include_text = report_include_text;
            if (!report_review.empty())
                ropts.adjudication =
                    import_verdicts(report_review, analysis.config_hash);
            render_report(analysis, report_out, ropts);
            std::cerr << "report rendered to " << report_out << "\n";
            return analysis.campaign_complete ? kExitOk : kExitIncomplete;
        }

        if (*adj_export) {
            const CampaignAnalysis analysis = run_analysis(ae);
            const auto records = load_records(ae.records_path);
            std::map<std::string, PromptSpec> corpus_map;
            for (const auto& p : load_corpus(ae.corpus_path))
                corpus_map.emplace(p.id, p);
            export_candidates(analysis.flips, records, corpus_map, export_path,
                              analysis.config_hash);
            std::cerr << "exported " << analysis.flips.size()
                      << " candidates to " << export_path << "\n";
            return kExitOk;
        }

        if (*adj_import) {
            const CampaignAnalysis analysis = run_analysis(ai);
            const AdjudicationSummary adj =
                import_verdicts(import_review, analysis.config_hash);
            RenderOptions ropts;
            ropts.adjudication = adj;
            render_report(analysis, import_out, ropts);
            std::cerr << "verdicts: " << adj.genuine << " genuine, "
                      << adj.artifacts << " artifacts, " << adj.unresolved
                      << " unresolved (fraction "
                      << adj.genuine_fraction << ")\n";
            return kExitOk;
        }

        if (*mock) {
            MockServer server(MockBehavior::load(mock_behavior), mock_log);
            server.start(mock_host, mock_port);
            std::cerr << "mock server listening on " << server.base_url()
                      << " (ctrl-c to stop)\n";
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            while (!g_stop)
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            return kExitOk;
        }

        if (*verify) {
            const fs::path dir(verify_dir);
            const json manifest = load_json_file((dir / "manifest.json").string());
            const std::string records_file =
                manifest.value("records_file", "records.jsonl");
            const std::string expected = manifest.value("records_checksum", "");
            const std::string actual =
                to_hex16(hash_file((dir / records_file).string()));
            if (actual != expected) {
                std::cerr << "checksum mismatch: records file hashes to "
                          << actual << ", manifest says " << expected << "\n";
                return kExitConfig;
            }
            if (!manifest.value("complete", false)) {
                std::cerr << "manifest is marked incomplete\n";
                return kExitIncomplete;
            }
            std::cerr << "verify ok: " << manifest.value("records_written", 0)
                      << " records, checksum " << actual << "\n";
            return kExitOk;
        }

        if (*stats_cmd) {
            if (*wilson) {
                print_interval(stats::wilson_interval(w_k, w_n, w_conf),
                               precision);
            } else if (*binom) {
                std::printf("%.*g\n", precision + 4,
                            stats::binomial_test_two_sided(b_k, b_n, b_p0)
                                .p_value);
            } else if (*mcn) {
                stats::PairedBinaryTable table{m_a, m_b, m_c, m_d};
                const auto mode = m_mode == "cc"
                                      ? stats::McnemarMode::chi_square_cc
                                      : stats::McnemarMode::exact;
                const auto t = stats::mcnemar(table, mode);
                if (t.statistic)
                    std::printf("statistic %.*f p %.*g\n", precision,
                                *t.statistic, precision + 4, t.p_value);
                else
                    std::printf("p %.*g\n", precision + 4, t.p_value);
            } else if (*cq) {
                std::vector<std::vector<int>> matrix;
                for (const auto& row : cq_rows) {
                    std::vector<int> r;
                    for (double v : parse_doubles(row))
                        r.push_back(static_cast<int>(v));
                    matrix.push_back(std::move(r));
                }
                const auto t = stats::cochran_q(matrix);
                std::printf("Q %.*f df %d p %.*g\n", precision,
                            t.statistic ? *t.statistic : 0.0,
                            t.df ? *t.df : 0, precision + 4, t.p_value);
            } else if (*mh_cmd) {
                std::vector<stats::StratumTable> strata;
                for (const auto& s : mh_strata) {
                    const auto v = parse_doubles(s);
                    if (v.size() != 4)
                        throw ConfigError("--stratum expects a,b,c,d");
                    strata.push_back({v[0], v[1], v[2], v[3]});
                }
                const auto r = stats::mantel_haenszel(strata);
                std::printf("pooled_or %.*f p %.*g\n", precision, r.pooled_or,
                            precision + 4, r.test.p_value);
            } else if (*anova) {
                std::vector<std::vector<double>> groups;
                for (const auto& g : anova_groups)
                    groups.push_back(parse_doubles(g));
                const auto r = stats::anova_oneway(groups);
                std::printf("F %.*f p %.*g eta2 %.*f\n", precision, r.f,
                            precision + 4, r.p_value, precision + 2,
                            r.eta_squared);
            } else if (*pearson) {
                const auto xs = parse_doubles(p_x);
                const auto ys = parse_doubles(p_y);
                std::printf("%.*f\n", precision + 3,
                            stats::pearson_r(xs, ys));
            } else if (*boot) {
                const auto xs = parse_doubles(bt_x);
                const auto ys = parse_doubles(bt_y);
                if (xs.size() != ys.size())
                    throw ConfigError("--x and --y lengths differ");
                std::vector<std::pair<double, double>> pairs;
                for (std::size_t i = 0; i < xs.size(); ++i)
                    pairs.emplace_back(xs[i], ys[i]);
                const auto r = stats::bootstrap_ci_r(
                    pairs, bt_resamples, bt_conf, bt_seed,
                    bt_parallel ? stats::ExecMode::parallel
                                : stats::ExecMode::serial);
                print_interval(r.ci, precision);
            } else if (*loo) {
                const auto xs = parse_doubles(loo_x);
                const auto ys = parse_doubles(loo_y);
                std::vector<std::pair<double, double>> pairs;
                for (std::size_t i = 0; i < xs.size(); ++i)
                    pairs.emplace_back(xs[i], ys[i]);
                const auto r = stats::leave_one_out_r(pairs);
                std::printf("%.*f %.*f\n", precision, r.min_r, precision,
                            r.max_r);
            } else if (*mde) {
                const auto r = stats::mde_paired(
                    mde_pairs, mde_alpha, mde_power, mde_baseline, mde_sims,
                    mde_seed,
                    mde_parallel ? stats::ExecMode::parallel
                                 : stats::ExecMode::serial);
                if (r.detectable)
                    std::printf("mde_pp %.1f rejection_rate %.*f\n", r.mde_pp,
                                precision, r.rejection_rate);
                else
                    std::printf("not detectable at any tested effect\n");
            }
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EndpointUnreachable& e) {
        std::cerr << "endpoint error: " << e.what() << "\n";
        return kExitUnreachable;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const VerdictParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
