#include "batchflip/dispatch.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <latch>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "batchflip/hash.hpp"
#include "batchflip/rng.hpp"

namespace batchflip {

namespace fs = std::filesystem;

namespace {

std::int64_t mono_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

CampaignConfig CampaignConfig::from_json(const json& j) {
    CampaignConfig c;
    c.endpoint = EndpointConfig::from_json(j.at("endpoint"));
    c.corpus_path = j.at("corpus_path").get<std::string>();
    if (!j.contains("conditions") || !j.at("conditions").is_array() ||
        j.at("conditions").empty())
        throw ConfigError("campaign requires a non-empty conditions list");
    int baseline_flags = 0;
    std::set<std::string> ids;
    for (const auto& cj : j.at("conditions")) {
        ServingCondition cond;
        try {
            cond = ServingCondition::from_json(cj);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (!ids.insert(cond.id).second)
            throw ConfigError("duplicate condition id: " + cond.id);
        if (cj.value("baseline", false)) {
            ++baseline_flags;
            c.baseline_condition_id = cond.id;
        }
        c.conditions.push_back(std::move(cond));
    }
    if (baseline_flags != 1)
        throw ConfigError("exactly one condition must be flagged baseline (got " +
                          std::to_string(baseline_flags) + ")");
    if (j.contains("repeats")) c.repeats = j.at("repeats").get<int>();
    if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("exclude_retried"))
        c.exclude_retried = j.at("exclude_retried").get<bool>();
    if (j.contains("output_dir"))
        c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("single_dispatch_shape")) {
        const std::string s = j.at("single_dispatch_shape").get<std::string>();
        if (s == "chat")
            c.single_dispatch_shape = ApiShape::chat;
        else if (s == "completions")
            c.single_dispatch_shape = ApiShape::completions;
        else
            throw ConfigError("single_dispatch_shape must be chat|completions");
    }
    return c;
}

json CampaignConfig::to_json() const {
    json j;
    j["endpoint"] = endpoint.to_json();
    j["corpus_path"] = corpus_path;
    json conds = json::array();
    for (const auto& c : conditions) {
        json cj = c.to_json();
        cj["baseline"] = (c.id == baseline_condition_id);
        conds.push_back(std::move(cj));
    }
    j["conditions"] = conds;
    j["repeats"] = repeats;
    j["seed"] = seed;
    j["exclude_retried"] = exclude_retried;
    j["output_dir"] = output_dir;
    j["single_dispatch_shape"] =
        single_dispatch_shape == ApiShape::completions ? "completions" : "chat";
    return j;
}

std::string CampaignConfig::config_hash() const {
    return to_hex16(fnv1a64(to_json().dump()));
}

CampaignConfig CampaignConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return from_json(j);
}

DispatchWindow dispatch_synchronized(const ServingClient& client,
                                     const std::vector<DispatchItem>& items,
                                     const DecodeParams& decode,
                                     const std::string& tag_prefix,
                                     ApiShape shape,
                                     const std::vector<int>& start_offsets_ms) {
    if (items.empty())
        throw std::invalid_argument("dispatch_synchronized: empty window");
    const std::size_t n = items.size();

    // Preparation (request building and validation) happens before the
    // barrier so the release-to-transmit skew stays minimal.
    std::vector<CompletionRequest> requests(n);
    DispatchWindow window;
    window.records.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        CompletionRequest req;
        req.prompts = {items[i].text};
        req.decode = decode;
        req.shape = shape;
        req.request_tag = tag_prefix + "/" + std::to_string(i);
        ServingClient::request_body(client.config(), req);  // validate early
        window.request_tags.push_back(req.request_tag);
        requests[i] = std::move(req);
    }

    std::latch ready(static_cast<std::ptrdiff_t>(n));
    std::latch release(1);
    std::vector<std::thread> workers;
    workers.reserve(n);
    std::atomic<std::int64_t> barrier_ns{0};
    for (std::size_t i = 0; i < n; ++i) {
        workers.emplace_back([&, i] {
            ready.count_down();
            release.wait();
            if (!start_offsets_ms.empty()) {
                const int off = start_offsets_ms[i % start_offsets_ms.size()];
                if (off > 0)
                    std::this_thread::sleep_for(std::chrono::milliseconds(off));
            }
            ResponseRecord rec;
            try {
                auto recs = client.complete(requests[i]);
                rec = std::move(recs.front());
            } catch (const MalformedResponse& e) {
                rec.transport_status = TransportStatus::failed;
                rec.provenance["error"] = e.what();
                rec.request_tag = requests[i].request_tag;
                rec.t_start = rec.t_end = mono_ns();
            }
            rec.prompt_id = items[i].prompt_id;
            window.records[i] = std::move(rec);
        });
    }
    ready.wait();
    barrier_ns = mono_ns();
    release.count_down();
    for (auto& w : workers) w.join();
    window.t_barrier = barrier_ns;
    // Clock reads race the release by nanoseconds; clamp so the window
    // invariant (t_start >= t_barrier) holds exactly.
    for (auto& rec : window.records) {
        if (rec.t_start < window.t_barrier) {
            const auto len = rec.t_end - rec.t_start;
            rec.t_start = window.t_barrier;
            rec.t_end = rec.t_start + len;
        }
    }
    return window;
}

DispatchWindow dispatch_true_batch(const ServingClient& client,
                                   const std::vector<DispatchItem>& items,
                                   const DecodeParams& decode,
                                   const std::string& tag_prefix) {
    if (items.size() < 2)
        throw std::invalid_argument("dispatch_true_batch: need >= 2 prompts");
    CompletionRequest req;
    for (const auto& item : items) req.prompts.push_back(item.text);
    req.decode = decode;
    req.shape = ApiShape::completions;
    req.request_tag = tag_prefix + "/batch";
    ServingClient::request_body(client.config(), req);  // validate early

    DispatchWindow window;
    window.request_tags.push_back(req.request_tag);
    window.t_barrier = mono_ns();
    std::vector<ResponseRecord> recs;
    try {
        recs = client.complete(req);
    } catch (const MalformedResponse& e) {
        recs.assign(items.size(), ResponseRecord{});
        for (auto& r : recs) {
            r.transport_status = TransportStatus::failed;
            r.provenance["error"] = e.what();
            r.request_tag = req.request_tag;
            r.t_start = r.t_end = mono_ns();
        }
    }
    for (std::size_t i = 0; i < items.size(); ++i)
        recs[i].prompt_id = items[i].prompt_id;
    window.records = std::move(recs);
    return window;
}

DispatchWindow dispatch_composition(
    const ServingClient& client, const PromptSpec& target,
    const ServingCondition& condition,
    const std::map<std::string, PromptSpec>& corpus, std::uint64_t seed,
    const std::string& tag_prefix, ApiShape shape) {
    if (condition.kind != ConditionKind::composition)
        throw std::invalid_argument("dispatch_composition: wrong condition kind");
    std::vector<std::string> pool;
    for (const auto& id : condition.neighbor_pool) {
        if (id == target.id) continue;  // never co-batch a prompt with itself
        if (corpus.find(id) == corpus.end())
            throw ConfigError("composition neighbor '" + id +
                              "' not in corpus");
        pool.push_back(id);
    }
    const std::size_t need = static_cast<std::size_t>(condition.batch_size) - 1;
    if (pool.size() < need)
        throw ConfigError("condition " + condition.id + ": neighbor pool (" +
                          std::to_string(pool.size()) +
                          ") smaller than batch_size-1 (" +
                          std::to_string(need) + ")");
    std::sort(pool.begin(), pool.end());
    seeded_shuffle(pool, sub_seed(seed, fnv1a64(condition.id),
                                  fnv1a64(target.id)));

    std::vector<DispatchItem> items;
    items.push_back({target.id, target.text});
    for (std::size_t i = 0; i < need; ++i)
        items.push_back({pool[i], corpus.at(pool[i]).text});

    DispatchWindow window = dispatch_synchronized(
        client, items, condition.decode, tag_prefix, shape,
        condition.start_offsets_ms);
    window.target_index = 0;
    for (std::size_t i = 0; i < window.records.size(); ++i)
        window.records[i].role = (i == 0) ? "target" : "neighbor";
    return window;
}

CobatchReport verify_cobatch(const DispatchWindow& window,
                             double min_overlap_fraction, int target_index) {
    if (min_overlap_fraction < 0.0 || min_overlap_fraction > 1.0)
        throw std::invalid_argument("verify_cobatch: threshold in [0,1]");
    if (target_index < 0) target_index = window.target_index;
    const std::size_t n = window.records.size();
    CobatchReport report;
    report.pairwise_overlap.assign(n, std::vector<double>(n, -1.0));

    int ok_count = 0;
    for (const auto& r : window.records)
        if (r.ok()) ++ok_count;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = window.records[i];
        if (!a.ok()) continue;
        report.pairwise_overlap[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& b = window.records[j];
            if (!b.ok()) continue;
            const double lo =
                static_cast<double>(std::max(a.t_start, b.t_start));
            const double hi = static_cast<double>(std::min(a.t_end, b.t_end));
            const double overlap = std::max(0.0, hi - lo);
            const double shorter = static_cast<double>(
                std::min(a.t_end - a.t_start, b.t_end - b.t_start));
            double frac;
            if (shorter > 0.0)
                frac = overlap / shorter;
            else
                // Degenerate zero-length interval: co-resident iff the
                // instant falls inside the other interval.
                frac = (hi >= lo) ? 1.0 : 0.0;
            report.pairwise_overlap[i][j] = frac;
            report.pairwise_overlap[j][i] = frac;
        }
    }

    if (ok_count < 2) {
        report.status = CobatchStatus::unverifiable;
        return report;
    }
    const std::size_t t = static_cast<std::size_t>(target_index);
    report.status = CobatchStatus::not_verified;
    if (t < n && window.records[t].ok()) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == t) continue;
            if (report.pairwise_overlap[t][j] >= min_overlap_fraction) {
                report.status = CobatchStatus::verified;
                break;
            }
        }
    }
    return report;
}

namespace {

struct WindowPlan {
    std::string window_id;
    const ServingCondition* condition = nullptr;
    int repeat = 0;
    std::vector<DispatchItem> items;          // non-composition
    const PromptSpec* composition_target = nullptr;
    std::size_t expected_records = 0;
};

void finalize_records(DispatchWindow& window, const WindowPlan& plan) {
    for (auto& rec : window.records) {
        rec.condition_id = plan.condition->id;
        rec.repeat = plan.repeat;
        rec.window_id = plan.window_id;
    }
}

}  // namespace

CampaignResult run_campaign(const CampaignConfig& cfg, bool resume,
                            std::ostream* diag) {
    auto note = [&](const std::string& msg) {
        if (diag) *diag << msg << "\n";
    };

    std::vector<PromptSpec> corpus_list;
    try {
        corpus_list = load_corpus(cfg.corpus_path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    const auto errors = validate_corpus(corpus_list);
    if (!errors.empty()) {
        std::ostringstream ss;
        ss << "corpus validation failed:";
        for (const auto& e : errors)
            ss << "\n  " << e.prompt_id << ": " << e.message;
        throw ConfigError(ss.str());
    }
    std::map<std::string, PromptSpec> corpus;
    for (const auto& p : corpus_list) corpus.emplace(p.id, p);

    bool baseline_found = false;
    for (const auto& c : cfg.conditions)
        if (c.id == cfg.baseline_condition_id) baseline_found = true;
    if (!baseline_found || cfg.baseline_condition_id.empty())
        throw ConfigError("baseline condition missing from the grid");

    // Seed determines prompt ordering.
    std::vector<std::string> order;
    for (const auto& p : corpus_list) order.push_back(p.id);
    seeded_shuffle(order, cfg.seed);

    // Plan every window up front so resume can reason about completeness.
    std::vector<WindowPlan> plans;
    for (const auto& cond : cfg.conditions) {
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            if (cond.kind == ConditionKind::composition) {
                int idx = 0;
                std::set<std::string> pool_ids(cond.neighbor_pool.begin(),
                                               cond.neighbor_pool.end());
                for (const auto& id : order) {
                    if (pool_ids.count(id)) continue;  // filler, not a target
                    WindowPlan plan;
                    plan.condition = &cond;
                    plan.repeat = rep;
                    plan.window_id = cond.id + "/" + std::to_string(rep) +
                                     "/" + std::to_string(idx++);
                    plan.composition_target = &corpus.at(id);
                    plan.expected_records =
                        static_cast<std::size_t>(cond.batch_size);
                    plans.push_back(std::move(plan));
                }
                continue;
            }
            std::size_t chunk =
                cond.kind == ConditionKind::sequential
                    ? 1
                    : static_cast<std::size_t>(cond.batch_size) *
                          (cond.kind == ConditionKind::synchronized_batch
                               ? static_cast<std::size_t>(cond.concurrency)
                               : 1);
            int idx = 0;
            for (std::size_t pos = 0; pos < order.size(); pos += chunk) {
                WindowPlan plan;
                plan.condition = &cond;
                plan.repeat = rep;
                plan.window_id = cond.id + "/" + std::to_string(rep) + "/" +
                                 std::to_string(idx++);
                const std::size_t end = std::min(order.size(), pos + chunk);
                for (std::size_t i = pos; i < end; ++i)
                    plan.items.push_back(
                        {order[i], corpus.at(order[i]).text});
                plan.expected_records = plan.items.size();
                plans.push_back(std::move(plan));
            }
        }
    }

    fs::create_directories(cfg.output_dir);
    const std::string records_path =
        (fs::path(cfg.output_dir) / "records.jsonl").string();
    const std::string manifest_path =
        (fs::path(cfg.output_dir) / "manifest.json").string();

    // Resume: keep only windows that flushed completely. A crash can leave
    // a torn final line, so parse leniently here.
    std::set<std::string> done_windows;
    if (resume && fs::exists(records_path)) {
        std::vector<ResponseRecord> existing;
        {
            std::ifstream in(records_path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                try {
                    existing.push_back(
                        ResponseRecord::from_json(json::parse(line)));
                } catch (const std::exception&) {
                    break;  // torn tail; everything after is suspect
                }
            }
        }
        std::map<std::string, std::size_t> counts;
        for (const auto& rec : existing) ++counts[rec.window_id];
        std::map<std::string, std::size_t> expected;
        for (const auto& plan : plans)
            expected[plan.window_id] = plan.expected_records;
        for (const auto& [wid, count] : counts)
            if (expected.count(wid) && expected[wid] == count)
                done_windows.insert(wid);
        if (!done_windows.empty()) {
            std::ofstream out(records_path, std::ios::trunc);
            for (const auto& rec : existing)
                if (done_windows.count(rec.window_id))
                    out << rec.to_json().dump() << "\n";
        } else {
            fs::remove(records_path);
        }
        note("resume: keeping " + std::to_string(done_windows.size()) +
             " completed windows");
    } else if (fs::exists(records_path)) {
        fs::remove(records_path);
    }

    ServingClient client(cfg.endpoint);
    const ProbeResult probe = client.probe();
    if (probe.warning) note("probe: endpoint did not answer /v1/models");

    CampaignResult result;
    result.records_path = records_path;
    result.manifest_path = manifest_path;

    json manifest;
    manifest["schema_version"] = 1;
    manifest["config_hash"] = cfg.config_hash();
    manifest["seed"] = cfg.seed;
    manifest["rng_algorithm"] = std::string(kRngAlgorithm);
    json conds = json::array();
    for (const auto& c : cfg.conditions) conds.push_back(c.to_json());
    manifest["conditions"] = conds;
    manifest["baseline_condition_id"] = cfg.baseline_condition_id;
    manifest["repeats"] = cfg.repeats;
    manifest["corpus_prompts"] = corpus_list.size();
    manifest["probe"] = probe.provenance;
    manifest["probe_warning"] = probe.warning;
    manifest["started_at"] = iso_now();
    manifest["records_file"] = "records.jsonl";

    auto write_manifest = [&](bool complete) {
        manifest["finished_at"] = iso_now();
        manifest["complete"] = complete;
        manifest["records_written"] = result.records_written;
        manifest["records_checksum"] =
            fs::exists(records_path) ? to_hex16(hash_file(records_path))
                                     : std::string();
        std::ofstream out(manifest_path, std::ios::trunc);
        out << manifest.dump(2) << "\n";
        result.manifest = manifest;
    };

    std::ofstream records_out(records_path, std::ios::app);
    if (!records_out) throw ConfigError("cannot write " + records_path);

    int consecutive_window_failures = 0;
    for (const auto& plan : plans) {
        if (done_windows.count(plan.window_id)) {
            ++result.windows_skipped;
            result.records_written +=
                static_cast<std::int64_t>(plan.expected_records);
            continue;
        }
        DispatchWindow window;
        const ServingCondition& cond = *plan.condition;
        const std::string tag_prefix = plan.window_id;
        if (cond.kind == ConditionKind::composition) {
            window = dispatch_composition(client, *plan.composition_target,
                                          cond, corpus, cfg.seed, tag_prefix,
                                          cfg.single_dispatch_shape);
        } else if (cond.kind == ConditionKind::true_batch &&
                   plan.items.size() >= 2) {
            window = dispatch_true_batch(client, plan.items, cond.decode,
                                         tag_prefix);
        } else if (cond.kind == ConditionKind::sequential ||
                   plan.items.size() == 1) {
            window = dispatch_synchronized(client, plan.items, cond.decode,
                                           tag_prefix,
                                           cfg.single_dispatch_shape);
        } else {
            window = dispatch_synchronized(client, plan.items, cond.decode,
                                           tag_prefix,
                                           cfg.single_dispatch_shape,
                                           cond.start_offsets_ms);
        }
        finalize_records(window, plan);

        std::size_t failed = 0;
        for (const auto& rec : window.records) {
            records_out << rec.to_json().dump() << "\n";
            ++result.records_written;
            if (!rec.ok()) {
                ++failed;
                ++result.failures;
            }
        }
        records_out.flush();  // a crash loses at most this window
        ++result.windows;

        if (failed == window.records.size())
            ++consecutive_window_failures;
        else
            consecutive_window_failures = 0;
        if (consecutive_window_failures >= 3) {
            records_out.close();
            result.complete = false;
            write_manifest(false);
            throw EndpointUnreachable(
                "endpoint unreachable: three consecutive windows failed "
                "entirely; partial manifest written to " +
                manifest_path);
        }
    }
    records_out.close();
    write_manifest(true);
    return result;
}

std::vector<ResponseRecord> load_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open records: " + path);
    std::vector<ResponseRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(ResponseRecord::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
    return records;
}

}  // namespace batchflip
