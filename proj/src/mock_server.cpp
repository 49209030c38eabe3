#include "batchflip/mock_server.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>

#include "batchflip/hash.hpp"
#include "batchflip/normalize.hpp"

namespace batchflip {

namespace {

std::int64_t mono_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

TriggerKind trigger_kind_from_string(const std::string& s) {
    if (s == "min_concurrency") return TriggerKind::min_concurrency;
    if (s == "multi_prompt") return TriggerKind::multi_prompt;
    if (s == "co_resident_with") return TriggerKind::co_resident_with;
    throw std::invalid_argument("unknown trigger kind: " + s);
}

std::string to_string(TriggerKind k) {
    switch (k) {
        case TriggerKind::min_concurrency: return "min_concurrency";
        case TriggerKind::multi_prompt: return "multi_prompt";
        case TriggerKind::co_resident_with: return "co_resident_with";
    }
    return "min_concurrency";
}

}  // namespace

std::uint64_t MockBehavior::key_for(const std::string& prompt_text) {
    return fnv1a64(normalize(prompt_text));
}

MockEntry& MockBehavior::add_prompt(const std::string& prompt_text,
                                    const std::string& base_text) {
    MockEntry entry;
    entry.prompt_key = key_for(prompt_text);
    entry.base_text = base_text;
    auto [it, _] = entries.insert_or_assign(entry.prompt_key, std::move(entry));
    return it->second;
}

MockBehavior MockBehavior::from_json(const json& j) {
    MockBehavior b;
    if (j.contains("schema_version") &&
        j.at("schema_version").get<int>() != 1)
        throw std::invalid_argument("unsupported behavior schema_version");
    if (j.contains("model_name"))
        b.model_name = j.at("model_name").get<std::string>();
    if (j.contains("version")) b.version = j.at("version").get<std::string>();
    if (j.contains("invariant_mode"))
        b.invariant_mode = j.at("invariant_mode").get<bool>();
    if (j.contains("log_bodies")) b.log_bodies = j.at("log_bodies").get<bool>();
    if (j.contains("latency")) {
        const auto& l = j.at("latency");
        if (l.contains("base_ms")) b.latency.base_ms = l.at("base_ms").get<int>();
        if (l.contains("per_concurrent_ms"))
            b.latency.per_concurrent_ms = l.at("per_concurrent_ms").get<int>();
    }
    if (j.contains("fallback_text"))
        b.fallback_text = j.at("fallback_text").get<std::string>();
    if (j.contains("entries")) {
        for (const auto& e : j.at("entries")) {
            MockEntry entry;
            if (e.contains("prompt"))
                entry.prompt_key = key_for(e.at("prompt").get<std::string>());
            else
                entry.prompt_key =
                    parse_hex16(e.at("prompt_key").get<std::string>());
            entry.base_text = e.at("response").get<std::string>();
            if (e.contains("rules")) {
                for (const auto& r : e.at("rules")) {
                    SensitivityRule rule;
                    const auto& t = r.at("trigger");
                    rule.trigger.kind =
                        trigger_kind_from_string(t.at("kind").get<std::string>());
                    if (t.contains("threshold"))
                        rule.trigger.threshold = t.at("threshold").get<int>();
                    if (t.contains("neighbor_prompt"))
                        rule.trigger.neighbor_key =
                            key_for(t.at("neighbor_prompt").get<std::string>());
                    else if (t.contains("neighbor_key"))
                        rule.trigger.neighbor_key = parse_hex16(
                            t.at("neighbor_key").get<std::string>());
                    rule.alternate_text = r.at("text").get<std::string>();
                    entry.rules.push_back(std::move(rule));
                }
            }
            b.entries.insert_or_assign(entry.prompt_key, std::move(entry));
        }
    }
    if (j.contains("faults")) {
        for (const auto& f : j.at("faults")) {
            FaultRule rule;
            if (f.contains("tag_prefix"))
                rule.tag_prefix = f.at("tag_prefix").get<std::string>();
            if (f.contains("status")) rule.status = f.at("status").get<int>();
            if (f.contains("times")) rule.times = f.at("times").get<int>();
            if (f.contains("stall_ms")) rule.stall_ms = f.at("stall_ms").get<int>();
            b.faults.push_back(std::move(rule));
        }
    }
    return b;
}

json MockBehavior::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["model_name"] = model_name;
    if (!version.empty()) j["version"] = version;
    j["invariant_mode"] = invariant_mode;
    if (log_bodies) j["log_bodies"] = true;
    j["latency"] = {{"base_ms", latency.base_ms},
                    {"per_concurrent_ms", latency.per_concurrent_ms}};
    j["fallback_text"] = fallback_text;
    json entries_j = json::array();
    for (const auto& [key, entry] : entries) {
        json e;
        e["prompt_key"] = to_hex16(key);
        e["response"] = entry.base_text;
        if (!entry.rules.empty()) {
            json rules_j = json::array();
            for (const auto& r : entry.rules) {
                json t;
                t["kind"] = to_string(r.trigger.kind);
                if (r.trigger.kind == TriggerKind::min_concurrency)
                    t["threshold"] = r.trigger.threshold;
                if (r.trigger.kind == TriggerKind::co_resident_with)
                    t["neighbor_key"] = to_hex16(r.trigger.neighbor_key);
                rules_j.push_back({{"trigger", t}, {"text", r.alternate_text}});
            }
            e["rules"] = rules_j;
        }
        entries_j.push_back(std::move(e));
    }
    j["entries"] = entries_j;
    if (!faults.empty()) {
        json faults_j = json::array();
        for (const auto& f : faults) {
            json fj;
            fj["tag_prefix"] = f.tag_prefix;
            fj["status"] = f.status;
            fj["times"] = f.times;
            if (f.stall_ms > 0) fj["stall_ms"] = f.stall_ms;
            faults_j.push_back(std::move(fj));
        }
        j["faults"] = faults_j;
    }
    return j;
}

MockBehavior MockBehavior::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open behavior file: " + path);
    json j;
    in >> j;
    return from_json(j);
}

json RequestLogEntry::to_json() const {
    json j;
    j["tag"] = tag;
    j["arrival_ns"] = arrival_ns;
    j["departure_ns"] = departure_ns;
    j["concurrent_at_arrival"] = concurrent_at_arrival;
    j["multi_prompt"] = multi_prompt;
    j["status"] = status;
    if (!body.empty()) j["body"] = body;
    return j;
}

RequestLogEntry RequestLogEntry::from_json(const json& j) {
    RequestLogEntry e;
    e.tag = j.at("tag").get<std::string>();
    e.arrival_ns = j.at("arrival_ns").get<std::int64_t>();
    e.departure_ns = j.at("departure_ns").get<std::int64_t>();
    e.concurrent_at_arrival = j.at("concurrent_at_arrival").get<int>();
    if (j.contains("multi_prompt"))
        e.multi_prompt = j.at("multi_prompt").get<bool>();
    if (j.contains("status")) e.status = j.at("status").get<int>();
    if (j.contains("body")) e.body = j.at("body").get<std::string>();
    return e;
}

struct MockServer::Impl {
    MockBehavior behavior;
    std::string log_path;
    httplib::Server server;
    std::thread server_thread;
    int bound_port = 0;
    std::string bound_host;
    std::atomic<bool> is_running{false};

    // One live request in service: the keys it carries, the peak
    // concurrency observed at any instant of its residence, and every key
    // it overlapped with (service intervals genuinely intersecting).
    struct LiveRequest {
        std::vector<std::uint64_t> keys;
        int peak = 0;
        std::set<std::uint64_t> seen;
    };

    mutable std::mutex mu;
    int gauge = 0;  // live request count
    std::map<std::uint64_t, LiveRequest> live;
    std::uint64_t next_serial = 0;
    std::vector<RequestLogEntry> log;
    std::map<std::string, int> fault_hits;  // per (rule, tag) applications
    std::int64_t last_ns = 0;               // strictly monotonic arrivals
    std::ofstream log_file;

    std::int64_t stamp_locked() {
        std::int64_t now = mono_ns();
        if (now <= last_ns) now = last_ns + 1;
        last_ns = now;
        return now;
    }

    // Returns the fault to apply for this tag, if any.
    const FaultRule* match_fault(const std::string& tag) {
        for (std::size_t i = 0; i < behavior.faults.size(); ++i) {
            const FaultRule& f = behavior.faults[i];
            if (!f.tag_prefix.empty() &&
                tag.rfind(f.tag_prefix, 0) != 0)
                continue;
            const std::string key = std::to_string(i) + "|" + tag;
            int& hits = fault_hits[key];
            if (f.times >= 0 && hits >= f.times) continue;
            ++hits;
            return &f;
        }
        return nullptr;
    }

    std::string respond_text(std::uint64_t key, bool multi_prompt,
                             int observed_concurrency,
                             const std::function<bool(std::uint64_t)>&
                                 co_resident_with) {
        const auto it = behavior.entries.find(key);
        if (it == behavior.entries.end()) return behavior.fallback_text;
        const MockEntry& entry = it->second;
        if (behavior.invariant_mode) return entry.base_text;
        for (const auto& rule : entry.rules) {
            switch (rule.trigger.kind) {
                case TriggerKind::min_concurrency:
                    if (observed_concurrency >= rule.trigger.threshold)
                        return rule.alternate_text;
                    break;
                case TriggerKind::multi_prompt:
                    if (multi_prompt) return rule.alternate_text;
                    break;
                case TriggerKind::co_resident_with:
                    if (co_resident_with(rule.trigger.neighbor_key))
                        return rule.alternate_text;
                    break;
            }
        }
        return entry.base_text;
    }

    void handle(const httplib::Request& req, httplib::Response& res,
                bool chat) {
        std::string tag;
        if (auto it = req.headers.find("X-Request-Tag"); it != req.headers.end())
            tag = it->second;

        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"bad json"}})",
                            "application/json");
            return;
        }

        std::vector<std::string> prompts;
        if (chat) {
            if (body.contains("messages"))
                for (const auto& m : body["messages"])
                    if (m.value("role", "") == "user")
                        prompts = {m.value("content", "")};
        } else if (body.contains("prompt")) {
            if (body["prompt"].is_array())
                prompts = body["prompt"].get<std::vector<std::string>>();
            else
                prompts = {body["prompt"].get<std::string>()};
        }
        if (prompts.empty()) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"no prompt"}})",
                            "application/json");
            return;
        }
        const bool multi_prompt = prompts.size() > 1;

        std::vector<std::uint64_t> keys;
        keys.reserve(prompts.size());
        for (const auto& p : prompts) keys.push_back(MockBehavior::key_for(p));

        // Fault injection happens before service registration so injected
        // failures never perturb the concurrency gauge.
        int stall = 0;
        {
            std::lock_guard<std::mutex> lock(mu);
            if (const FaultRule* fault = match_fault(tag)) {
                if (fault->status != 0) {
                    const std::int64_t now = stamp_locked();
                    RequestLogEntry e{tag,          now,
                                      now,          gauge,
                                      multi_prompt, fault->status,
                                      ""};
                    append_log_locked(e);
                    res.status = fault->status;
                    res.set_content(
                        R"({"error":{"message":"injected fault"}})",
                        "application/json");
                    return;
                }
                stall = fault->stall_ms;
            }
        }
        if (stall > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(stall));

        // Arrival: register in the live map. Every already-live request
        // learns about this one (and vice versa), so peak concurrency and
        // co-residence cover the whole service window, not one instant.
        std::int64_t arrival = 0;
        int at_arrival = 0;
        std::uint64_t serial = 0;
        {
            std::lock_guard<std::mutex> lock(mu);
            serial = next_serial++;
            ++gauge;
            LiveRequest me;
            me.keys = keys;
            me.peak = gauge;
            for (auto& [other_serial, other] : live) {
                (void)other_serial;
                other.peak = std::max(other.peak, gauge);
                for (auto k : keys) other.seen.insert(k);
                for (auto k : other.keys) me.seen.insert(k);
            }
            live.emplace(serial, std::move(me));
            at_arrival = gauge;
            arrival = stamp_locked();
        }

        const int latency_ms =
            behavior.latency.base_ms +
            behavior.latency.per_concurrent_ms * (at_arrival - 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms));

        // Evaluate sensitivity after the sleep so the live map has absorbed
        // everything this request overlapped with.
        std::vector<std::string> texts(prompts.size());
        {
            std::lock_guard<std::mutex> lock(mu);
            const LiveRequest& me = live.at(serial);
            for (std::size_t i = 0; i < keys.size(); ++i) {
                auto co_resident = [&](std::uint64_t neighbor_key) {
                    if (me.seen.count(neighbor_key) > 0) return true;
                    // siblings inside one multi-prompt payload co-execute
                    for (std::size_t j = 0; j < keys.size(); ++j)
                        if (j != i && keys[j] == neighbor_key) return true;
                    return false;
                };
                texts[i] =
                    respond_text(keys[i], multi_prompt, me.peak, co_resident);
            }
        }

        json choices = json::array();
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (chat)
                choices.push_back(
                    {{"index", i},
                     {"message",
                      {{"role", "assistant"}, {"content", texts[i]}}},
                     {"finish_reason", "stop"}});
            else
                choices.push_back({{"index", i},
                                   {"text", texts[i]},
                                   {"finish_reason", "stop"}});
        }
        json resp;
        resp["id"] = "mock";
        resp["object"] = chat ? "chat.completion" : "text_completion";
        resp["created"] = 0;
        resp["model"] = behavior.model_name;
        resp["kernel_mode"] =
            behavior.invariant_mode ? "batch_invariant" : "standard";
        if (!behavior.version.empty())
            resp["backend_version"] = behavior.version;
        resp["choices"] = choices;

        // Departure: unregister, then log.
        {
            std::lock_guard<std::mutex> lock(mu);
            --gauge;
            live.erase(serial);
            const std::int64_t departure = stamp_locked();
            RequestLogEntry e{tag, arrival, departure, at_arrival, multi_prompt,
                              200, behavior.log_bodies ? req.body : ""};
            append_log_locked(e);
        }
        res.status = 200;
        res.set_content(resp.dump(), "application/json");
    }

    void append_log_locked(const RequestLogEntry& e) {
        log.push_back(e);
        if (log_file.is_open()) {
            log_file << e.to_json().dump() << "\n";
            log_file.flush();
        }
    }
};

MockServer::MockServer(MockBehavior behavior, std::string log_path)
    : impl_(std::make_unique<Impl>()) {
    impl_->behavior = std::move(behavior);
    impl_->log_path = std::move(log_path);
}

MockServer::~MockServer() { stop(); }

void MockServer::start(const std::string& host, int port) {
    if (impl_->is_running) throw std::runtime_error("mock server already running");
    if (!impl_->log_path.empty()) {
        impl_->log_file.open(impl_->log_path, std::ios::trunc);
        if (!impl_->log_file)
            throw std::runtime_error("cannot open request log: " +
                                     impl_->log_path);
    }

    auto& srv = impl_->server;
    // Handlers spend their time sleeping in the latency model, so the pool
    // must exceed the widest synchronized window, not the core count.
    srv.new_task_queue = [] { return new httplib::ThreadPool(96); };
    srv.Post("/v1/completions",
             [this](const httplib::Request& req, httplib::Response& res) {
                 impl_->handle(req, res, /*chat=*/false);
             });
    srv.Post("/v1/chat/completions",
             [this](const httplib::Request& req, httplib::Response& res) {
                 impl_->handle(req, res, /*chat=*/true);
             });
    srv.Get("/v1/models",
            [this](const httplib::Request&, httplib::Response& res) {
                json j;
                j["object"] = "list";
                j["data"] = json::array(
                    {{{"id", impl_->behavior.model_name}, {"object", "model"}}});
                if (!impl_->behavior.version.empty())
                    j["version"] = impl_->behavior.version;
                j["kernel_mode"] = impl_->behavior.invariant_mode
                                       ? "batch_invariant"
                                       : "standard";
                res.set_content(j.dump(), "application/json");
            });

    if (port == 0) {
        impl_->bound_port = srv.bind_to_any_port(host);
        if (impl_->bound_port <= 0)
            throw std::runtime_error("mock server: bind failed");
    } else {
        if (!srv.bind_to_port(host, port))
            throw std::runtime_error("mock server: port " +
                                     std::to_string(port) + " unavailable");
        impl_->bound_port = port;
    }
    impl_->bound_host = host;
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    impl_->is_running = true;
}

void MockServer::stop() {
    if (!impl_->is_running) return;
    impl_->server.stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
    impl_->is_running = false;
    if (impl_->log_file.is_open()) impl_->log_file.close();
}

int MockServer::port() const { return impl_->bound_port; }

std::string MockServer::base_url() const {
    return "http://" + impl_->bound_host + ":" +
           std::to_string(impl_->bound_port);
}

bool MockServer::running() const { return impl_->is_running; }

std::vector<RequestLogEntry> MockServer::request_log() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->log;
}

int MockServer::live_concurrency() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->gauge;
}

}  // namespace batchflip
