#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <thread>

#include "batchflip/client.hpp"
#include "batchflip/mock_server.hpp"

using namespace batchflip;

namespace {

MockBehavior sensitive_behavior(bool invariant) {
    MockBehavior b;
    b.model_name = "mock-model";
    b.invariant_mode = invariant;
    b.latency.base_ms = 15;
    auto& flaky = b.add_prompt("fragile prompt", "I can't help with that.");
    flaky.rules.push_back(
        {{TriggerKind::min_concurrency, 4, 0}, "COMPLY_SENTINEL steps follow"});
    auto& multi = b.add_prompt("multi prompt", "base multi");
    multi.rules.push_back({{TriggerKind::multi_prompt, 0, 0}, "multi alt"});
    auto& cores = b.add_prompt("cores prompt", "base cores");
    cores.rules.push_back({{TriggerKind::co_resident_with, 0,
                            MockBehavior::key_for("trigger neighbor")},
                           "cores alt"});
    b.add_prompt("trigger neighbor", "neighbor response");
    b.add_prompt("stable prompt", "stable response");
    return b;
}

EndpointConfig config_for(const MockServer& server) {
    EndpointConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model_name = "mock-model";
    cfg.request_timeout_ms = 10000;
    return cfg;
}

std::string complete_one(const ServingClient& client, const std::string& text,
                         const std::string& tag) {
    CompletionRequest req;
    req.prompts = {text};
    req.request_tag = tag;
    return client.complete(req).front().raw_text;
}

}  // namespace

TEST_CASE("health probe lists the configured model") {
    MockServer server(sensitive_behavior(false));
    server.start();
    CHECK(server.running());
    const ProbeResult probe = ServingClient(config_for(server)).probe();
    CHECK(probe.provenance.at("models") == "mock-model");
    server.stop();
    CHECK_FALSE(server.running());
}

TEST_CASE("unknown prompt gets the deterministic fallback") {
    MockServer server(sensitive_behavior(false));
    server.start();
    ServingClient client(config_for(server));
    CHECK(complete_one(client, "never configured", "t/0") == "UNKNOWN_PROMPT");
    server.stop();
}

TEST_CASE("concurrency trigger fires only under load") {
    MockServer server(sensitive_behavior(false));
    server.start();
    ServingClient client(config_for(server));

    // solo request: trigger not met
    CHECK(complete_one(client, "fragile prompt", "solo/0") ==
          "I can't help with that.");

    // six concurrent requests: gauge >= 4 when each evaluates
    std::vector<std::thread> threads;
    std::vector<std::string> results(6);
    for (int i = 0; i < 6; ++i)
        threads.emplace_back([&, i] {
            results[static_cast<std::size_t>(i)] = complete_one(
                client, "fragile prompt", "load/" + std::to_string(i));
        });
    for (auto& t : threads) t.join();
    for (const auto& r : results) CHECK(r == "COMPLY_SENTINEL steps follow");
    server.stop();
}

TEST_CASE("invariant mode ignores every sensitivity rule") {
    MockServer server(sensitive_behavior(true));
    server.start();
    ServingClient client(config_for(server));

    std::vector<std::thread> threads;
    std::vector<std::string> results(6);
    for (int i = 0; i < 6; ++i)
        threads.emplace_back([&, i] {
            results[static_cast<std::size_t>(i)] = complete_one(
                client, "fragile prompt", "inv/" + std::to_string(i));
        });
    for (auto& t : threads) t.join();
    for (const auto& r : results) CHECK(r == "I can't help with that.");

    // kernel mode echoed in provenance
    CompletionRequest req;
    req.prompts = {"stable prompt"};
    req.request_tag = "inv/solo";
    CHECK(client.complete(req).front().provenance.at("kernel_mode") ==
          "batch_invariant");
    server.stop();
}

TEST_CASE("multi-prompt trigger fires on prompt-list payloads") {
    MockServer server(sensitive_behavior(false));
    server.start();
    ServingClient client(config_for(server));
    CHECK(complete_one(client, "multi prompt", "mp/0") == "base multi");

    CompletionRequest req;
    req.prompts = {"multi prompt", "stable prompt"};
    req.request_tag = "mp/1";
    const auto records = client.complete(req);
    CHECK(records[0].raw_text == "multi alt");
    CHECK(records[1].raw_text == "stable response");
    server.stop();
}

TEST_CASE("co-residence trigger needs genuinely overlapping service") {
    MockServer server(sensitive_behavior(false));
    server.start();
    ServingClient client(config_for(server));

    // alone: no overlap, base response
    CHECK(complete_one(client, "cores prompt", "solo/0") == "base cores");

    // released together with the named neighbor: alternate
    std::string target_text;
    std::thread a([&] {
        target_text = complete_one(client, "cores prompt", "pair/0");
    });
    std::thread b([&] { complete_one(client, "trigger neighbor", "pair/1"); });
    a.join();
    b.join();
    CHECK(target_text == "cores alt");
    server.stop();
}

TEST_CASE("request log reconstruction matches the live gauge") {
    MockServer server(sensitive_behavior(false));
    server.start();
    ServingClient client(config_for(server));
    std::vector<std::thread> threads;
    for (int i = 0; i < 5; ++i)
        threads.emplace_back([&, i] {
            complete_one(client, "stable prompt", "g/" + std::to_string(i));
        });
    for (auto& t : threads) t.join();
    server.stop();

    const auto log = server.request_log();
    REQUIRE(log.size() == 5);
    for (const auto& e : log) {
        // count requests whose service interval contains this arrival
        int concurrent = 0;
        for (const auto& other : log) {
            if (other.arrival_ns <= e.arrival_ns &&
                e.arrival_ns < other.departure_ns)
                ++concurrent;
        }
        CHECK(concurrent == e.concurrent_at_arrival);
        CHECK(e.departure_ns > e.arrival_ns);
    }
}

TEST_CASE("replaying a request log in any order is invariant in invariant mode") {
    MockBehavior behavior = sensitive_behavior(true);
    MockServer server(behavior);
    server.start();
    ServingClient client(config_for(server));

    const std::vector<std::string> prompts = {
        "fragile prompt", "multi prompt", "cores prompt", "stable prompt"};
    std::vector<std::string> first;
    for (const auto& p : prompts) first.push_back(complete_one(client, p, "r1"));
    // reversed order, concurrent this time
    std::vector<std::string> second(prompts.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < prompts.size(); ++i)
        threads.emplace_back([&, i] {
            second[i] = complete_one(client, prompts[i], "r2");
        });
    for (auto& t : threads) t.join();
    CHECK(first == second);
    server.stop();
}

TEST_CASE("behavior files round trip through json") {
    const MockBehavior b = sensitive_behavior(false);
    const json j = b.to_json();
    const MockBehavior parsed = MockBehavior::from_json(j);
    CHECK(parsed.model_name == b.model_name);
    CHECK(parsed.entries.size() == b.entries.size());
    CHECK(parsed.invariant_mode == b.invariant_mode);
    CHECK(parsed.latency.base_ms == b.latency.base_ms);
    // prompt-text entries hash to the same keys as prompt_key entries
    json alt;
    alt["entries"] = json::array(
        {{{"prompt", "fragile prompt"}, {"response", "x"}}});
    const MockBehavior from_text = MockBehavior::from_json(alt);
    CHECK(from_text.entries.count(MockBehavior::key_for("fragile prompt")) == 1);
}

TEST_CASE("request log file is written when configured") {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "bf_mock_log.jsonl";
    {
        MockServer server(sensitive_behavior(false), path.string());
        server.start();
        ServingClient client(config_for(server));
        complete_one(client, "stable prompt", "file/0");
        server.stop();
    }
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    const auto entry = RequestLogEntry::from_json(json::parse(line));
    CHECK(entry.tag == "file/0");
    CHECK(entry.concurrent_at_arrival == 1);
    fs::remove(path);
}

TEST_CASE("stall fault exceeds the client timeout") {
    MockBehavior behavior = sensitive_behavior(false);
    behavior.faults.push_back({"slow", 0, 1, 600});
    MockServer server(behavior);
    server.start();
    EndpointConfig cfg = config_for(server);
    cfg.request_timeout_ms = 150;
    cfg.max_retries = 0;
    ServingClient client(cfg);
    CompletionRequest req;
    req.prompts = {"stable prompt"};
    req.request_tag = "slow/0";
    const auto records = client.complete(req);
    CHECK(records[0].transport_status == TransportStatus::failed);
    server.stop();
}
