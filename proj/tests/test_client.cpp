#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "batchflip/client.hpp"
#include "batchflip/mock_server.hpp"

using namespace batchflip;

namespace {

MockBehavior basic_behavior() {
    MockBehavior b;
    b.model_name = "mock-model";
    b.version = "mock-1.0";
    b.latency.base_ms = 1;
    b.add_prompt("hello there", "hello response");
    b.add_prompt("second prompt", "second response");
    b.add_prompt("third prompt", "third response");
    b.add_prompt("fourth prompt", "fourth response");
    return b;
}

EndpointConfig config_for(const MockServer& server) {
    EndpointConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model_name = "mock-model";
    cfg.request_timeout_ms = 5000;
    return cfg;
}

}  // namespace

TEST_CASE("single prompt against a healthy server") {
    MockServer server(basic_behavior());
    server.start();
    ServingClient client(config_for(server));

    CompletionRequest req;
    req.prompts = {"hello there"};
    req.request_tag = "t/0";
    const auto records = client.complete(req);
    REQUIRE(records.size() == 1);
    CHECK(records[0].transport_status == TransportStatus::ok);
    CHECK(records[0].raw_text == "hello response");
    CHECK(records[0].normalized_text == "hello response");
    CHECK(records[0].attempt == 1);
    CHECK(records[0].t_end >= records[0].t_start);
    CHECK(records[0].provenance.at("model") == "mock-model");
    CHECK(records[0].provenance.at("backend_version") == "mock-1.0");
    server.stop();
}

TEST_CASE("true-batch request shares one round trip") {
    MockServer server(basic_behavior());
    server.start();
    ServingClient client(config_for(server));

    CompletionRequest req;
    req.prompts = {"hello there", "second prompt", "third prompt",
                   "fourth prompt"};
    req.request_tag = "batch/0";
    const auto records = client.complete(req);
    REQUIRE(records.size() == 4);
    for (const auto& r : records) {
        CHECK(r.transport_status == TransportStatus::ok);
        CHECK(r.t_start == records[0].t_start);  // one HTTP round trip
    }
    CHECK(records[0].raw_text == "hello response");
    CHECK(records[1].raw_text == "second response");
    CHECK(records[3].raw_text == "fourth response");

    // exactly one request hit the server
    const auto log = server.request_log();
    REQUIRE(log.size() == 1);
    CHECK(log[0].multi_prompt);
    CHECK(log[0].tag == "batch/0");
    server.stop();
}

TEST_CASE("http 500 twice then 200 yields retried_ok attempt 3") {
    MockBehavior behavior = basic_behavior();
    behavior.faults.push_back({"flaky", 500, 2, 0});
    MockServer server(behavior);
    server.start();
    EndpointConfig cfg = config_for(server);
    cfg.max_retries = 2;
    ServingClient client(cfg);

    CompletionRequest req;
    req.prompts = {"hello there"};
    req.request_tag = "flaky/1";
    const auto records = client.complete(req);
    REQUIRE(records.size() == 1);
    CHECK(records[0].transport_status == TransportStatus::retried_ok);
    CHECK(records[0].attempt == 3);
    CHECK(records[0].raw_text == "hello response");
    server.stop();
}

TEST_CASE("4xx is never retried") {
    MockBehavior behavior = basic_behavior();
    behavior.faults.push_back({"bad", 404, -1, 0});
    MockServer server(behavior);
    server.start();
    ServingClient client(config_for(server));

    CompletionRequest req;
    req.prompts = {"hello there"};
    req.request_tag = "bad/1";
    const auto records = client.complete(req);
    REQUIRE(records.size() == 1);
    CHECK(records[0].transport_status == TransportStatus::failed);
    CHECK(records[0].provenance.at("error") == "http_404");
    // exactly one attempt reached the server
    CHECK(server.request_log().size() == 1);
    server.stop();
}

TEST_CASE("exhausted retries mark the record failed") {
    MockBehavior behavior = basic_behavior();
    behavior.faults.push_back({"", 500, -1, 0});
    MockServer server(behavior);
    server.start();
    EndpointConfig cfg = config_for(server);
    cfg.max_retries = 1;
    ServingClient client(cfg);

    CompletionRequest req;
    req.prompts = {"hello there"};
    req.request_tag = "any/1";
    const auto records = client.complete(req);
    REQUIRE(records.size() == 1);
    CHECK(records[0].transport_status == TransportStatus::failed);
    CHECK(server.request_log().size() == 2);  // original + one retry, same tag
    CHECK(server.request_log()[0].tag == server.request_log()[1].tag);
    server.stop();
}

TEST_CASE("request bodies are byte-deterministic and carry temperature 0") {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.model_name = "m";
    CompletionRequest req;
    req.prompts = {"a prompt"};
    req.request_tag = "t";
    const std::string one = ServingClient::request_body(cfg, req);
    const std::string two = ServingClient::request_body(cfg, req);
    CHECK(one == two);
    CHECK(one.find("\"temperature\":0.0") != std::string::npos);
    CHECK(ServingClient::endpoint_path(req) == "/v1/chat/completions");

    req.prompts = {"a", "b"};
    CHECK(ServingClient::endpoint_path(req) == "/v1/completions");
    const std::string multi = ServingClient::request_body(cfg, req);
    CHECK(multi.find("\"prompt\":[\"a\",\"b\"]") != std::string::npos);

    req.prompts = {""};
    CHECK_THROWS_AS(ServingClient::request_body(cfg, req),
                    std::invalid_argument);
    req.prompts.clear();
    CHECK_THROWS_AS(ServingClient::request_body(cfg, req),
                    std::invalid_argument);
}

TEST_CASE("probe collects provenance; unreachable probe warns") {
    MockServer server(basic_behavior());
    server.start();
    ServingClient client(config_for(server));
    const ProbeResult probe = client.probe();
    CHECK_FALSE(probe.warning);
    CHECK(probe.provenance.at("version") == "mock-1.0");
    CHECK(probe.provenance.at("models") == "mock-model");
    server.stop();

    EndpointConfig dead;
    dead.base_url = "http://127.0.0.1:1";
    dead.model_name = "none";
    const ProbeResult bad = ServingClient(dead).probe();
    CHECK(bad.warning);
    CHECK(bad.provenance.empty());
}

TEST_CASE("probe tolerates a server omitting the version field") {
    MockBehavior b = basic_behavior();
    b.version.clear();
    MockServer server(b);
    server.start();
    const ProbeResult probe = ServingClient(config_for(server)).probe();
    CHECK_FALSE(probe.warning);
    CHECK(probe.provenance.count("version") == 0);
    CHECK(probe.provenance.count("models") == 1);
    server.stop();
}

TEST_CASE("bad base urls are rejected") {
    EndpointConfig cfg;
    cfg.base_url = "not a url";
    cfg.model_name = "m";
    CHECK_THROWS_AS(ServingClient{cfg}, std::invalid_argument);
    cfg.base_url = "http://ok:8080";
    cfg.max_retries = 9;
    CHECK_THROWS_AS(ServingClient{cfg}, std::invalid_argument);
}
