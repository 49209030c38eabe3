#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "batchflip/types.hpp"

namespace batchflip {

// Deterministic OpenAI-compatible server whose responses can be made
// batch-sensitive by configuration. With invariant_mode=true responses are
// a pure function of prompt text alone.

enum class TriggerKind { min_concurrency, multi_prompt, co_resident_with };

struct SensitivityTrigger {
    TriggerKind kind = TriggerKind::min_concurrency;
    int threshold = 2;              // min_concurrency
    std::uint64_t neighbor_key = 0;  // co_resident_with
};

struct SensitivityRule {
    SensitivityTrigger trigger;
    std::string alternate_text;
};

struct MockEntry {
    std::uint64_t prompt_key = 0;  // 64-bit hash of normalized prompt text
    std::string base_text;
    std::vector<SensitivityRule> rules;  // order is significant
};

struct LatencyModel {
    int base_ms = 10;
    int per_concurrent_ms = 0;
};

struct FaultRule {
    std::string tag_prefix;  // empty matches every tag
    int status = 500;        // HTTP status to inject; 0 means stall instead
    int times = 1;           // applications per distinct tag; -1 = always
    int stall_ms = 0;
};

struct MockBehavior {
    std::string model_name = "mock-model";
    std::string version;  // reported as "backend_version" when non-empty
    bool invariant_mode = false;
    bool log_bodies = false;  // capture request bodies in the log
    LatencyModel latency;
    std::map<std::uint64_t, MockEntry> entries;
    std::string fallback_text = "UNKNOWN_PROMPT";
    std::vector<FaultRule> faults;

    // Convenience: hashes the normalized prompt for you.
    MockEntry& add_prompt(const std::string& prompt_text,
                          const std::string& base_text);
    static std::uint64_t key_for(const std::string& prompt_text);

    static MockBehavior from_json(const json& j);
    json to_json() const;
    static MockBehavior load(const std::string& path);
};

struct RequestLogEntry {
    std::string tag;
    std::int64_t arrival_ns = 0;
    std::int64_t departure_ns = 0;
    int concurrent_at_arrival = 0;
    bool multi_prompt = false;
    int status = 200;
    std::string body;  // only when behavior.log_bodies

    json to_json() const;
    static RequestLogEntry from_json(const json& j);
};

class MockServer {
  public:
    explicit MockServer(MockBehavior behavior, std::string log_path = "");
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    // port 0 binds an ephemeral port. Throws std::runtime_error when the
    // port is in use or binding fails.
    void start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();  // drains in-flight requests
    int port() const;
    std::string base_url() const;
    bool running() const;

    std::vector<RequestLogEntry> request_log() const;
    int live_concurrency() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace batchflip
