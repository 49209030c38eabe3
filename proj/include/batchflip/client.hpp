#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "batchflip/types.hpp"

namespace batchflip {

// Environment variable consulted for the Authorization header when the
// config does not set one explicitly.
inline constexpr const char* kAuthTokenEnvVar = "BATCHFLIP_API_TOKEN";

struct EndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string model_name;
    int request_timeout_ms = 120000;
    int max_retries = 2;  // capped at 5
    std::map<std::string, std::string> headers;

    static EndpointConfig from_json(const json& j);
    json to_json() const;
};

enum class ApiShape {
    auto_select,  // chat for single prompts, completions for prompt lists
    chat,
    completions,
};

struct CompletionRequest {
    std::vector<std::string> prompts;  // length 1, or batch_size for true batch
    DecodeParams decode;
    std::string request_tag;  // echoed for correlation; stable across retries
    ApiShape shape = ApiShape::auto_select;
};

struct ProbeResult {
    std::map<std::string, std::string> provenance;
    bool warning = false;  // endpoint unreachable or unparseable
};

class MalformedResponse : public std::runtime_error {
  public:
    explicit MalformedResponse(const std::string& excerpt)
        : std::runtime_error("malformed server response: " + excerpt) {}
};

// Thread-safe: carries no mutable state, so any number of complete() calls
// may run concurrently.
class ServingClient {
  public:
    explicit ServingClient(EndpointConfig cfg);

    // One ResponseRecord per prompt, in request order. Retries only
    // transport failures and HTTP 5xx, never 4xx; retried requests reuse
    // the same request_tag. Throws MalformedResponse on undecodable bodies.
    std::vector<ResponseRecord> complete(const CompletionRequest& req) const;

    ProbeResult probe() const;

    const EndpointConfig& config() const { return cfg_; }

    // The exact body bytes a request serializes to; byte-for-byte
    // deterministic given (cfg, req).
    static std::string request_body(const EndpointConfig& cfg,
                                    const CompletionRequest& req);
    static std::string endpoint_path(const CompletionRequest& req);

  private:
    EndpointConfig cfg_;
    std::string host_;
    int port_ = 80;
    std::string path_prefix_;
};

}  // namespace batchflip
