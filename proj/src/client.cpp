#include "batchflip/client.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

#include "batchflip/normalize.hpp"

namespace batchflip {

namespace {

std::int64_t mono_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

bool is_multi(const CompletionRequest& req) { return req.prompts.size() > 1; }

bool use_chat_shape(const CompletionRequest& req) {
    if (req.shape == ApiShape::chat) return true;
    if (req.shape == ApiShape::completions) return false;
    return !is_multi(req);
}

}  // namespace

EndpointConfig EndpointConfig::from_json(const json& j) {
    EndpointConfig c;
    c.base_url = j.at("base_url").get<std::string>();
    c.model_name = j.at("model_name").get<std::string>();
    if (j.contains("request_timeout_ms"))
        c.request_timeout_ms = j.at("request_timeout_ms").get<int>();
    if (j.contains("max_retries")) c.max_retries = j.at("max_retries").get<int>();
    if (j.contains("headers"))
        c.headers = j.at("headers").get<std::map<std::string, std::string>>();
    if (c.max_retries < 0 || c.max_retries > 5)
        throw std::invalid_argument("max_retries must be in [0, 5]");
    if (c.request_timeout_ms <= 0)
        throw std::invalid_argument("request_timeout_ms must be positive");
    return c;
}

json EndpointConfig::to_json() const {
    json j;
    j["base_url"] = base_url;
    j["model_name"] = model_name;
    j["request_timeout_ms"] = request_timeout_ms;
    j["max_retries"] = max_retries;
    j["headers"] = headers;
    return j;
}

ServingClient::ServingClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    static const std::regex url_re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.base_url, m, url_re))
        throw std::invalid_argument("base_url does not parse: " +
                                    cfg_.base_url);
    if (m[1] == "https")
        throw std::invalid_argument(
            "https endpoints are not supported by this build");
    host_ = m[2];
    port_ = m[3].matched ? std::stoi(m[3]) : 80;
    path_prefix_ = m[4].matched ? m[4].str() : "";
    if (!path_prefix_.empty() && path_prefix_.back() == '/')
        path_prefix_.pop_back();
    if (cfg_.max_retries < 0 || cfg_.max_retries > 5)
        throw std::invalid_argument("max_retries must be in [0, 5]");
}

std::string ServingClient::endpoint_path(const CompletionRequest& req) {
    return use_chat_shape(req) ? "/v1/chat/completions" : "/v1/completions";
}

std::string ServingClient::request_body(const EndpointConfig& cfg,
                                        const CompletionRequest& req) {
    if (req.prompts.empty())
        throw std::invalid_argument("completion request with no prompts");
    for (const auto& p : req.prompts)
        if (p.empty())
            throw std::invalid_argument("completion request with empty prompt");
    if (req.decode.temperature != 0.0)
        throw std::invalid_argument("temperature must be exactly 0.0");

    json body;
    body["model"] = cfg.model_name;
    body["temperature"] = req.decode.temperature;
    body["max_tokens"] = req.decode.max_tokens;
    if (use_chat_shape(req)) {
        if (is_multi(req))
            throw std::invalid_argument(
                "chat shape carries exactly one prompt");
        body["messages"] =
            json::array({{{"role", "user"}, {"content", req.prompts[0]}}});
    } else if (is_multi(req)) {
        body["prompt"] = req.prompts;
    } else {
        body["prompt"] = req.prompts[0];
    }
    return body.dump();
}

namespace {

httplib::Headers build_headers(const EndpointConfig& cfg,
                               const std::string& tag) {
    httplib::Headers headers;
    bool has_auth = false;
    for (const auto& [k, v] : cfg.headers) {
        headers.emplace(k, v);
        if (k == "Authorization") has_auth = true;
    }
    if (!has_auth) {
        if (const char* token = std::getenv(kAuthTokenEnvVar))
            headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    if (!tag.empty()) headers.emplace("X-Request-Tag", tag);
    return headers;
}

std::string excerpt_of(const std::string& body) {
    return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

void copy_provenance(const json& resp, std::map<std::string, std::string>* out) {
    static const char* keys[] = {"model", "system_fingerprint",
                                 "backend_version", "kernel_mode"};
    for (const char* k : keys)
        if (resp.contains(k) && resp[k].is_string())
            (*out)[k] = resp[k].get<std::string>();
}

}  // namespace

std::vector<ResponseRecord> ServingClient::complete(
    const CompletionRequest& req) const {
    const std::string body = request_body(cfg_, req);
    const std::string path = path_prefix_ + endpoint_path(req);
    const bool chat = use_chat_shape(req);
    const httplib::Headers headers = build_headers(cfg_, req.request_tag);

    const int max_attempts = cfg_.max_retries + 1;
    std::int64_t t_start = 0, t_end = 0;
    httplib::Result res;
    int attempt = 0;
    bool got_response = false;
    for (attempt = 1; attempt <= max_attempts; ++attempt) {
        httplib::Client cli(host_, port_);
        cli.set_connection_timeout(cfg_.request_timeout_ms / 1000,
                                   (cfg_.request_timeout_ms % 1000) * 1000);
        cli.set_read_timeout(cfg_.request_timeout_ms / 1000,
                             (cfg_.request_timeout_ms % 1000) * 1000);
        cli.set_write_timeout(cfg_.request_timeout_ms / 1000,
                              (cfg_.request_timeout_ms % 1000) * 1000);
        t_start = mono_ns();
        res = cli.Post(path, headers, body, "application/json");
        t_end = mono_ns();
        if (!res) continue;                   // transport failure: retry
        if (res->status >= 500) continue;     // server fault: retry
        got_response = true;
        break;
    }
    if (attempt > max_attempts) attempt = max_attempts;

    auto make_failed = [&](const std::string& why) {
        std::vector<ResponseRecord> records;
        for (const auto& prompt : req.prompts) {
            (void)prompt;
            ResponseRecord r;
            r.condition_id = "";
            r.attempt = attempt;
            r.t_start = t_start;
            r.t_end = t_end;
            r.transport_status = TransportStatus::failed;
            r.request_tag = req.request_tag;
            if (!why.empty()) r.provenance["error"] = why;
            records.push_back(std::move(r));
        }
        return records;
    };

    if (!got_response) {
        if (res && res->status >= 500)
            return make_failed("http_" + std::to_string(res->status));
        return make_failed(res ? "http_" + std::to_string(res->status)
                               : "transport");
    }
    if (res->status != 200) {
        // 4xx: no retry, recorded as failure with the status preserved.
        return make_failed("http_" + std::to_string(res->status));
    }

    json resp;
    try {
        resp = json::parse(res->body);
    } catch (const json::exception&) {
        throw MalformedResponse(excerpt_of(res->body));
    }
    if (!resp.contains("choices") || !resp["choices"].is_array() ||
        resp["choices"].size() != req.prompts.size())
        throw MalformedResponse(excerpt_of(res->body));

    std::map<std::string, std::string> provenance;
    copy_provenance(resp, &provenance);

    std::vector<std::string> texts(req.prompts.size());
    for (const auto& choice : resp["choices"]) {
        std::size_t index = 0;
        if (choice.contains("index")) index = choice["index"].get<std::size_t>();
        if (index >= texts.size()) throw MalformedResponse(excerpt_of(res->body));
        try {
            texts[index] = chat
                               ? choice.at("message").at("content")
                                     .get<std::string>()
                               : choice.at("text").get<std::string>();
        } catch (const json::exception&) {
            throw MalformedResponse(excerpt_of(res->body));
        }
    }

    std::vector<ResponseRecord> records;
    records.reserve(req.prompts.size());
    for (std::size_t i = 0; i < req.prompts.size(); ++i) {
        ResponseRecord r;
        r.attempt = attempt;
        r.raw_text = texts[i];
        r.normalized_text = normalize(texts[i]);
        r.t_start = t_start;  // shared across a true-batch payload
        r.t_end = t_end;
        r.transport_status =
            attempt == 1 ? TransportStatus::ok : TransportStatus::retried_ok;
        r.provenance = provenance;
        r.request_tag = req.request_tag;
        records.push_back(std::move(r));
    }
    return records;
}

ProbeResult ServingClient::probe() const {
    ProbeResult out;
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(0, 2000 * 1000LL);
    cli.set_read_timeout(5, 0);
    auto res = cli.Get(path_prefix_ + "/v1/models", build_headers(cfg_, ""));
    if (!res || res->status != 200) {
        out.warning = true;
        return out;
    }
    try {
        const json j = json::parse(res->body);
        if (j.contains("data") && j["data"].is_array()) {
            std::string models;
            for (const auto& m : j["data"]) {
                if (!m.contains("id")) continue;
                if (!models.empty()) models += ",";
                models += m["id"].get<std::string>();
            }
            if (!models.empty()) out.provenance["models"] = models;
        }
        for (const auto& [k, v] : j.items())
            if (v.is_string()) out.provenance[k] = v.get<std::string>();
    } catch (const json::exception&) {
        out.warning = true;
    }
    return out;
}

}  // namespace batchflip
