#include "qda/backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "qda/error.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

std::string_view to_string(FinishReason f) noexcept {
    switch (f) {
        case FinishReason::Complete: return "complete";
        case FinishReason::Truncated: return "truncated";
        case FinishReason::Error: return "error";
    }
    return "error";
}

std::string_view to_string(BackendKind k) noexcept {
    return k == BackendKind::Http ? "http" : "mock";
}

std::optional<BackendKind> parse_backend_kind(std::string_view name) noexcept {
    const std::string n = text::ascii_lower(text::trim(name));
    if (n == "http") return BackendKind::Http;
    if (n == "mock") return BackendKind::Mock;
    return std::nullopt;
}

void validate(const BackendConfig& config) {
    if (config.retry.max_attempts < 1) {
        throw Error(ErrorKind::InvalidArgument, "retry.max_attempts must be at least 1");
    }
    if (config.retry.base_backoff_ms < 0 || config.timeout_ms <= 0) {
        throw Error(ErrorKind::InvalidArgument, "backoff and timeout must be non-negative and positive");
    }
    if (config.max_in_flight < 1 || config.max_in_flight > 1024) {
        throw Error(ErrorKind::InvalidArgument, "max_in_flight must be within 1..1024");
    }
    if (config.kind == BackendKind::Http) {
        if (!config.endpoint_url || config.endpoint_url->empty()) {
            throw Error(ErrorKind::InvalidArgument, "http backend requires endpoint_url");
        }
        if (!config.api_key_env_var || config.api_key_env_var->empty()) {
            throw Error(ErrorKind::InvalidArgument, "http backend requires api_key_env_var");
        }
        http::Url url;
        if (!http::parse_url(*config.endpoint_url, url)) {
            throw Error(ErrorKind::InvalidArgument, "endpoint_url is not an absolute http(s) URL");
        }
    }
}

void validate(const CompletionRequest& request) {
    if (request.user_content.empty()) {
        throw Error(ErrorKind::InvalidArgument, "completion request has empty user content");
    }
    if (request.max_output_chars == 0) {
        throw Error(ErrorKind::InvalidArgument, "max_output_chars must be positive");
    }
    if (!(request.temperature >= 0.0 && request.temperature <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "temperature must lie in [0, 1]");
    }
}

CompletionResponse MockBackend::complete(const CompletionRequest& request) {
    validate(request);
    return mock_complete(request);
}

HttpBackend::HttpBackend(BackendConfig config, std::shared_ptr<http::Transport> transport)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : http::default_transport()),
      in_flight_(config_.max_in_flight) {
    validate(config_);
}

std::string HttpBackend::request_body(const CompletionRequest& request) const {
    std::string model = config_.model_name.value_or("default");
    if (auto it = config_.role_models.find(request.role); it != config_.role_models.end()) {
        model = it->second;
    }
    // roughly four characters per token
    const auto max_tokens = static_cast<std::int64_t>((request.max_output_chars + 3) / 4);
    json body{{"model", model},
              {"messages",
               json::array({{{"role", "system"}, {"content", request.system_instruction}},
                            {{"role", "user"}, {"content", request.user_content}}})},
              {"temperature", request.temperature},
              {"max_tokens", max_tokens}};
    return body.dump();
}

namespace {

CompletionResponse parse_chat_response(const std::string& body, const CompletionRequest& request) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorKind::ContractViolation, "backend returned a non-JSON body");
    }
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw Error(ErrorKind::ContractViolation, "backend response has no choices");
    }
    const json& choice = (*choices)[0];
    const auto msg = choice.find("message");
    if (msg == choice.end() || !msg->is_object()) {
        throw Error(ErrorKind::ContractViolation, "backend choice has no message");
    }
    CompletionResponse out;
    if (auto c = msg->find("content"); c != msg->end() && c->is_string()) {
        out.text = c->get<std::string>();
    } else if (c == msg->end() || !c->is_null()) {
        throw Error(ErrorKind::ContractViolation, "backend message content is not a string");
    }
    std::string reason = "stop";
    if (auto f = choice.find("finish_reason"); f != choice.end() && f->is_string()) {
        reason = f->get<std::string>();
    }
    if (reason == "length") {
        out.finish_reason = FinishReason::Truncated;
    } else if (reason == "stop" || reason == "end_turn" || reason == "tool_calls") {
        out.finish_reason = FinishReason::Complete;
    } else {
        out.finish_reason = FinishReason::Error;
    }
    if (out.finish_reason == FinishReason::Complete && out.text.empty()) {
        out.finish_reason = FinishReason::Error;
    }
    out.usage.input_chars =
        text::code_point_count(request.system_instruction) + text::code_point_count(request.user_content);
    out.usage.output_chars = text::code_point_count(out.text);
    return out;
}

int retry_after_ms(const http::Response& r) {
    const std::string v = r.header("retry-after");
    if (v.empty()) {
        return -1;
    }
    char* end = nullptr;
    const long secs = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || secs < 0) {
        return -1;
    }
    return static_cast<int>(std::min<long>(secs, 3600) * 1000);
}

}  // namespace

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
    validate(request);
    const char* key = std::getenv(config_.api_key_env_var->c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(ErrorKind::AuthFailure, "environment variable " + *config_.api_key_env_var + " is not set");
    }
    http::Request req;
    req.method = "POST";
    req.url = *config_.endpoint_url;
    req.headers["authorization"] = std::string("Bearer ") + key;
    req.headers["content-type"] = "application/json";
    req.body = request_body(request);
    req.timeout_ms = config_.timeout_ms;

    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        http::Response res;
        {
            in_flight_.acquire();
            struct Release {
                std::counting_semaphore<1024>& s;
                ~Release() { s.release(); }
            } release{in_flight_};
            res = transport_->send(req);
        }
        if (res.status >= 200 && res.status < 300) {
            return parse_chat_response(res.body, request);
        }
        if (res.status == 401 || res.status == 403) {
            throw Error(ErrorKind::AuthFailure, "backend rejected credentials (HTTP " + std::to_string(res.status) + ")");
        }
        const bool transient = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
        if (!transient) {
            throw Error(ErrorKind::ContractViolation, "backend rejected the request (HTTP " +
                                                          std::to_string(res.status) + "): " +
                                                          std::string(text::utf8_prefix(res.body, 200)));
        }
        last_error = res.status == 0 ? res.error : "HTTP " + std::to_string(res.status);
        if (attempt == config_.retry.max_attempts) {
            break;
        }
        int wait = retry_after_ms(res);
        if (wait < 0) {
            const double backoff = config_.retry.base_backoff_ms * std::pow(2.0, attempt - 1);
            wait = static_cast<int>(std::min<double>(backoff, config_.retry.max_backoff_ms));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(wait));
    }
    throw Error(ErrorKind::BackendUnavailable, "backend unavailable after " +
                                                   std::to_string(config_.retry.max_attempts) +
                                                   " attempt(s): " + last_error);
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config, std::shared_ptr<http::Transport> transport) {
    validate(config);
    if (config.kind == BackendKind::Mock) {
        return std::make_shared<MockBackend>();
    }
    return std::make_shared<HttpBackend>(config, std::move(transport));
}

CompletionResponse complete(const CompletionRequest& request, const BackendConfig& config) {
    return make_backend(config)->complete(request);
}

}  // namespace qda
