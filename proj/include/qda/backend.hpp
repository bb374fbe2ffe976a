#pragma once

// The completion gateway agents talk to: an OpenAI-style chat-completion HTTP
// adapter and a deterministic rule-based mock used for offline runs.

#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "qda/agents.hpp"
#include "qda/http.hpp"

namespace qda {

struct CompletionRequest {
    AgentRole role = AgentRole::Analyzer;
    std::string system_instruction;
    std::string user_content;
    std::size_t max_output_chars = 16000;
    double temperature = 0.0;
};

enum class FinishReason { Complete, Truncated, Error };

std::string_view to_string(FinishReason f) noexcept;

struct Usage {
    std::size_t input_chars = 0;
    std::size_t output_chars = 0;
};

struct CompletionResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::Complete;
    Usage usage;
};

enum class BackendKind { Http, Mock };

std::string_view to_string(BackendKind k) noexcept;
std::optional<BackendKind> parse_backend_kind(std::string_view name) noexcept;

struct RetryPolicy {
    int max_attempts = 3;
    int base_backoff_ms = 500;
    int max_backoff_ms = 30000;
};

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::optional<std::string> endpoint_url;
    std::optional<std::string> api_key_env_var;
    std::optional<std::string> model_name;
    std::map<AgentRole, std::string> role_models;  // per-role overrides of model_name
    RetryPolicy retry;
    int timeout_ms = 120000;
    int max_in_flight = 4;
};

/// Throws Error(InvalidArgument) when the configuration is unusable.
void validate(const BackendConfig& config);

/// Throws Error(InvalidArgument) when the request breaks its invariants.
void validate(const CompletionRequest& request);

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    virtual BackendKind kind() const noexcept = 0;
};

class MockBackend final : public Backend {
public:
    CompletionResponse complete(const CompletionRequest& request) override;
    BackendKind kind() const noexcept override { return BackendKind::Mock; }
};

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig config, std::shared_ptr<http::Transport> transport = nullptr);

    CompletionResponse complete(const CompletionRequest& request) override;
    BackendKind kind() const noexcept override { return BackendKind::Http; }

    /// JSON body sent for a request (exposed for inspection in tests).
    std::string request_body(const CompletionRequest& request) const;

private:
    BackendConfig config_;
    std::shared_ptr<http::Transport> transport_;
    std::counting_semaphore<1024> in_flight_;
};

std::shared_ptr<Backend> make_backend(const BackendConfig& config,
                                      std::shared_ptr<http::Transport> transport = nullptr);

/// One-shot convenience over make_backend.
CompletionResponse complete(const CompletionRequest& request, const BackendConfig& config);

/// The extractive oracle. Pure function of (role, user_content).
CompletionResponse mock_complete(const CompletionRequest& request);

}  // namespace qda
