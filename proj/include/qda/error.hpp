#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qda {

enum class ErrorKind {
    EmptyInput,
    InvalidArgument,
    UnsupportedFormat,
    DecodeError,
    ExtractionIncomplete,
    TooLarge,
    FetchFailed,
    RateLimited,
    NotAThread,
    EmptyAfterStrip,
    BackendUnavailable,
    AuthFailure,
    ContractViolation,
    UnknownRole,
    PayloadKindMismatch,
    AgentOutputUnparseable,
    SchemaViolation,
    StageFailed,
    BadRequest,
    QueueFull,
    NotFound,
    NotReady,
    ResourceError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for every failure the library reports. The kind is the
/// stable, machine-readable part; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Parse failures keep the raw completion so the retry policy can quote it.
class AgentOutputError : public Error {
public:
    AgentOutputError(ErrorKind kind, const std::string& message, std::string raw)
        : Error(kind, message), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class RateLimitedError : public Error {
public:
    RateLimitedError(const std::string& message, std::optional<int> retry_after_s)
        : Error(ErrorKind::RateLimited, message), retry_after_s_(retry_after_s) {}

    std::optional<int> retry_after_seconds() const noexcept { return retry_after_s_; }

private:
    std::optional<int> retry_after_s_;
};

class StageFailedError : public Error {
public:
    StageFailedError(std::string role, int stage_index, int attempts, std::string last_error)
        : Error(ErrorKind::StageFailed,
                "stage " + std::to_string(stage_index) + " (" + role + ") failed after " +
                    std::to_string(attempts) + " attempt(s): " + last_error),
          role_(std::move(role)),
          stage_index_(stage_index),
          attempts_(attempts),
          last_error_(std::move(last_error)) {}

    const std::string& role() const noexcept { return role_; }
    int stage_index() const noexcept { return stage_index_; }
    int attempts() const noexcept { return attempts_; }
    const std::string& last_error() const noexcept { return last_error_; }

private:
    std::string role_;
    int stage_index_;
    int attempts_;
    std::string last_error_;
};

}  // namespace qda
