#pragma once

// The five method topologies and their execution: chunking of the first
// stage, corrective retries, cross-stage reference resolution and assembly
// of the final AnalysisResult.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qda/agents.hpp"
#include "qda/backend.hpp"
#include "qda/core_model.hpp"

namespace qda {

inline constexpr int kDefaultRetryLimit = 2;
inline constexpr int kMaxRetryLimit = 5;

struct StageSpec {
    AgentRole role = AgentRole::Analyzer;
    int retry_limit = kDefaultRetryLimit;
    std::optional<std::string> parallel_group;
};

struct PipelineGraph {
    Method method = Method::Thematic;
    std::vector<StageSpec> stages;
    std::vector<Tier> result_shape;
};

PipelineGraph plan(Method method);

/// Invariant problems of a graph (empty when well-formed).
std::vector<std::string> check_graph(const PipelineGraph& graph);

struct PipelineConfig {
    std::size_t chunk_max_chars = 8000;
    std::size_t chunk_overlap_chars = 200;
    std::optional<int> retry_limit;  // overrides every stage's limit
    BackendConfig backend;
};

/// Throws Error(InvalidArgument).
void validate(const PipelineConfig& config);

/// A contiguous run of whole segments, as indexes into Document::segments.
/// The first `overlap` segments repeat the tail of the previous chunk.
struct Chunk {
    std::size_t first = 0;
    std::size_t last = 0;  // inclusive
    std::size_t overlap = 0;
    std::size_t chars = 0;  // bytes of segment text
    bool oversize = false;
    bool no_overlap = false;

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

std::vector<Chunk> chunk(const Document& document, const PipelineConfig& config);

struct AnalysisRequest {
    Method method = Method::Thematic;
    Document document;
    std::optional<std::string> custom_instruction;
    OutputFormat output_format = OutputFormat::Csv;
    PipelineConfig config;
};

/// Throws Error(InvalidArgument) or Error(EmptyInput).
void validate(const AnalysisRequest& request);

// ---------------------------------------------------------------------------
// Progress events

enum class StageStatus { Started, Retrying, Done, Failed };

std::string_view to_string(StageStatus s) noexcept;
std::optional<StageStatus> parse_stage_status(std::string_view s) noexcept;

struct StageEvent {
    int stage_index = 0;
    AgentRole role = AgentRole::Analyzer;
    StageStatus status = StageStatus::Started;
    int attempt = 0;
    std::string message;

    friend bool operator==(const StageEvent&, const StageEvent&) = default;
};

void to_json(nlohmann::json& j, const StageEvent& e);
void from_json(const nlohmann::json& j, StageEvent& e);

/// One line of newline-delimited JSON, including the trailing '\n'.
std::string to_ndjson(const StageEvent& e);

/// Append-only, thread-safe event sequence with blocking reads.
class EventLog {
public:
    void push(StageEvent e);
    void close();
    bool closed() const;
    std::vector<StageEvent> snapshot() const;

    /// Events from index `seen` on, waiting up to `timeout` for at least one
    /// when none are available yet. Empty when closed or timed out.
    std::vector<StageEvent> wait_after(std::size_t seen, std::chrono::milliseconds timeout) const;

private:
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::vector<StageEvent> events_;
    bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Execution

struct RunOptions {
    std::shared_ptr<Backend> backend;              // built from the request config when null
    std::shared_ptr<http::Transport> transport;    // used when building an http backend
    std::shared_ptr<EventLog> events;              // optional sink, closed when the run ends
    std::function<void(const StageEvent&)> on_event;
};

/// Runs the method's pipeline. Throws StageFailedError, Error(EmptyInput),
/// backend errors as raised, or Error(ContractViolation) if the assembled
/// result does not validate.
AnalysisResult run(const AnalysisRequest& request, const RunOptions& options = {});

/// Handle over a run executing on its own thread.
class PipelineRun {
public:
    static std::shared_ptr<PipelineRun> start(AnalysisRequest request, RunOptions options = {});

    const std::shared_ptr<EventLog>& events() const noexcept { return events_; }

    /// Blocks until the run ends; rethrows its error.
    AnalysisResult wait();

private:
    std::shared_ptr<EventLog> events_;
    std::shared_future<AnalysisResult> result_;
};

/// Concatenates first-stage payloads of one kind. Codes are deduplicated by
/// case-insensitive label and patterns by statement, keeping the first.
StagePayload merge_payloads(const std::vector<StagePayload>& parts);

}  // namespace qda
