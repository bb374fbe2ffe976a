#pragma once

// Job-oriented analysis service: an in-memory job registry with a worker
// pool and replayable progress streams, plus its HTTP front end under /v1.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qda/backend.hpp"
#include "qda/core_model.hpp"
#include "qda/error.hpp"
#include "qda/ingest.hpp"
#include "qda/pipelines.hpp"

namespace httplib {
class Server;
}

namespace qda {

enum class JobState { Queued, Ingesting, Running, Done, Failed };

std::string_view to_string(JobState s) noexcept;

/// Position along queued -> ingesting -> running(i) -> done|failed. A
/// transition is legal only when it does not decrease this rank.
int job_state_rank(JobState s, int stage_index = 0) noexcept;

struct JobRequest {
    Method method = Method::Thematic;
    SourceSpec source;
    std::string custom_instruction;
    OutputFormat output_format = OutputFormat::Csv;
};

struct JobError {
    ErrorKind kind = ErrorKind::StageFailed;
    std::string message;
};

struct JobSnapshot {
    std::string job_id;
    JobRequest request;
    JobState state = JobState::Queued;
    int stage_index = -1;  // highest stage started, -1 before the pipeline runs
    std::string created_at;
    std::string updated_at;
    std::optional<JobError> error;
    std::shared_ptr<const AnalysisResult> result;  // present iff done
    std::shared_ptr<const Document> document;      // present once ingested
};

/// JSON view served by GET /v1/jobs/{id}.
nlohmann::json to_json(const JobSnapshot& job);

/// Append-only NDJSON lines with blocking reads; closed when the job ends.
class JobLog {
public:
    void push(const nlohmann::json& event);
    void close();
    bool closed() const;
    std::vector<std::string> snapshot() const;
    /// Lines from index `seen` on; waits up to `timeout` when none are ready.
    std::vector<std::string> wait_after(std::size_t seen, std::chrono::milliseconds timeout) const;

private:
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::vector<std::string> lines_;
    bool closed_ = false;
};

struct MethodInfo {
    Method method;
    std::size_t stage_count;
    std::vector<std::string> roles;
    std::vector<std::string> result_shape;
    std::vector<std::string> accepted_modalities;
};

std::vector<MethodInfo> method_catalog();
nlohmann::json to_json(const MethodInfo& m);

struct ServiceConfig {
    std::size_t workers = 2;
    std::size_t queue_cap = 64;  // jobs not yet finished
    PipelineConfig pipeline;
    FetchConfig fetch;
    std::shared_ptr<Backend> backend;  // built from pipeline.backend when null
    std::shared_ptr<http::Transport> transport;
    std::optional<std::filesystem::path> journal_path;
};

class JobManager {
public:
    explicit JobManager(ServiceConfig config);
    ~JobManager();

    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    /// Throws Error(QueueFull) at the cap.
    std::string submit(JobRequest request);

    /// Throws Error(NotFound).
    JobSnapshot get(const std::string& job_id) const;
    std::shared_ptr<const JobLog> events(const std::string& job_id) const;

    /// Emitted bytes and content type. Throws Error(NotFound) or Error(NotReady).
    std::pair<std::string, std::string> result(const std::string& job_id, OutputFormat format) const;

    /// Blocks until the job is done or failed, or the timeout passes.
    bool wait(const std::string& job_id, std::chrono::milliseconds timeout) const;

    std::size_t size() const;
    const ServiceConfig& config() const noexcept { return config_; }

    /// Stops accepting work and joins the workers once running jobs end.
    void shutdown();

private:
    struct Job;

    void worker_loop();
    void execute(const std::shared_ptr<Job>& job);
    void advance(Job& job, JobState state, int stage_index = -1);
    void finish(Job& job, std::shared_ptr<const AnalysisResult> result, std::optional<JobError> error);
    void journal(const nlohmann::json& record);
    void restore();
    std::shared_ptr<Job> find(const std::string& job_id) const;

    ServiceConfig config_;
    std::shared_ptr<Backend> backend_;
    mutable std::mutex mu_;
    mutable std::condition_variable work_cv_;
    mutable std::condition_variable done_cv_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::deque<std::shared_ptr<Job>> queue_;
    std::size_t open_jobs_ = 0;
    std::uint64_t next_id_ = 1;
    bool stopping_ = false;
    std::mutex journal_mu_;
    std::vector<std::thread> workers_;
};

/// Parses a POST /v1/jobs JSON body. Throws Error(BadRequest).
JobRequest parse_job_request(const nlohmann::json& body);

/// Serializes a request in the form parse_job_request accepts.
nlohmann::json to_json(const JobRequest& request);

/// Installs the /v1 routes (and an optional static mount) on a server.
void install_routes(httplib::Server& server, JobManager& jobs,
                    const std::optional<std::filesystem::path>& static_dir = std::nullopt);

std::string base64_encode(std::string_view bytes);
/// Throws Error(BadRequest) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace qda
