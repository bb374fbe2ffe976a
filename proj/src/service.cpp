#include "qda/service.hpp"

#include <fstream>

#include <openssl/evp.h>

#include "qda/agents.hpp"
#include "qda/emit.hpp"
#include "qda/error.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

namespace {

std::string now_iso() {
    const auto tp = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

[[noreturn]] void bad_request(const std::string& msg) {
    throw Error(ErrorKind::BadRequest, msg);
}

std::string valid_methods_text() {
    return text::join(method_names(), ", ");
}

std::string_view marker_name(MarkerMode m) {
    switch (m) {
        case MarkerMode::On: return "on";
        case MarkerMode::Off: return "off";
        case MarkerMode::Auto: break;
    }
    return "auto";
}

std::string string_field(const json& obj, const char* key, bool required = true) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) bad_request(std::string("missing field '") + key + "'");
        return {};
    }
    if (!it->is_string()) bad_request(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

void require_url(const std::string& url) {
    http::Url u;
    if (!http::parse_url(url, u)) bad_request("'" + url + "' is not an absolute http(s) URL");
}

json document_json(const Document& d) {
    json segs = json::array();
    for (const auto& s : d.segments) segs.push_back({s.id, s.begin, s.end});
    return {{"doc_id", d.doc_id}, {"text", d.text}, {"metadata", d.metadata}, {"segments", segs}};
}

Document document_from_json(const json& j, SourceSpec source) {
    std::vector<Segment> segs;
    const std::string text = j.at("text").get<std::string>();
    for (const auto& s : j.at("segments")) {
        const auto b = s.at(1).get<std::size_t>(), e = s.at(2).get<std::size_t>();
        if (b > e || e > text.size()) throw std::out_of_range("segment outside document text");
        segs.push_back({s.at(0).get<int>(), b, e, text.substr(b, e - b)});
    }
    return make_document(text, std::move(source), std::move(segs),
                         j.at("metadata").get<std::map<std::string, std::string>>());
}

json error_json(const JobError& e) {
    return {{"kind", std::string(to_string(e.kind))}, {"message", e.message}};
}

std::optional<ErrorKind> parse_error_kind(std::string_view name) {
    for (int k = 0; k <= static_cast<int>(ErrorKind::ResourceError); ++k) {
        if (to_string(static_cast<ErrorKind>(k)) == name) return static_cast<ErrorKind>(k);
    }
    return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// States

std::string_view to_string(JobState s) noexcept {
    switch (s) {
        case JobState::Queued: return "queued";
        case JobState::Ingesting: return "ingesting";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "queued";
}

int job_state_rank(JobState s, int stage_index) noexcept {
    switch (s) {
        case JobState::Queued: return 0;
        case JobState::Ingesting: return 1;
        case JobState::Running: return 2 + std::max(stage_index, 0);
        case JobState::Done:
        case JobState::Failed: return 1000;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Requests

json to_json(const JobRequest& r) {
    json source;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            source["type"] = std::string(modality_name(r.source));
            if constexpr (std::is_same_v<T, InlineText>) {
                source["text"] = s.text;
            } else if constexpr (std::is_same_v<T, FileUpload>) {
                source["filename"] = s.filename;
                source["declared_kind"] = s.declared_kind;
                source["content_base64"] = base64_encode(s.bytes);
            } else if constexpr (std::is_same_v<T, Transcript>) {
                source["text"] = s.text;
                source["markers"] = std::string(marker_name(s.markers));
            } else {
                source["url"] = s.url;
            }
        },
        r.source);
    return {{"method", std::string(to_string(r.method))},
            {"source", source},
            {"custom_instruction", r.custom_instruction},
            {"output_format", std::string(to_string(r.output_format))}};
}

JobRequest parse_job_request(const json& body) {
    if (!body.is_object()) bad_request("request body must be a JSON object");
    JobRequest r;
    const std::string method = string_field(body, "method");
    const auto m = parse_method(method);
    if (!m) bad_request("unknown method '" + method + "'; valid methods: " + valid_methods_text());
    r.method = *m;
    r.custom_instruction = string_field(body, "custom_instruction", false);
    if (const std::string f = string_field(body, "output_format", false); !f.empty()) {
        const auto of = parse_output_format(f);
        if (!of) bad_request("unknown output_format '" + f + "'; use csv, report or json");
        r.output_format = *of;
    }

    json source;
    if (body.contains("source")) {
        source = body.at("source");
        if (!source.is_object()) bad_request("'source' must be an object");
    } else if (body.contains("text")) {
        source = {{"type", "inline-text"}, {"text", body.at("text")}};
    } else if (body.contains("url")) {
        source = {{"type", "url"}, {"url", body.at("url")}};
    } else if (body.contains("transcript")) {
        source = {{"type", "transcript"}, {"text", body.at("transcript")}};
    } else {
        bad_request("missing 'source'");
    }
    const std::string type = string_field(source, "type");
    if (type == "inline-text" || type == "text") {
        r.source = InlineText{string_field(source, "text")};
    } else if (type == "transcript") {
        Transcript t{string_field(source, "text"), MarkerMode::Auto};
        const std::string markers = string_field(source, "markers", false);
        if (markers == "on") {
            t.markers = MarkerMode::On;
        } else if (markers == "off") {
            t.markers = MarkerMode::Off;
        } else if (!markers.empty() && markers != "auto") {
            bad_request("markers must be auto, on or off");
        }
        r.source = std::move(t);
    } else if (type == "web-link" || type == "github-link" || type == "url") {
        const std::string url = string_field(source, "url");
        require_url(url);
        const bool github = type == "github-link" || (type == "url" && parse_github_url(url));
        if (github) {
            if (!parse_github_url(url)) bad_request("'" + url + "' is not a GitHub issue or pull request URL");
            r.source = GitHubLink{url};
        } else {
            r.source = WebLink{url};
        }
    } else if (type == "file-upload" || type == "file") {
        FileUpload f;
        f.filename = string_field(source, "filename", false);
        f.declared_kind = string_field(source, "declared_kind", false);
        f.bytes = source.contains("content_base64") ? base64_decode(string_field(source, "content_base64"))
                                                    : string_field(source, "content");
        r.source = std::move(f);
    } else {
        bad_request("unknown source type '" + type +
                    "'; use inline-text, file-upload, web-link, github-link, url or transcript");
    }
    return r;
}

// ---------------------------------------------------------------------------
// Base64 (OpenSSL)

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view in) {
    std::string clean;
    for (char c : in) {
        if (!text::is_space(c)) clean.push_back(c);
    }
    if (clean.size() % 4 != 0) bad_request("base64 content has a length that is not a multiple of 4");
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const char c = clean[i];
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/' ||
                        (c == '=' && i + 2 >= clean.size());
        if (!ok) bad_request("base64 content contains an invalid character");
    }
    std::string out(3 * clean.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0) bad_request("base64 content is malformed");
    std::size_t len = static_cast<std::size_t>(n);
    if (!clean.empty() && clean.back() == '=') --len;
    if (clean.size() >= 2 && clean[clean.size() - 2] == '=') --len;
    out.resize(len);
    return out;
}

// ---------------------------------------------------------------------------
// Catalog

std::vector<MethodInfo> method_catalog() {
    std::vector<MethodInfo> out;
    const std::vector<std::string> modalities{"inline-text", "file-upload", "web-link", "github-link", "transcript"};
    for (const auto& name : method_names()) {
        const Method m = *parse_method(name);
        MethodInfo info{m, expected_stage_count(m), {}, {}, modalities};
        for (const auto& stage : plan(m).stages) info.roles.emplace_back(to_string(stage.role));
        for (Tier t : result_shape(m)) info.result_shape.emplace_back(to_string(t));
        out.push_back(std::move(info));
    }
    return out;
}

json to_json(const MethodInfo& m) {
    return {{"method", std::string(to_string(m.method))},
            {"display_name", std::string(display_name(m.method))},
            {"stage_count", m.stage_count},
            {"roles", m.roles},
            {"result_shape", m.result_shape},
            {"accepted_modalities", m.accepted_modalities}};
}

// ---------------------------------------------------------------------------
// JobLog

void JobLog::push(const json& event) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        lines_.push_back(event.dump() + "\n");
    }
    cv_.notify_all();
}

void JobLog::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool JobLog::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::vector<std::string> JobLog::snapshot() const {
    std::lock_guard lock(mu_);
    return lines_;
}

std::vector<std::string> JobLog::wait_after(std::size_t seen, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return lines_.size() > seen || closed_; });
    if (seen >= lines_.size()) return {};
    return {lines_.begin() + static_cast<std::ptrdiff_t>(seen), lines_.end()};
}

// ---------------------------------------------------------------------------
// Snapshots

json to_json(const JobSnapshot& job) {
    json j{{"job_id", job.job_id},
           {"method", std::string(to_string(job.request.method))},
           {"modality", std::string(modality_name(job.request.source))},
           {"output_format", std::string(to_string(job.request.output_format))},
           {"custom_instruction", job.request.custom_instruction},
           {"state", std::string(to_string(job.state))},
           {"stage_index", job.stage_index},
           {"stage_count", expected_stage_count(job.request.method)},
           {"created_at", job.created_at},
           {"updated_at", job.updated_at}};
    if (job.error) j["error"] = error_json(*job.error);
    if (job.result) j["result"] = json(*job.result);
    if (job.document) {
        j["document"] = {{"doc_id", job.document->doc_id},
                         {"segments", job.document->segments.size()},
                         {"metadata", job.document->metadata}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// JobManager

struct JobManager::Job {
    std::string id;
    JobRequest request;
    std::string created_at;
    std::string updated_at;
    JobState state = JobState::Queued;
    int stage_index = -1;
    std::optional<JobError> error;
    std::shared_ptr<const AnalysisResult> result;
    std::shared_ptr<const Document> document;
    std::shared_ptr<JobLog> log = std::make_shared<JobLog>();

    bool terminal() const { return state == JobState::Done || state == JobState::Failed; }
};

JobManager::JobManager(ServiceConfig config) : config_(std::move(config)) {
    if (config_.workers == 0) throw Error(ErrorKind::InvalidArgument, "service needs at least one worker");
    if (config_.queue_cap == 0) throw Error(ErrorKind::InvalidArgument, "queue cap must be positive");
    validate(config_.pipeline);
    if (!config_.fetch.transport) config_.fetch.transport = config_.transport;
    backend_ = config_.backend ? config_.backend : make_backend(config_.pipeline.backend, config_.transport);
    if (config_.journal_path) restore();
    for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobManager::~JobManager() {
    shutdown();
}

void JobManager::shutdown() {
    {
        std::lock_guard lock(mu_);
        if (stopping_ && workers_.empty()) return;
        stopping_ = true;
    }
    work_cv_.notify_all();
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
    // whatever never started is failed so streams close
    std::deque<std::shared_ptr<Job>> left;
    {
        std::lock_guard lock(mu_);
        left.swap(queue_);
    }
    for (auto& job : left) finish(*job, nullptr, JobError{ErrorKind::BackendUnavailable, "service shut down"});
}

std::string JobManager::submit(JobRequest request) {
    auto job = std::make_shared<Job>();
    job->request = std::move(request);
    job->created_at = job->updated_at = now_iso();
    {
        std::lock_guard lock(mu_);
        if (stopping_) throw Error(ErrorKind::BackendUnavailable, "service is shutting down");
        if (open_jobs_ >= config_.queue_cap) {
            throw Error(ErrorKind::QueueFull,
                        "job queue is full (" + std::to_string(config_.queue_cap) + " unfinished jobs)");
        }
        char id[32];
        std::snprintf(id, sizeof id, "job-%06llu", static_cast<unsigned long long>(next_id_++));
        job->id = id;
        jobs_[job->id] = job;
        ++open_jobs_;
        job->log->push({{"type", "state"}, {"state", "queued"}});
    }
    journal({{"type", "submit"}, {"job_id", job->id}, {"created_at", job->created_at}, {"request", to_json(job->request)}});
    journal({{"type", "event"}, {"job_id", job->id}, {"event", {{"type", "state"}, {"state", "queued"}}}});
    {
        std::lock_guard lock(mu_);
        queue_.push_back(job);
    }
    work_cv_.notify_one();
    return job->id;
}

std::shared_ptr<JobManager::Job> JobManager::find(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw Error(ErrorKind::NotFound, "no job with id '" + job_id + "'");
    return it->second;
}

JobSnapshot JobManager::get(const std::string& job_id) const {
    auto job = find(job_id);
    std::lock_guard lock(mu_);
    return {job->id,    job->request, job->state,  job->stage_index, job->created_at,
            job->updated_at, job->error, job->result, job->document};
}

std::shared_ptr<const JobLog> JobManager::events(const std::string& job_id) const {
    return find(job_id)->log;
}

std::pair<std::string, std::string> JobManager::result(const std::string& job_id, OutputFormat format) const {
    const JobSnapshot s = get(job_id);
    if (s.state == JobState::Failed) {
        throw Error(ErrorKind::NotReady, "job " + job_id + " failed: " + (s.error ? s.error->message : ""));
    }
    if (!s.result) {
        throw Error(ErrorKind::NotReady, "job " + job_id + " is " + std::string(to_string(s.state)));
    }
    return {emit(*s.result, format, s.document.get()), std::string(content_type(format))};
}

bool JobManager::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
    auto job = find(job_id);
    std::unique_lock lock(mu_);
    return done_cv_.wait_for(lock, timeout, [&] { return job->terminal(); });
}

std::size_t JobManager::size() const {
    std::lock_guard lock(mu_);
    return jobs_.size();
}

void JobManager::worker_loop() {
    while (true) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(mu_);
            work_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            job = queue_.front();
            queue_.pop_front();
        }
        execute(job);
    }
}

void JobManager::advance(Job& job, JobState state, int stage_index) {
    json event{{"type", "state"}, {"state", std::string(to_string(state))}};
    {
        std::lock_guard lock(mu_);
        if (job.terminal()) return;
        const int from = job_state_rank(job.state, job.stage_index);
        const int to = job_state_rank(state, stage_index);
        if (to <= from) return;  // parallel stages may start out of order
        job.state = state;
        if (state == JobState::Running) {
            job.stage_index = stage_index;
            event["stage_index"] = stage_index;
        }
        job.updated_at = now_iso();
        job.log->push(event);
    }
    journal({{"type", "event"}, {"job_id", job.id}, {"event", event}});
}

void JobManager::finish(Job& job, std::shared_ptr<const AnalysisResult> result, std::optional<JobError> error) {
    json event{{"type", "state"}, {"state", error ? "failed" : "done"}};
    if (error) event["error"] = error_json(*error);
    {
        std::lock_guard lock(mu_);
        if (job.terminal()) return;
        job.state = error ? JobState::Failed : JobState::Done;
        job.result = std::move(result);
        job.error = std::move(error);
        job.updated_at = now_iso();
        job.log->push(event);
        job.log->close();
        --open_jobs_;
    }
    journal({{"type", "event"}, {"job_id", job.id}, {"event", event}});
    if (job.result) {
        journal({{"type", "done"}, {"job_id", job.id}, {"result", json(*job.result)}});
    } else {
        journal({{"type", "failed"}, {"job_id", job.id}, {"error", error_json(*job.error)}});
    }
    done_cv_.notify_all();
}

void JobManager::execute(const std::shared_ptr<Job>& job) {
    auto push = [&](json event) {
        job->log->push(event);
        journal({{"type", "event"}, {"job_id", job->id}, {"event", std::move(event)}});
    };

    advance(*job, JobState::Ingesting);
    push({{"type", "ingest"}, {"status", "started"}});
    std::shared_ptr<const Document> doc;
    try {
        doc = std::make_shared<const Document>(ingest(job->request.source, config_.fetch));
    } catch (const Error& e) {
        push({{"type", "ingest"}, {"status", "failed"}, {"message", e.what()}});
        finish(*job, nullptr, JobError{e.kind(), e.what()});
        return;
    } catch (const std::exception& e) {
        push({{"type", "ingest"}, {"status", "failed"}, {"message", e.what()}});
        finish(*job, nullptr, JobError{ErrorKind::FetchFailed, e.what()});
        return;
    }
    {
        std::lock_guard lock(mu_);
        job->document = doc;
    }
    journal({{"type", "ingested"}, {"job_id", job->id}, {"document", document_json(*doc)}});
    push({{"type", "ingest"}, {"status", "done"}, {"segments", doc->segments.size()}, {"doc_id", doc->doc_id}});

    AnalysisRequest req;
    req.method = job->request.method;
    req.document = *doc;
    if (!text::trim(job->request.custom_instruction).empty()) req.custom_instruction = job->request.custom_instruction;
    req.output_format = job->request.output_format;
    req.config = config_.pipeline;
    RunOptions opts;
    opts.backend = backend_;
    opts.on_event = [&](const StageEvent& e) {
        if (e.status == StageStatus::Started) advance(*job, JobState::Running, e.stage_index);
        json ev = e;
        ev["type"] = "stage";
        push(std::move(ev));
    };
    try {
        auto result = std::make_shared<const AnalysisResult>(run(req, opts));
        finish(*job, std::move(result), std::nullopt);
    } catch (const Error& e) {
        finish(*job, nullptr, JobError{e.kind(), e.what()});
    } catch (const std::exception& e) {
        finish(*job, nullptr, JobError{ErrorKind::StageFailed, e.what()});
    }
}

void JobManager::journal(const json& record) {
    if (!config_.journal_path) return;
    std::lock_guard lock(journal_mu_);
    std::ofstream out(*config_.journal_path, std::ios::app | std::ios::binary);
    out << record.dump() << '\n';
}

void JobManager::restore() {
    std::ifstream in(*config_.journal_path, std::ios::binary);
    if (!in) return;
    std::vector<std::shared_ptr<Job>> order;
    std::string line;
    while (std::getline(in, line)) {
        json rec;
        try {
            rec = json::parse(line);
            const std::string type = rec.at("type").get<std::string>();
            const std::string id = rec.at("job_id").get<std::string>();
            if (type == "submit") {
                auto job = std::make_shared<Job>();
                job->id = id;
                job->request = parse_job_request(rec.at("request"));
                job->created_at = job->updated_at = rec.at("created_at").get<std::string>();
                jobs_[id] = job;
                order.push_back(job);
                unsigned long long n = 0;
                if (std::sscanf(id.c_str(), "job-%llu", &n) == 1 && n >= next_id_) next_id_ = n + 1;
                continue;
            }
            auto it = jobs_.find(id);
            if (it == jobs_.end()) continue;
            Job& job = *it->second;
            if (type == "event") {
                const json& ev = rec.at("event");
                job.log->push(ev);
                if (ev.value("type", "") == "state") {
                    const std::string s = ev.at("state").get<std::string>();
                    if (s == "ingesting") job.state = JobState::Ingesting;
                    if (s == "running") {
                        job.state = JobState::Running;
                        job.stage_index = ev.value("stage_index", job.stage_index);
                    }
                }
            } else if (type == "ingested") {
                job.document = std::make_shared<const Document>(document_from_json(rec.at("document"), job.request.source));
            } else if (type == "done") {
                job.result = std::make_shared<const AnalysisResult>(rec.at("result").get<AnalysisResult>());
                job.state = JobState::Done;
            } else if (type == "failed") {
                const json& e = rec.at("error");
                job.error = JobError{parse_error_kind(e.value("kind", "")).value_or(ErrorKind::StageFailed),
                                     e.value("message", "")};
                job.state = JobState::Failed;
            }
        } catch (const std::exception&) {
            continue;  // torn or foreign line
        }
    }
    for (auto& job : order) {
        if (job->terminal()) {
            job->log->close();
            continue;
        }
        // work in flight when the previous process stopped is not resumed
        ++open_jobs_;
        finish(*job, nullptr, JobError{ErrorKind::BackendUnavailable, "interrupted by a service restart"});
    }
}

}  // namespace qda
