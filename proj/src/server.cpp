#include <httplib.h>

#include "qda/emit.hpp"
#include "qda/error.hpp"
#include "qda/service.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

namespace {

int status_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::BadRequest:
        case ErrorKind::InvalidArgument:
        case ErrorKind::UnsupportedFormat: return 400;
        case ErrorKind::NotFound: return 404;
        case ErrorKind::NotReady: return 409;
        case ErrorKind::QueueFull:
        case ErrorKind::BackendUnavailable: return 503;
        default: return 500;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    json err{{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
    if (e.kind() == ErrorKind::BadRequest) err["valid_methods"] = method_names();
    if (e.kind() == ErrorKind::QueueFull) res.set_header("Retry-After", "5");
    send_json(res, status_for(e.kind()), {{"error", err}});
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        send_error(res, e);
    } catch (const json::exception& e) {
        send_error(res, Error(ErrorKind::BadRequest, std::string("malformed JSON: ") + e.what()));
    } catch (const std::exception& e) {
        send_error(res, Error(ErrorKind::ContractViolation, e.what()));
    }
}

/// Multipart form: method, output_format, custom_instruction, and either a
/// `file` part (with optional declared_kind) or one of text, url, transcript.
JobRequest multipart_request(const httplib::Request& req) {
    auto field = [&](const char* name) {
        return req.has_file(name) ? req.get_file_value(name).content : std::string();
    };
    json body{{"method", field("method")}};
    if (auto v = field("output_format"); !v.empty()) body["output_format"] = v;
    if (auto v = field("custom_instruction"); !v.empty()) body["custom_instruction"] = v;
    if (req.has_file("file")) {
        const auto f = req.get_file_value("file");
        std::string kind = field("declared_kind");
        if (kind.empty()) kind = kind_from_filename(f.filename);
        body["source"] = {{"type", "file-upload"}, {"filename", f.filename}, {"declared_kind", kind}, {"content", f.content}};
        return parse_job_request(body);
    }
    if (req.has_file("text")) {
        body["source"] = {{"type", "inline-text"}, {"text", field("text")}};
    } else if (req.has_file("url")) {
        body["source"] = {{"type", "url"}, {"url", field("url")}};
    } else if (req.has_file("transcript")) {
        body["source"] = {{"type", "transcript"}, {"text", field("transcript")}};
    } else {
        throw Error(ErrorKind::BadRequest, "multipart submission needs a file, text, url or transcript part");
    }
    return parse_job_request(body);
}

}  // namespace

void install_routes(httplib::Server& server, JobManager& jobs, const std::optional<std::filesystem::path>& static_dir) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    server.Get("/v1/healthz", [&jobs](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"jobs", jobs.size()}});
    });

    server.Get("/v1/methods", [](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& m : method_catalog()) out.push_back(to_json(m));
        send_json(res, 200, out);
    });

    server.Post("/v1/jobs", [&jobs](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const JobRequest r = req.is_multipart_form_data() ? multipart_request(req)
                                                              : parse_job_request(json::parse(req.body));
            const std::string id = jobs.submit(r);
            res.set_header("Location", "/v1/jobs/" + id);
            send_json(res, 202,
                      {{"job_id", id},
                       {"state", "queued"},
                       {"links",
                        {{"self", "/v1/jobs/" + id},
                         {"events", "/v1/jobs/" + id + "/events"},
                         {"result", "/v1/jobs/" + id + "/result"}}}});
        });
    });

    server.Get(R"(/v1/jobs/([A-Za-z0-9_-]+))", [&jobs](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, to_json(jobs.get(req.matches[1]))); });
    });

    server.Get(R"(/v1/jobs/([A-Za-z0-9_-]+)/events)", [&jobs](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto log = jobs.events(req.matches[1]);
            auto seen = std::make_shared<std::size_t>(0);
            res.set_chunked_content_provider("application/x-ndjson",
                                             [log, seen](std::size_t, httplib::DataSink& sink) {
                                                 const auto lines =
                                                     log->wait_after(*seen, std::chrono::milliseconds(250));
                                                 for (const auto& l : lines) {
                                                     if (!sink.write(l.data(), l.size())) return false;
                                                 }
                                                 *seen += lines.size();
                                                 if (lines.empty() && log->closed() &&
                                                     log->snapshot().size() == *seen) {
                                                     sink.done();
                                                 }
                                                 return sink.is_writable();
                                             });
        });
    });

    server.Get(R"(/v1/jobs/([A-Za-z0-9_-]+)/result)", [&jobs](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            OutputFormat format = OutputFormat::OutputArea;
            if (req.has_param("format")) {
                const auto f = parse_output_format(req.get_param_value("format"));
                if (!f) {
                    throw Error(ErrorKind::UnsupportedFormat,
                                "unknown format '" + req.get_param_value("format") + "'; use csv, report or json");
                }
                format = *f;
            } else {
                format = jobs.get(id).request.output_format;
            }
            auto [bytes, type] = jobs.result(id, format);
            res.set_header("Content-Disposition", "attachment; filename=\"" + id + "." +
                                                      std::string(file_extension(format)) + "\"");
            res.status = 200;
            res.set_content(bytes, type);
        });
    });

    if (static_dir) {
        if (!server.set_mount_point("/", static_dir->string())) {
            throw Error(ErrorKind::InvalidArgument, "static directory '" + static_dir->string() + "' does not exist");
        }
    }
}

}  // namespace qda
