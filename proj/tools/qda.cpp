// qda: run qualitative analyses from the command line or serve them over HTTP.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qda/emit.hpp"
#include "qda/error.hpp"
#include "qda/ingest.hpp"
#include "qda/pipelines.hpp"
#include "qda/service.hpp"

namespace {

using namespace qda;

enum Exit { kOk = 0, kBadArgs = 2, kIngest = 3, kStage = 4, kBackend = 5 };

struct BackendFlags {
    std::string backend = "mock";
    std::string endpoint;
    std::string model;
    std::string api_key_env = "QDA_API_KEY";
    int timeout_ms = 120000;
    int max_in_flight = 4;
    std::size_t chunk_max = 8000;
    std::size_t chunk_overlap = 200;
    int retry_limit = -1;
    std::string github_token_env = "GITHUB_TOKEN";
    std::size_t max_fetch_bytes = 2 * 1024 * 1024;

    void add(CLI::App& app) {
        app.add_option("--backend", backend, "Completion backend: mock or http")
            ->envname("QDA_BACKEND");
        app.add_option("--endpoint", endpoint, "Chat-completion endpoint URL for the http backend")
            ->envname("QDA_ENDPOINT");
        app.add_option("--model", model, "Model name sent to the http backend")->envname("QDA_MODEL");
        app.add_option("--api-key-env", api_key_env, "Name of the variable holding the API key")
            ->envname("QDA_API_KEY_ENV");
        app.add_option("--timeout-ms", timeout_ms, "Per-request backend timeout")->envname("QDA_TIMEOUT_MS");
        app.add_option("--max-in-flight", max_in_flight, "Concurrent backend requests")
            ->envname("QDA_MAX_IN_FLIGHT");
        app.add_option("--chunk-max", chunk_max, "Maximum chunk size in bytes")->envname("QDA_CHUNK_MAX_CHARS");
        app.add_option("--chunk-overlap", chunk_overlap, "Chunk overlap in bytes")->envname("QDA_CHUNK_OVERLAP_CHARS");
        app.add_option("--retry-limit", retry_limit, "Retries per stage (0-5)")->envname("QDA_RETRY_LIMIT");
        app.add_option("--github-token-env", github_token_env, "Name of the variable holding a GitHub token")
            ->envname("QDA_GITHUB_TOKEN_ENV");
        app.add_option("--max-fetch-bytes", max_fetch_bytes, "Largest accepted input")->envname("QDA_MAX_FETCH_BYTES");
    }

    PipelineConfig pipeline() const {
        PipelineConfig c;
        c.chunk_max_chars = chunk_max;
        c.chunk_overlap_chars = chunk_overlap;
        if (retry_limit >= 0) c.retry_limit = retry_limit;
        const auto kind = parse_backend_kind(backend);
        if (!kind) throw Error(ErrorKind::InvalidArgument, "unknown backend '" + backend + "'; use mock or http");
        c.backend.kind = *kind;
        if (!endpoint.empty()) c.backend.endpoint_url = endpoint;
        if (!model.empty()) c.backend.model_name = model;
        c.backend.api_key_env_var = api_key_env;
        c.backend.timeout_ms = timeout_ms;
        c.backend.max_in_flight = max_in_flight;
        validate(c);
        return c;
    }

    FetchConfig fetch() const {
        FetchConfig f;
        if (!github_token_env.empty()) f.github_token_env_var = github_token_env;
        f.max_bytes = max_fetch_bytes;
        return f;
    }
};

std::string read_path(const std::string& path) {
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int exit_for(ErrorKind k, bool ingesting) {
    switch (k) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::BadRequest: return kBadArgs;
        case ErrorKind::BackendUnavailable:
        case ErrorKind::AuthFailure: return kBackend;
        case ErrorKind::RateLimited: return ingesting ? kIngest : kBackend;
        case ErrorKind::StageFailed:
        case ErrorKind::AgentOutputUnparseable:
        case ErrorKind::SchemaViolation:
        case ErrorKind::PayloadKindMismatch:
        case ErrorKind::ContractViolation: return kStage;
        default: return ingesting ? kIngest : kStage;
    }
}

int report(const Error& e, bool ingesting) {
    std::cerr << "qda: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_for(e.kind(), ingesting);
}

struct AnalyzeFlags {
    std::string method;
    std::string text;
    std::string file;
    std::string kind;
    std::string url;
    std::string transcript;
    std::string markers = "auto";
    std::string instruction;
    std::string out = "-";
    std::string format = "csv";
    bool progress = false;
};

int analyze(const AnalyzeFlags& a, const BackendFlags& b) {
    bool ingesting = true;
    try {
        const auto method = parse_method(a.method);
        if (!method) {
            std::string names;
            for (const auto& n : method_names()) names += (names.empty() ? "" : ", ") + n;
            throw Error(ErrorKind::InvalidArgument, "unknown method '" + a.method + "'; valid methods: " + names);
        }
        const auto format = parse_output_format(a.format);
        if (!format) throw Error(ErrorKind::InvalidArgument, "unknown format '" + a.format + "'; use csv, report or json");
        const PipelineConfig config = b.pipeline();

        SourceSpec source;
        if (!a.file.empty()) {
            std::string kind = a.kind.empty() ? kind_from_filename(a.file) : a.kind;
            source = FileUpload{std::filesystem::path(a.file).filename().string(), read_path(a.file), kind};
        } else if (!a.url.empty()) {
            source = parse_github_url(a.url) ? SourceSpec(GitHubLink{a.url}) : SourceSpec(WebLink{a.url});
        } else if (!a.transcript.empty()) {
            const MarkerMode m = a.markers == "on" ? MarkerMode::On : a.markers == "off" ? MarkerMode::Off : MarkerMode::Auto;
            source = Transcript{read_path(a.transcript), m};
        } else {
            source = InlineText{a.text == "-" ? read_path("-") : a.text};
        }

        const Document doc = ingest(source, b.fetch());
        ingesting = false;

        AnalysisRequest req;
        req.method = *method;
        req.document = doc;
        if (!a.instruction.empty()) req.custom_instruction = a.instruction;
        req.output_format = *format;
        req.config = config;
        RunOptions opts;
        if (a.progress) opts.on_event = [](const StageEvent& e) { std::cerr << to_ndjson(e); };
        const AnalysisResult result = run(req, opts);
        const std::string bytes = emit(result, *format, &doc);
        if (a.out == "-") {
            std::cout << bytes;
            std::cout.flush();
        } else {
            std::ofstream out(a.out, std::ios::binary);
            if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + a.out + "'");
            out << bytes;
        }
        return kOk;
    } catch (const Error& e) {
        return report(e, ingesting);
    }
}

struct ServeFlags {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t workers = 2;
    std::size_t queue_cap = 64;
    std::string journal;
    std::string static_dir;
};

httplib::Server* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

int serve(const ServeFlags& s, const BackendFlags& b) {
    try {
        ServiceConfig cfg;
        cfg.workers = s.workers;
        cfg.queue_cap = s.queue_cap;
        cfg.pipeline = b.pipeline();
        cfg.fetch = b.fetch();
        if (!s.journal.empty()) cfg.journal_path = s.journal;
        JobManager jobs(cfg);
        httplib::Server server;
        std::optional<std::filesystem::path> static_dir;
        if (!s.static_dir.empty()) static_dir = s.static_dir;
        install_routes(server, jobs, static_dir);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        int port = s.port;
        if (port == 0) {
            port = server.bind_to_any_port(s.host);
        } else if (!server.bind_to_port(s.host, port)) {
            port = -1;
        }
        if (port < 0) throw Error(ErrorKind::InvalidArgument, "cannot listen on " + s.host + ":" + std::to_string(s.port));
        std::cerr << "qda: listening on http://" << s.host << ":" << port << "/v1 (backend " << b.backend << ")\n";
        server.listen_after_bind();
        g_server = nullptr;
        jobs.shutdown();
        return kOk;
    } catch (const Error& e) {
        return report(e, false);
    }
}

void print_methods(bool as_json) {
    const auto cat = method_catalog();
    if (as_json) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& m : cat) out.push_back(to_json(m));
        std::cout << out.dump(2) << "\n";
        return;
    }
    for (const auto& m : cat) {
        std::cout << to_string(m.method) << " (" << m.stage_count << " stages): ";
        for (std::size_t i = 0; i < m.roles.size(); ++i) std::cout << (i ? " -> " : "") << m.roles[i];
        std::cout << "\n  result: ";
        for (std::size_t i = 0; i < m.result_shape.size(); ++i) std::cout << (i ? ", " : "") << m.result_shape[i];
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Qualitative data analysis with pipelines of LLM agents"};
    app.require_subcommand(1);

    AnalyzeFlags a;
    BackendFlags b;
    auto* an = app.add_subcommand("analyze", "Analyze one input and write the result");
    an->add_option("-m,--method", a.method, "thematic, narrative, content, discourse or grounded-theory")->required();
    auto* src = an->add_option_group("source", "Input (exactly one)");
    src->add_option("--text", a.text, "Inline text ('-' reads stdin)");
    src->add_option("--file", a.file, "File to upload (txt, md, pdf, doc-text)");
    src->add_option("--url", a.url, "Web page or GitHub issue/pull request URL");
    src->add_option("--transcript", a.transcript, "Transcript file with speaker markers");
    src->require_option(1);
    an->add_option("--kind", a.kind, "Declared file kind, inferred from the extension by default");
    an->add_option("--markers", a.markers, "Transcript speaker markers")->check(CLI::IsMember({"auto", "on", "off"}));
    an->add_option("-i,--instruction", a.instruction, "Custom analysis instruction");
    an->add_option("-o,--out", a.out, "Output path ('-' for stdout)");
    an->add_option("-f,--format", a.format, "csv, report or json");
    an->add_flag("--progress", a.progress, "Print stage events to stderr as NDJSON");
    b.add(*an);

    ServeFlags s;
    BackendFlags sb;
    auto* sv = app.add_subcommand("serve", "Run the HTTP job service");
    sv->add_option("--host", s.host, "Bind address")->envname("QDA_HOST");
    sv->add_option("-p,--port", s.port, "Port (0 picks a free one)")->envname("QDA_PORT");
    sv->add_option("--workers", s.workers, "Concurrent jobs")->envname("QDA_WORKERS");
    sv->add_option("--queue-cap", s.queue_cap, "Unfinished jobs accepted")->envname("QDA_QUEUE_CAP");
    sv->add_option("--journal", s.journal, "Append-only job journal file")->envname("QDA_JOURNAL");
    sv->add_option("--static-dir", s.static_dir, "Directory served at /")->envname("QDA_STATIC_DIR");
    sb.add(*sv);

    bool methods_json = false;
    auto* me = app.add_subcommand("methods", "List the analysis methods");
    me->add_flag("--json", methods_json, "Print the catalog as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadArgs;
    }

    if (*an) return analyze(a, b);
    if (*sv) return serve(s, sb);
    print_methods(methods_json);
    return kOk;
}
