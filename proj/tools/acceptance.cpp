// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Runs offline against local stubs.

#include <httplib.h>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "qda/agents.hpp"
#include "qda/emit.hpp"
#include "qda/error.hpp"
#include "qda/ingest.hpp"
#include "qda/pipelines.hpp"
#include "qda/service.hpp"
#include "qda/text.hpp"
#include "stub_server.hpp"

using namespace qda;
using nlohmann::json;
using qda::testing::StubServer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

fs::path fixture_dir() {
    if (const char* d = std::getenv("QDA_FIXTURE_DIR")) return d;
    return QDA_FIXTURE_DIR;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &n, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < n; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::size_t published_stage_count(Method m) {
    switch (m) {
        case Method::Thematic: return 6;
        case Method::Narrative: return 4;
        case Method::Content: return 3;
        case Method::Discourse: return 3;
        case Method::GroundedTheory: return 5;
    }
    return 0;
}

const Method kMethods[] = {Method::Thematic, Method::Narrative, Method::Content, Method::Discourse,
                           Method::GroundedTheory};

// ---------------------------------------------------------------------------
// Local stand-ins for GitHub and the conversation page

class Stubs {
public:
    Stubs() {
        const std::string issue = read_file(fixture_dir() / "github/issue.json");
        const json comments = json::parse(read_file(fixture_dir() / "github/comments.json"));
        const std::string page = read_file(fixture_dir() / "conversation.html");
        github_.server().Get("/repos/lumen-dev/lumen-cli/issues/418",
                             [issue](const httplib::Request&, httplib::Response& res) {
                                 res.set_content(issue, "application/json");
                             });
        github_.server().Get("/repos/lumen-dev/lumen-cli/issues/418/comments",
                             [comments](const httplib::Request&, httplib::Response& res) {
                                 res.set_content(comments.dump(), "application/json");
                             });
        web_.server().Get("/thread/cars-old-town", [page](const httplib::Request&, httplib::Response& res) {
            res.set_content(page, "text/html; charset=utf-8");
        });
        github_.start();
        web_.start();
    }

    FetchConfig fetch() const {
        FetchConfig c;
        c.github_api_base = github_.base();
        c.timeout_ms = 10000;
        return c;
    }
    std::string page_url() const { return web_.base() + "/thread/cars-old-town"; }

private:
    StubServer github_;
    StubServer web_;
};

// ---------------------------------------------------------------------------
// The five Table 1 rows

struct Row {
    std::string name;
    Method method;
    SourceSpec source;
    OutputFormat format;
};

std::vector<Row> table_rows(const Stubs& stubs) {
    return {
        {"github-thread/thematic/csv", Method::Thematic, GitHubLink{"https://github.com/lumen-dev/lumen-cli/issues/418"},
         OutputFormat::Csv},
        {"news-text/content/output-area", Method::Content, InlineText{read_file(fixture_dir() / "news_article.txt")},
         OutputFormat::OutputArea},
        {"story-upload/narrative/output-area", Method::Narrative,
         FileUpload{"short_story.txt", read_file(fixture_dir() / "short_story.txt"), "txt"}, OutputFormat::OutputArea},
        {"conversation-link/discourse/report", Method::Discourse, WebLink{stubs.page_url()}, OutputFormat::DocReport},
        {"interview-transcript/grounded-theory/output-area", Method::GroundedTheory,
         Transcript{read_file(fixture_dir() / "interview_transcript.txt"), MarkerMode::Auto}, OutputFormat::OutputArea},
    };
}

struct Artifact {
    std::string name;
    Document document;
    AnalysisResult result;
    std::string bytes;            // in the row's stated format
    std::map<std::string, std::string> all;  // every format, for hashing
    ValidationReport report;
};

std::vector<Artifact> run_table(const Stubs& stubs) {
    std::vector<Artifact> out;
    for (const Row& row : table_rows(stubs)) {
        Artifact a;
        a.name = row.name;
        a.document = ingest(row.source, stubs.fetch());
        AnalysisRequest req;
        req.method = row.method;
        req.document = a.document;
        req.output_format = row.format;
        a.result = run(req);
        a.report = validate_result(a.result, a.document);
        a.bytes = emit(a.result, row.format, &a.document);
        for (OutputFormat f : {OutputFormat::Csv, OutputFormat::OutputArea, OutputFormat::DocReport}) {
            a.all[std::string(to_string(f))] = emit(a.result, f, &a.document);
        }
        out.push_back(std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome topology() {
    Outcome o;
    for (Method m : kMethods) {
        const auto g = plan(m);
        if (g.stages.size() != published_stage_count(m)) {
            o.fail(std::string(to_string(m)) + " has " + std::to_string(g.stages.size()) + " stages");
        }
        if (role_sequence(m).size() != published_stage_count(m)) o.fail(std::string(to_string(m)) + " role sequence");
    }
    return o;
}

Outcome table_matrix(const Stubs& stubs, std::vector<Artifact>& keep) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        keep = run_table(stubs);
    } catch (const std::exception& e) {
        o.fail(std::string("run failed: ") + e.what());
        return o;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& a : keep) {
        if (!a.report.ok) o.fail(a.name + " does not validate");
        if (a.bytes.empty()) o.fail(a.name + " emitted nothing");
    }
    if (keep.size() != 5) o.fail("expected five rows");
    // format-specific sanity on the stated outputs
    if (keep.size() == 5) {
        if (keep[0].bytes.rfind(kCsvHeader, 0) != 0) o.fail("row 1 is not CSV");
        if (keep[3].bytes.find("## Broader Context") == std::string::npos) o.fail("row 4 report lacks sections");
        for (int i : {1, 2, 4}) {
            if (!(parse_result_json(keep[i].bytes) == keep[i].result)) o.fail(keep[i].name + " JSON does not round-trip");
        }
    }
    if (secs >= 60.0) o.fail("took " + std::to_string(secs) + " s");
    o.detail = o.pass ? std::to_string(keep.size()) + " rows in " + std::to_string(secs).substr(0, 5) + " s" : o.detail;
    return o;
}

Outcome determinism(const Stubs& stubs, const std::vector<Artifact>& first) {
    Outcome o;
    std::vector<Artifact> second;
    try {
        second = run_table(stubs);
    } catch (const std::exception& e) {
        o.fail(std::string("second run failed: ") + e.what());
        return o;
    }
    if (second.size() != first.size()) {
        o.fail("row count differs");
        return o;
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
        for (const auto& [fmt, bytes] : first[i].all) {
            if (sha256_hex(bytes) != sha256_hex(second[i].all.at(fmt))) o.fail(first[i].name + " " + fmt + " hash differs");
        }
    }
    return o;
}

std::string random_document(std::mt19937& rng) {
    static const std::vector<std::string> words{
        "deploy", "build",  "cache",  "team",    "review", "merge",  "latency", "budget", "users",  "crash",
        "logs",   "config", "docs",   "feature", "test",   "bug",    "release", "window", "caf\xC3\xA9", "na\xC3\xAFve",
        "the",    "and",    "of",     "to",      "we",     "it",     "was",     "never",  "always", "late"};
    std::uniform_int_distribution<int> paras(1, 5), sentences(1, 4), len(3, 12);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::bernoulli_distribution speaker(0.2);
    std::string doc;
    const int np = paras(rng);
    for (int p = 0; p < np; ++p) {
        if (p) doc += "\n\n";
        const int ns = sentences(rng);
        for (int s = 0; s < ns; ++s) {
            if (s) doc += ' ';
            const int nw = len(rng);
            for (int w = 0; w < nw; ++w) {
                std::string word = words[pick(rng)];
                if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
                doc += (w ? " " : "") + word;
            }
            doc += speaker(rng) ? "?" : ".";
        }
    }
    return doc;
}

/// The properties, checked directly on the result rather than through validate_result.
std::string integrity_problem(const AnalysisResult& r, const Document& d) {
    std::set<int> segs;
    for (const auto& s : d.segments) segs.insert(s.id);
    std::set<std::string> codes, subs, cats, members;
    for (const auto& c : r.codes) {
        codes.insert(c.id);
        if (c.supporting_segments.empty()) return "code " + c.id + " cites no segment";
        for (int s : c.supporting_segments) {
            if (!segs.count(s)) return "code " + c.id + " cites missing segment " + std::to_string(s);
        }
    }
    for (const auto& s : r.subcategories) {
        subs.insert(s.id);
        if (s.member_codes.empty()) return "subcategory " + s.id + " is empty";
        for (const auto& m : s.member_codes) {
            if (!codes.count(m)) return "subcategory " + s.id + " names missing code " + m;
        }
    }
    for (const auto& c : r.categories) {
        cats.insert(c.id);
        if (c.members.empty()) return "category " + c.id + " is empty";
        for (const auto& m : c.members) {
            if (!codes.count(m) && !subs.count(m)) return "category " + c.id + " names missing member " + m;
        }
    }
    for (const auto& t : r.themes) {
        for (const auto& m : t.member_categories) {
            if (!cats.count(m)) return "theme " + t.id + " names missing category " + m;
        }
    }
    for (const auto& p : r.patterns) {
        for (int s : p.evidence) {
            if (!segs.count(s)) return "pattern " + p.id + " cites missing segment";
        }
    }
    if (r.method == Method::GroundedTheory) {
        if (!r.core_concept) return "grounded result lacks a core concept";
        if (r.core_concept->linked_categories.empty()) return "core concept links no category";
        for (const auto& c : r.core_concept->linked_categories) {
            if (!cats.count(c)) return "core concept links missing category " + c;
        }
    }
    if (r.stage_trace.size() != published_stage_count(r.method)) return "stage trace length mismatch";
    return "";
}

Outcome integrity(std::vector<std::pair<AnalysisResult, Document>>& sample) {
    Outcome o;
    std::mt19937 rng(418);
    int runs = 0, good = 0;
    for (Method m : kMethods) {
        for (int i = 0; i < 200; ++i) {
            ++runs;
            const std::string raw = random_document(rng);
            try {
                const Document d = ingest(InlineText{raw});
                AnalysisRequest req;
                req.method = m;
                req.document = d;
                const AnalysisResult r = run(req);
                const std::string why = integrity_problem(r, d);
                if (!why.empty()) {
                    o.fail(std::string(to_string(m)) + " trial " + std::to_string(i) + ": " + why);
                    continue;
                }
                ++good;
                if (i < 20) sample.emplace_back(r, d);
            } catch (const std::exception& e) {
                o.fail(std::string(to_string(m)) + " trial " + std::to_string(i) + " threw: " + e.what());
            }
        }
    }
    o.detail = o.pass ? std::to_string(good) + "/" + std::to_string(runs) + " results intact" : o.detail;
    return o;
}

Outcome parser_robustness() {
    Outcome o;
    std::mt19937 rng(1000);
    const std::vector<std::string> pieces{
        "{", "}", "[", "]", ",", ":", "\"", "'", "codes", "label", "segments", "summary", "patterns", "statement",
        "evidence", "0", "3", "-1", "1e400", "```json\n", "```", "\n", " ", "\xE2\x80\x9C", "\xE2\x80\x9D", "\\",
        "\\u00", "\xC3", "null", "true", "cat", "{\"codes\":[{\"label\":\"a\",\"segments\":[0]}]}", "prose here. "};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 60);
    std::uniform_int_distribution<int> byte(0, 255);
    int payloads = 0, typed = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        const std::size_t n = len(rng);
        for (std::size_t k = 0; k < n; ++k) {
            if (k % 7 == 6) s += static_cast<char>(byte(rng));
            else s += pieces[pick(rng)];
        }
        const AgentRole role = kAllRoles[static_cast<std::size_t>(i) % std::size(kAllRoles)];
        try {
            parse_agent_output(role, s);
            ++payloads;
        } catch (const AgentOutputError& e) {
            if (e.kind() != ErrorKind::AgentOutputUnparseable && e.kind() != ErrorKind::SchemaViolation) {
                o.fail("untyped error kind on input " + std::to_string(i));
            }
            ++typed;
        } catch (const std::exception& e) {
            o.fail("input " + std::to_string(i) + " raised " + e.what());
        }
    }
    // the three specified repair examples
    auto codes_of = [](std::string_view raw) {
        return std::get<payload::CodeSet>(parse_agent_output(AgentRole::Coder, raw)).codes;
    };
    try {
        const auto wf = codes_of("Here you go.\n```json\n{\"codes\":[{\"label\":\"cat\",\"segments\":[0]}]}\n```");
        if (wf.size() != 1 || wf[0].label != "cat" || wf[0].supporting_segments != std::vector<int>{0}) {
            o.fail("well-formed example");
        }
        if (codes_of(R"({"codes":[{"label":"cat","segments":[0]},]})") != wf) o.fail("trailing-comma example");
    } catch (const std::exception& e) {
        o.fail(std::string("repair example threw: ") + e.what());
    }
    try {
        parse_agent_output(AgentRole::Coder, "I cannot help with that.");
        o.fail("prose parsed");
    } catch (const AgentOutputError& e) {
        if (e.kind() != ErrorKind::AgentOutputUnparseable) o.fail("prose gave the wrong kind");
    }
    if (payloads + typed != 1000) o.fail("fuzz accounting");
    o.detail = o.pass ? std::to_string(payloads) + " payloads, " + std::to_string(typed) + " typed errors" : o.detail;
    return o;
}

using Tuple = std::tuple<std::string, std::string, std::string, std::vector<std::string>, std::vector<int>>;

/// Tuples straight from the hierarchy, independent of the emitter.
std::vector<Tuple> tuples_of(const AnalysisResult& r) {
    std::vector<Tuple> out;
    for (const auto& c : r.codes) {
        std::string sub_id, sub, cat_id, cat;
        for (const auto& s : r.subcategories) {
            if (std::count(s.member_codes.begin(), s.member_codes.end(), c.id)) {
                sub_id = s.id;
                sub = s.label;
                break;
            }
        }
        for (const auto& k : r.categories) {
            const bool has_code = std::count(k.members.begin(), k.members.end(), c.id) > 0;
            const bool has_sub = !sub_id.empty() && std::count(k.members.begin(), k.members.end(), sub_id) > 0;
            if (has_code || has_sub) {
                cat_id = k.id;
                cat = k.label;
                break;
            }
        }
        std::vector<std::string> themes;
        for (const auto& t : r.themes) {
            if (!cat_id.empty() && std::count(t.member_categories.begin(), t.member_categories.end(), cat_id)) {
                themes.push_back(t.label);
            }
        }
        std::sort(themes.begin(), themes.end());
        out.emplace_back(c.label, sub, cat, themes, c.supporting_segments);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = s.find(sep, pos);
        out.push_back(s.substr(pos, next - pos));
        if (next == std::string::npos) break;
        pos = next + sep.size();
    }
    return out;
}

std::vector<Tuple> tuples_from_csv(const std::string& csv) {
    const auto rows = parse_csv(csv);
    std::vector<Tuple> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 6) throw std::runtime_error("row with " + std::to_string(r.size()) + " fields");
        auto themes = split(r[3], "; ");
        std::sort(themes.begin(), themes.end());
        std::vector<int> segs;
        for (const auto& s : split(r[4], ";")) segs.push_back(std::stoi(s));
        out.emplace_back(r[0], r[1], r[2], themes, segs);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Outcome csv_round_trip(const std::vector<Artifact>& table, const std::vector<std::pair<AnalysisResult, Document>>& sample) {
    Outcome o;
    std::vector<const AnalysisResult*> all;
    for (const auto& a : table) all.push_back(&a.result);
    for (const auto& s : sample) all.push_back(&s.first);
    int rows = 0;
    for (const auto* r : all) {
        try {
            const auto got = tuples_from_csv(to_csv(*r));
            if (got != tuples_of(*r)) o.fail(std::string(to_string(r->method)) + " result " + r->doc_id + " loses tuples");
            rows += static_cast<int>(got.size());
        } catch (const std::exception& e) {
            o.fail(std::string("CSV did not parse: ") + e.what());
        }
    }
    o.detail = o.pass ? std::to_string(all.size()) + " results, " + std::to_string(rows) + " rows" : o.detail;
    return o;
}

Outcome oracle_agreement() {
    Outcome o;
    // Hand-run oracle on "the cat sat on the mat. the cat ran.":
    // non-stopword tokens cat(2) sat mat ran; frequency desc then lexicographic.
    const std::vector<std::string> codes{"cat", "mat", "ran", "sat"};
    // groups of three in order: [cat mat ran] [sat]
    const std::vector<std::string> groups{"cat-group", "sat-group"};
    const std::string summary = "the cat sat on the mat.";

    const std::string golden = std::string(text::trim(read_file(fixture_dir() / "golden/cat_thematic.json")));
    const AnalysisResult g = parse_result_json(golden);
    std::vector<std::string> got_codes, got_groups;
    for (const auto& c : g.codes) got_codes.push_back(c.label);
    for (const auto& s : g.subcategories) got_groups.push_back(s.label);
    if (got_codes != codes) o.fail("golden codes differ from the oracle");
    if (got_groups != groups) o.fail("golden groups differ from the oracle");
    if (g.summary != summary) o.fail("golden summary differs from the oracle");
    if (g.stage_trace.size() != 6) o.fail("golden trace is not six stages");

    AnalysisRequest req;
    req.method = Method::Thematic;
    req.document = ingest(InlineText{"the cat sat on the mat. the cat ran."});
    const AnalysisResult live = run(req);
    if (to_output_area(live) != golden) o.fail("live mock run differs from the golden fixture");
    return o;
}

int rank_of(const json& ev) {
    const std::string s = ev.at("state");
    if (s == "queued") return 0;
    if (s == "ingesting") return 1;
    if (s == "running") return 2 + ev.value("stage_index", 0);
    if (s == "done" || s == "failed") return 1000;
    return -1;
}

Outcome service_contract() {
    Outcome o;
    ServiceConfig cfg;
    cfg.workers = 2;
    JobManager jobs(cfg);
    httplib::Server server;
    install_routes(server, jobs, std::nullopt);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    struct Stop {
        httplib::Server& s;
        std::thread& t;
        ~Stop() {
            s.stop();
            t.join();
        }
    } stop{server, th};

    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);
    const std::string story = read_file(fixture_dir() / "short_story.txt");
    const std::string story_b64 = base64_encode(story);
    const std::map<Method, json> sources{
        {Method::Thematic, {{"type", "inline-text"}, {"text", "the cat sat on the mat. the cat ran."}}},
        {Method::Narrative, {{"type", "file-upload"}, {"filename", "short_story.txt"}, {"declared_kind", "txt"},
                             {"content_base64", story_b64}}},
        {Method::Content, {{"type", "inline-text"}, {"text", read_file(fixture_dir() / "news_article.txt")}}},
        {Method::Discourse, {{"type", "inline-text"}, {"text", "We must act now. They never listen to us."}}},
        {Method::GroundedTheory,
         {{"type", "transcript"}, {"text", read_file(fixture_dir() / "interview_transcript.txt")}}},
    };
    std::size_t checked = 0;
    for (Method m : kMethods) {
        const std::string name(to_string(m));
        const json body{{"method", name}, {"source", sources.at(m)}, {"output_format", "json"}};
        auto post = cli.Post("/v1/jobs", body.dump(), "application/json");
        if (!post || post->status != 202) {
            o.fail(name + " submit failed");
            continue;
        }
        const std::string id = json::parse(post->body).at("job_id");
        auto events = cli.Get("/v1/jobs/" + id + "/events");
        if (!events || events->status != 200) {
            o.fail(name + " event stream failed");
            continue;
        }
        int last = -1;
        std::vector<std::string> states;
        std::size_t stage_done = 0;
        std::istringstream lines(events->body);
        for (std::string line; std::getline(lines, line);) {
            if (line.empty()) continue;
            const json ev = json::parse(line);
            if (ev.value("type", "") == "stage" && ev.value("status", "") == "done") ++stage_done;
            if (ev.value("type", "") != "state") continue;
            const int r = rank_of(ev);
            if (r < last) o.fail(name + " state went backwards at " + ev.dump());
            last = r;
            ++checked;
            states.push_back(ev.at("state"));
        }
        if (states.empty() || states.front() != "queued" || states.back() != "done") {
            o.fail(name + " did not run queued..done");
        }
        if (stage_done != published_stage_count(m)) o.fail(name + " streamed " + std::to_string(stage_done) + " stage completions");
        auto result = cli.Get("/v1/jobs/" + id + "/result");
        if (!result || result->status != 200) {
            o.fail(name + " result unavailable");
            continue;
        }
        const AnalysisResult r = parse_result_json(result->body);
        const auto snap = jobs.get(id);
        if (r.method != m || !snap.document || !validate_result(r, *snap.document).ok) o.fail(name + " result invalid");
        auto csv = cli.Get("/v1/jobs/" + id + "/result?format=csv");
        if (!csv || csv->body != to_csv(r)) o.fail(name + " CSV differs from the JSON result");
    }
    auto missing = cli.Get("/v1/jobs/job-999999");
    if (!missing || missing->status != 404 ||
        json::parse(missing->body).at("error").at("kind") != "NotFound") {
        o.fail("unknown job is not NotFound");
    }
    try {
        jobs.get("job-999999");
        o.fail("JobManager returned an unknown job");
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotFound) o.fail("unknown job raised the wrong kind");
    }
    o.detail = o.pass ? "5 methods, " + std::to_string(checked) + " state transitions in order" : o.detail;
    return o;
}

}  // namespace

int main() {
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    std::unique_ptr<Stubs> stubs;
    std::vector<Artifact> table;
    std::vector<std::pair<AnalysisResult, Document>> sample;

    criteria.emplace_back("pipeline topology 6/4/3/3/5", [] { return topology(); });
    criteria.emplace_back("Table 1 matrix", [&] {
        stubs = std::make_unique<Stubs>();
        return table_matrix(*stubs, table);
    });
    criteria.emplace_back("mock determinism", [&] {
        if (table.empty()) return Outcome{false, "no first run to compare"};
        return determinism(*stubs, table);
    });
    criteria.emplace_back("referential integrity, 200 documents per method", [&] { return integrity(sample); });
    criteria.emplace_back("parser robustness", [] { return parser_robustness(); });
    criteria.emplace_back("CSV round-trip", [&] { return csv_round_trip(table, sample); });
    criteria.emplace_back("oracle agreement on the cat corpus", [] { return oracle_agreement(); });
    criteria.emplace_back("service contract", [] { return service_contract(); });

    int failed = 0;
    int n = 0;
    for (auto& [name, check] : criteria) {
        ++n;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.fail(std::string("threw: ") + e.what());
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name;
        if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
        std::cout << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
