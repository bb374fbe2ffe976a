#include <doctest.h>

#include <atomic>
#include <mutex>
#include <random>
#include <set>

#include "qda/error.hpp"
#include "qda/pipelines.hpp"
#include "support.hpp"

using namespace qda;
using qda::testing::doc_from;

namespace {

/// Backend whose replies come from a callback; records every request.
class ScriptedBackend final : public Backend {
public:
    using Fn = std::function<std::string(const CompletionRequest&, int call)>;
    explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}

    CompletionResponse complete(const CompletionRequest& r) override {
        int n;
        {
            std::lock_guard lock(mu_);
            requests.push_back(r);
            n = static_cast<int>(requests.size());
        }
        return {fn_(r, n), FinishReason::Complete, {}};
    }
    BackendKind kind() const noexcept override { return BackendKind::Mock; }

    std::vector<CompletionRequest> requests;

private:
    Fn fn_;
    std::mutex mu_;
};

AnalysisRequest request_for(Method m, std::string_view text) {
    AnalysisRequest r;
    r.method = m;
    r.document = doc_from(text);
    return r;
}

Document doc_with_segment_sizes(const std::vector<std::size_t>& sizes) {
    std::string text;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) text += "\n\n";
        text += std::string(sizes[i], 'a' + static_cast<char>(i % 26));
    }
    SegmentationPolicy huge{1'000'000};
    return doc_from(text, huge);
}

}  // namespace

TEST_CASE("plan yields the published stage counts") {
    CHECK(plan(Method::Thematic).stages.size() == 6);
    CHECK(plan(Method::Narrative).stages.size() == 4);
    CHECK(plan(Method::Content).stages.size() == 3);
    CHECK(plan(Method::Discourse).stages.size() == 3);
    CHECK(plan(Method::GroundedTheory).stages.size() == 5);
}

TEST_CASE("plan graphs satisfy their invariants and are deterministic") {
    for (Method m : kAllMethods) {
        const auto g = plan(m);
        CHECK(check_graph(g).empty());
        CHECK(g.result_shape == result_shape(m));
        const auto again = plan(m);
        REQUIRE(again.stages.size() == g.stages.size());
        for (std::size_t i = 0; i < g.stages.size(); ++i) {
            CHECK(again.stages[i].role == g.stages[i].role);
            CHECK(g.stages[i].retry_limit == 2);
        }
    }
    const auto d = plan(Method::Discourse);
    CHECK_FALSE(d.stages[0].parallel_group.has_value());
    REQUIRE(d.stages[1].parallel_group.has_value());
    CHECK(d.stages[1].parallel_group == d.stages[2].parallel_group);
}

TEST_CASE("check_graph flags broken graphs") {
    auto g = plan(Method::Thematic);
    std::swap(g.stages[1], g.stages[3]);
    CHECK_FALSE(check_graph(g).empty());
    auto short_g = plan(Method::Narrative);
    short_g.stages.pop_back();
    CHECK_FALSE(check_graph(short_g).empty());
    auto d = plan(Method::Discourse);
    d.stages[2].parallel_group.reset();
    CHECK_FALSE(check_graph(d).empty());
    auto r = plan(Method::Content);
    r.stages[0].retry_limit = 6;
    CHECK_FALSE(check_graph(r).empty());
}

TEST_CASE("pipeline config bounds") {
    PipelineConfig c;
    CHECK_NOTHROW(validate(c));
    c.chunk_overlap_chars = c.chunk_max_chars;
    CHECK_THROWS_AS(validate(c), Error);
    c = {};
    c.retry_limit = 6;
    CHECK_THROWS_AS(validate(c), Error);
    c.retry_limit = 5;
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("chunk: small document fits in one chunk") {
    const Document d = doc_with_segment_sizes({200, 150, 150});
    PipelineConfig c;
    const auto chunks = chunk(d, c);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].first == 0);
    CHECK(chunks[0].last == 2);
    CHECK_FALSE(chunks[0].oversize);
}

TEST_CASE("chunk: two 5000-char segments cannot overlap") {
    const Document d = doc_with_segment_sizes({5000, 5000});
    PipelineConfig c;
    const auto chunks = chunk(d, c);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].first == 0);
    CHECK(chunks[0].last == 0);
    CHECK(chunks[1].first == 1);
    CHECK(chunks[1].last == 1);
    CHECK(chunks[1].overlap == 0);
    CHECK(chunks[1].no_overlap);
}

TEST_CASE("chunk: single oversize segment") {
    const Document d = doc_with_segment_sizes({10000});
    const auto chunks = chunk(d, PipelineConfig{});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].oversize);
    CHECK(chunks[0].chars == 10000);
}

TEST_CASE("chunk: overlap by whole trailing segments") {
    // 3000 + 3000 fit, the third does not; the overlap tail is the 300-char segment
    const Document d = doc_with_segment_sizes({3000, 3000, 300, 4000});
    PipelineConfig c;
    const auto chunks = chunk(d, c);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].last == 2);
    CHECK(chunks[1].first == 2);
    CHECK(chunks[1].overlap == 1);
    CHECK(chunks[1].last == 3);
    CHECK_FALSE(chunks[1].no_overlap);
}

TEST_CASE("chunk property: non-overlap portions cover every segment once, in order") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::size_t> sizes(1 + rng() % 30);
        for (auto& s : sizes) s = 1 + rng() % 900;
        const Document d = doc_with_segment_sizes(sizes);
        PipelineConfig c;
        c.chunk_max_chars = 200 + rng() % 2000;
        c.chunk_overlap_chars = rng() % c.chunk_max_chars / 2;
        const auto chunks = chunk(d, c);
        std::size_t expect = 0;
        for (const auto& ch : chunks) {
            REQUIRE(ch.first + ch.overlap == expect);
            REQUIRE(ch.last >= expect);
            std::size_t chars = 0;
            for (std::size_t i = ch.first; i <= ch.last; ++i) chars += d.segments[i].text.size();
            CHECK(chars == ch.chars);
            if (ch.oversize) {
                CHECK(ch.first == ch.last);
            } else {
                CHECK(chars <= c.chunk_max_chars);
            }
            expect = ch.last + 1;
        }
        CHECK(expect == d.segments.size());
    }
}

TEST_CASE("thematic run over the cat corpus matches the hand-composed oracle") {
    const AnalysisRequest req = request_for(Method::Thematic, qda::testing::kCatCorpus);
    const AnalysisResult r = run(req);

    // Analyzer: first sentence of segment 0.
    REQUIRE(r.summary.has_value());
    CHECK(*r.summary == "the cat sat on the mat.");
    // Coder: non-stopword tokens by frequency then alphabetically: cat(2), mat, ran, sat.
    REQUIRE(r.codes.size() == 4);
    const std::vector<std::string> labels{"cat", "mat", "ran", "sat"};
    const std::vector<std::string> excerpts{"the cat sat", "the mat. the", "cat ran.", "cat sat on"};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.codes[i].id == "code-" + std::to_string(i + 1));
        CHECK(r.codes[i].label == labels[i]);
        CHECK(r.codes[i].supporting_segments == std::vector<int>{0});
        CHECK(r.codes[i].supporting_excerpt == excerpts[i]);
    }
    // Groups of three: [cat, mat, ran] and [sat].
    REQUIRE(r.subcategories.size() == 2);
    CHECK(r.subcategories[0] == SubCategory{"subcat-1", "cat-group", {"code-1", "code-2", "code-3"}});
    CHECK(r.subcategories[1] == SubCategory{"subcat-2", "sat-group", {"code-4"}});
    REQUIRE(r.categories.size() == 1);
    CHECK(r.categories[0] == Category{"cat-1", "cat-group-group", {"subcat-1", "subcat-2"}});
    REQUIRE(r.themes.size() == 1);
    CHECK(r.themes[0].label == "mock ThemeSynthesizer: the cat sat on the mat. the cat ran.");
    CHECK(r.themes[0].member_categories == std::vector<std::string>{"cat-1"});
    REQUIRE(r.stage_trace.size() == 6);
    const std::vector<std::string> roles{"Analyzer", "Coder", "CodeReviewer", "SubCategorizer", "Categorizer",
                                         "ThemeSynthesizer"};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(r.stage_trace[i].role == roles[i]);
        CHECK(r.stage_trace[i].stage_index == static_cast<int>(i));
        CHECK(r.stage_trace[i].attempts == 1);
    }
    CHECK(validate_result(r, req.document).ok);
}

TEST_CASE("thematic cat run equals the golden fixture") {
    const AnalysisResult r = run(request_for(Method::Thematic, qda::testing::kCatCorpus));
    const std::string golden = qda::testing::read_file(qda::testing::fixture("golden/cat_thematic.json"));
    REQUIRE_FALSE(golden.empty());
    CHECK(canonical_json(r) == std::string(text::trim(golden)));
}

TEST_CASE("run rejects an empty document") {
    AnalysisRequest req;
    req.method = Method::Narrative;
    req.document.doc_id = "doc-empty";
    try {
        run(req);
        FAIL("expected EmptyInput");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyInput);
    }
}

TEST_CASE("prose-only backend exhausts retries on the first stage") {
    auto backend = std::make_shared<ScriptedBackend>(
        [](const CompletionRequest&, int) { return std::string("I think the text is about cats."); });
    auto log = std::make_shared<EventLog>();
    RunOptions opt;
    opt.backend = backend;
    opt.events = log;
    AnalysisRequest req = request_for(Method::Thematic, qda::testing::kCatCorpus);
    try {
        run(req, opt);
        FAIL("expected StageFailed");
    } catch (const StageFailedError& e) {
        CHECK(e.kind() == ErrorKind::StageFailed);
        CHECK(e.role() == "Analyzer");
        CHECK(e.stage_index() == 0);
        CHECK(e.attempts() == 3);
        CHECK(e.last_error().find("no JSON block") != std::string::npos);
    }
    CHECK(backend->requests.size() == 3);
    const auto ev = log->snapshot();
    REQUIRE(ev.size() == 4);
    CHECK(ev[0].status == StageStatus::Started);
    CHECK(ev[1].status == StageStatus::Retrying);
    CHECK(ev[2].status == StageStatus::Retrying);
    CHECK(ev[3].status == StageStatus::Failed);
    CHECK(log->closed());
}

TEST_CASE("retry_limit override changes the attempt budget") {
    auto backend = std::make_shared<ScriptedBackend>([](const CompletionRequest&, int) { return std::string("no"); });
    RunOptions opt;
    opt.backend = backend;
    AnalysisRequest req = request_for(Method::Content, qda::testing::kCatCorpus);
    req.config.retry_limit = 0;
    CHECK_THROWS_AS(run(req, opt), StageFailedError);
    CHECK(backend->requests.size() == 1);
}

TEST_CASE("failure at stage 2 emits done, done, started, retrying x2, failed") {
    MockBackend mock;
    auto backend = std::make_shared<ScriptedBackend>([&](const CompletionRequest& r, int) {
        if (r.role == AgentRole::CodeReviewer) return std::string("```json\n{\"codes\": 5}\n```");
        return mock.complete(r).text;
    });
    auto log = std::make_shared<EventLog>();
    RunOptions opt;
    opt.backend = backend;
    opt.events = log;
    CHECK_THROWS_AS(run(request_for(Method::Thematic, qda::testing::kCatCorpus), opt), StageFailedError);
    const auto ev = log->snapshot();
    std::vector<std::pair<int, StageStatus>> got;
    for (const auto& e : ev) got.emplace_back(e.stage_index, e.status);
    const std::vector<std::pair<int, StageStatus>> want{
        {0, StageStatus::Started}, {0, StageStatus::Done},     {1, StageStatus::Started},
        {1, StageStatus::Done},    {2, StageStatus::Started},  {2, StageStatus::Retrying},
        {2, StageStatus::Retrying}, {2, StageStatus::Failed}};
    CHECK(got == want);
}

TEST_CASE("corrective retry appends the parse error and succeeds") {
    MockBackend mock;
    auto backend = std::make_shared<ScriptedBackend>([&](const CompletionRequest& r, int call) {
        if (call == 1) return std::string("Sure! Here is the summary: cats.");
        return mock.complete(r).text;
    });
    RunOptions opt;
    opt.backend = backend;
    const AnalysisResult r = run(request_for(Method::Narrative, qda::testing::kCatCorpus), opt);
    REQUIRE(backend->requests.size() == 5);
    const auto& first = backend->requests[0].user_content;
    const auto& second = backend->requests[1].user_content;
    CHECK(second.size() > first.size());
    CHECK(second.substr(0, first.size()) == first);
    CHECK(second.find("rejected") != std::string::npos);
    CHECK(r.stage_trace[0].attempts == 2);
    CHECK(r.stage_trace[1].attempts == 1);
}

TEST_CASE("a dangling member reference is retried as a schema violation") {
    MockBackend mock;
    auto backend = std::make_shared<ScriptedBackend>([&](const CompletionRequest& r, int call) {
        if (r.role == AgentRole::SubCategorizer && call == 3) {
            return std::string("```json\n{\"subcategories\":[{\"label\":\"x\",\"members\":[\"code-99\"]}]}\n```");
        }
        return mock.complete(r).text;
    });
    RunOptions opt;
    opt.backend = backend;
    const AnalysisResult r = run(request_for(Method::Narrative, qda::testing::kCatCorpus), opt);
    CHECK(r.stage_trace[2].attempts == 2);
    REQUIRE(backend->requests.size() == 5);
    CHECK(backend->requests[3].user_content.find("code-99") != std::string::npos);
}

TEST_CASE("labels are accepted as member references") {
    MockBackend mock;
    auto backend = std::make_shared<ScriptedBackend>([&](const CompletionRequest& r, int) {
        if (r.role == AgentRole::SubCategorizer) {
            return std::string(
                "```json\n{\"subcategories\":[{\"label\":\"animals\",\"members\":[\"CAT\",\"code-4\"]},"
                "{\"label\":\"things\",\"members\":[\"mat\",\"ran\",\"cat\"]}]}\n```");
        }
        return mock.complete(r).text;
    });
    RunOptions opt;
    opt.backend = backend;
    const AnalysisResult r = run(request_for(Method::Narrative, qda::testing::kCatCorpus), opt);
    REQUIRE(r.subcategories.size() == 2);
    CHECK(r.subcategories[0].member_codes == std::vector<std::string>{"code-1", "code-4"});
    // the repeated "cat" is dropped from the second group
    CHECK(r.subcategories[1].member_codes == std::vector<std::string>{"code-2", "code-3"});
}

TEST_CASE("segments outside the prompt are rejected") {
    MockBackend mock;
    auto backend = std::make_shared<ScriptedBackend>([&](const CompletionRequest& r, int call) {
        if (call == 1) {
            return std::string(
                "```json\n{\"codes\":[{\"label\":\"cat\",\"description\":\"\",\"segments\":[7],\"excerpt\":\"\"}]}\n```");
        }
        return mock.complete(r).text;
    });
    RunOptions opt;
    opt.backend = backend;
    const AnalysisResult r = run(request_for(Method::GroundedTheory, qda::testing::kCatCorpus), opt);
    CHECK(r.stage_trace[0].attempts == 2);
    CHECK(validate_result(r, request_for(Method::GroundedTheory, qda::testing::kCatCorpus).document).ok);
}

TEST_CASE("custom instruction reaches every stage") {
    auto backend = std::make_shared<ScriptedBackend>(
        [](const CompletionRequest& r, int) { return MockBackend().complete(r).text; });
    RunOptions opt;
    opt.backend = backend;
    AnalysisRequest req = request_for(Method::Content, qda::testing::kCatCorpus);
    req.custom_instruction = "Focus on animals.";
    run(req, opt);
    REQUIRE(backend->requests.size() == 3);
    for (const auto& r : backend->requests) {
        CHECK(r.system_instruction.find("Focus on animals.") != std::string::npos);
    }
    req.custom_instruction = "   ";
    CHECK_THROWS_AS(run(req, opt), Error);
}

TEST_CASE("every method yields a valid result of the declared shape") {
    const char* text =
        "Maria moved to the city in spring. She found work at a bakery near the river.\n\n"
        "The bakery owner trusted her with the morning shift. Maria learned to bake bread.\n\n"
        "By winter she had saved enough to visit her family. The river froze that year.";
    for (Method m : kAllMethods) {
        CAPTURE(to_string(m));
        const AnalysisRequest req = request_for(m, text);
        const AnalysisResult r = run(req);
        CHECK(r.stage_trace.size() == plan(m).stages.size());
        const auto report = validate_result(r, req.document);
        CHECK(report.ok);
        CHECK(report.warnings.empty());
        for (Tier t : result_shape(m)) {
            CAPTURE(to_string(t));
            switch (t) {
                case Tier::Summary: CHECK(r.summary.has_value()); break;
                case Tier::Codes: CHECK_FALSE(r.codes.empty()); break;
                case Tier::Subcategories: CHECK_FALSE(r.subcategories.empty()); break;
                case Tier::Categories: CHECK_FALSE(r.categories.empty()); break;
                case Tier::Themes: CHECK_FALSE(r.themes.empty()); break;
                case Tier::Patterns: CHECK_FALSE(r.patterns.empty()); break;
                case Tier::CoreConcept: CHECK(r.core_concept.has_value()); break;
                case Tier::DiscourseSections: CHECK(r.discourse_sections.has_value()); break;
            }
        }
    }
}

TEST_CASE("mock runs are byte-deterministic") {
    for (Method m : kAllMethods) {
        const AnalysisRequest req = request_for(m, "Alpha beta gamma. Delta alpha.\n\nGamma epsilon beta alpha.");
        CHECK(canonical_json(run(req)) == canonical_json(run(req)));
    }
}

TEST_CASE("completed thematic run emits six done events in order") {
    auto log = std::make_shared<EventLog>();
    RunOptions opt;
    opt.events = log;
    run(request_for(Method::Thematic, qda::testing::kCatCorpus), opt);
    std::vector<int> done;
    for (const auto& e : log->snapshot()) {
        if (e.status == StageStatus::Done) done.push_back(e.stage_index);
        CHECK(e.status != StageStatus::Failed);
    }
    CHECK(done == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("discourse stages 2 and 3 start after stage 1 is done and run concurrently") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    MockBackend mock;
    auto backend = std::make_shared<ScriptedBackend>([&](const CompletionRequest& r, int) {
        const int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        if (r.role != AgentRole::KeyPatternIdentifier) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
        --in_flight;
        return mock.complete(r).text;
    });
    auto log = std::make_shared<EventLog>();
    RunOptions opt;
    opt.backend = backend;
    opt.events = log;
    const auto req = request_for(Method::Discourse, "People often say home is where the heart is.");
    const AnalysisResult r = run(req, opt);
    CHECK(peak.load() == 2);
    const auto ev = log->snapshot();
    std::size_t stage0_done = ev.size();
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].stage_index == 0 && ev[i].status == StageStatus::Done) stage0_done = i;
        if (ev[i].stage_index > 0 && ev[i].status == StageStatus::Started) CHECK(i > stage0_done);
    }
    REQUIRE(r.discourse_sections.has_value());
    CHECK(r.discourse_sections->language_analysis.rfind("mock LanguageAnalyzer: ", 0) == 0);
    CHECK(r.discourse_sections->broader_context.rfind("mock ContextInterpreter: ", 0) == 0);
    CHECK(r.discourse_sections->key_patterns.size() == 1);
}

TEST_CASE("exactly one terminal event per stage") {
    for (Method m : kAllMethods) {
        auto log = std::make_shared<EventLog>();
        RunOptions opt;
        opt.events = log;
        run(request_for(m, "One two three. Four five six."), opt);
        std::map<int, int> terminal;
        for (const auto& e : log->snapshot()) {
            if (e.status == StageStatus::Done || e.status == StageStatus::Failed) ++terminal[e.stage_index];
        }
        CHECK(terminal.size() == plan(m).stages.size());
        for (const auto& [stage, n] : terminal) CHECK(n == 1);
    }
}

TEST_CASE("chunked first stage merges codes by case-insensitive label") {
    std::string text;
    for (int i = 0; i < 12; ++i) {
        if (i) text += "\n\n";
        text += "Harbor workers met at dawn" + std::string(i % 2 ? "." : "!") + " Paragraph " + std::to_string(i) +
                " mentions Harbor again and again.";
    }
    auto backend = std::make_shared<ScriptedBackend>(
        [](const CompletionRequest& r, int) { return MockBackend().complete(r).text; });
    RunOptions opt;
    opt.backend = backend;
    AnalysisRequest req = request_for(Method::GroundedTheory, text);
    req.config.chunk_max_chars = 150;
    req.config.chunk_overlap_chars = 40;
    const auto chunks = chunk(req.document, req.config);
    REQUIRE(chunks.size() > 3);
    const AnalysisResult r = run(req, opt);
    std::size_t first_stage_calls = 0;
    for (const auto& q : backend->requests) first_stage_calls += q.role == AgentRole::GroundedCoder;
    CHECK(first_stage_calls == chunks.size());
    std::set<std::string> seen;
    for (const auto& c : r.codes) CHECK(seen.insert(text::ascii_lower(c.label)).second);
    CHECK(seen.contains("harbor"));
    CHECK(validate_result(r, req.document).ok);
}

TEST_CASE("merge is idempotent") {
    payload::CodeSet cs;
    cs.codes = {{"code-1", "Cat", "", {0}, "x"}, {"code-2", "mat", "", {1}, "y"}};
    cs.sources = {{0, "a"}, {1, "b"}};
    CHECK(std::get<payload::CodeSet>(merge_payloads({cs, cs})) == cs);

    payload::SummaryText st{"one.", {{0, "a"}}, {0}};
    CHECK(std::get<payload::SummaryText>(merge_payloads({st, st})) == st);

    payload::PatternSet ps;
    ps.patterns = {{"pattern-1", "p", {0}}};
    ps.sources = {{0, "a"}};
    CHECK(std::get<payload::PatternSet>(merge_payloads({ps, ps})) == ps);

    payload::CodeSet upper;
    upper.codes = {{"code-1", "CAT", "", {2}, "z"}};
    const auto merged = std::get<payload::CodeSet>(merge_payloads({cs, upper}));
    CHECK(merged.codes.size() == 2);
    CHECK(merged.codes[0].label == "Cat");
}

TEST_CASE("stage events serialize to NDJSON") {
    StageEvent e{2, AgentRole::CodeReviewer, StageStatus::Retrying, 2, "bad"};
    const std::string line = to_ndjson(e);
    CHECK(line.back() == '\n');
    CHECK(line == "{\"attempt\":2,\"message\":\"bad\",\"role\":\"CodeReviewer\",\"stage_index\":2,\"status\":\"retrying\"}\n");
    StageEvent back = nlohmann::json::parse(line).get<StageEvent>();
    CHECK(back == e);
}

TEST_CASE("PipelineRun streams events to another thread") {
    auto handle = PipelineRun::start(request_for(Method::Narrative, qda::testing::kCatCorpus));
    std::vector<StageEvent> seen;
    while (true) {
        auto batch = handle->events()->wait_after(seen.size(), std::chrono::milliseconds(2000));
        if (batch.empty()) break;
        seen.insert(seen.end(), batch.begin(), batch.end());
    }
    const AnalysisResult r = handle->wait();
    CHECK(seen.size() == 8);
    CHECK(r.stage_trace.size() == 4);
}

TEST_CASE("mock stage trace uses the logical clock") {
    const AnalysisResult r = run(request_for(Method::Content, qda::testing::kCatCorpus));
    REQUIRE(r.stage_trace.size() == 3);
    CHECK(r.stage_trace[0].started_at == "1970-01-01T00:00:00.000Z");
    CHECK(r.stage_trace[0].finished_at == "1970-01-01T00:00:01.000Z");
    CHECK(r.stage_trace[2].started_at == "1970-01-01T00:00:04.000Z");
}
