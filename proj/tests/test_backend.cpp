#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "qda/backend.hpp"
#include "qda/error.hpp"
#include "stub_server.hpp"
#include "support.hpp"

using namespace qda;
using nlohmann::json;
using qda::testing::kCatCorpus;
using qda::testing::StubServer;

namespace {

const char* const kKeyVar = "QDA_TEST_BACKEND_KEY";

std::string chat_body(const std::string& content) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}}
        .dump();
}

BackendConfig http_config(const StubServer& stub) {
    BackendConfig c;
    c.kind = BackendKind::Http;
    c.endpoint_url = stub.base() + "/v1/chat/completions";
    c.api_key_env_var = kKeyVar;
    c.model_name = "test-model";
    c.retry.base_backoff_ms = 1;
    c.retry.max_backoff_ms = 5;
    c.timeout_ms = 10000;
    return c;
}

CompletionRequest request_for(AgentRole role, std::string content) {
    CompletionRequest r;
    r.role = role;
    r.system_instruction = "system";
    r.user_content = std::move(content);
    return r;
}

StagePayload mock_parse(AgentRole role, const StagePayload& input) {
    const auto prompt = render_prompt(role, input);
    CompletionRequest r;
    r.role = role;
    r.system_instruction = prompt.system_instruction;
    r.user_content = prompt.user_content;
    return parse_agent_output(role, mock_complete(r).text);
}

std::vector<std::string> labels(const std::vector<Code>& codes) {
    std::vector<std::string> out;
    for (const auto& c : codes) out.push_back(c.label);
    return out;
}

struct KeyEnv {
    KeyEnv() { ::setenv(kKeyVar, "sekret", 1); }
    ~KeyEnv() { ::unsetenv(kKeyVar); }
};

}  // namespace

TEST_CASE("http backend retries 500, 500 and succeeds on the third attempt") {
    KeyEnv env;
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) {
            res.status = 500;
            res.set_content("boom", "text/plain");
            return;
        }
        res.set_content(chat_body("hello"), "application/json");
    });
    stub.start();
    const auto out = complete(request_for(AgentRole::Coder, "x"), http_config(stub));
    CHECK(out.text == "hello");
    CHECK(out.finish_reason == FinishReason::Complete);
    CHECK(calls == 3);
}

TEST_CASE("http backend gives up after max_attempts") {
    KeyEnv env;
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 503;
    });
    stub.start();
    try {
        complete(request_for(AgentRole::Coder, "x"), http_config(stub));
        FAIL("expected BackendUnavailable");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BackendUnavailable);
    }
    CHECK(calls == 3);
}

TEST_CASE("401 is an AuthFailure after one attempt") {
    KeyEnv env;
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 401;
    });
    stub.start();
    try {
        complete(request_for(AgentRole::Coder, "x"), http_config(stub));
        FAIL("expected AuthFailure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AuthFailure);
    }
    CHECK(calls == 1);
}

TEST_CASE("missing key variable is an AuthFailure without a request") {
    ::unsetenv(kKeyVar);
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response&) { ++calls; });
    stub.start();
    CHECK_THROWS_AS(complete(request_for(AgentRole::Coder, "x"), http_config(stub)), Error);
    CHECK(calls == 0);
}

TEST_CASE("request carries the bearer token, model and two messages") {
    KeyEnv env;
    StubServer stub;
    std::string auth;
    json body;
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        body = json::parse(req.body);
        res.set_content(chat_body("ok"), "application/json");
    });
    stub.start();
    BackendConfig c = http_config(stub);
    c.role_models[AgentRole::Summarizer] = "summary-model";
    complete(request_for(AgentRole::Coder, "payload"), c);
    CHECK(auth == "Bearer sekret");
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.0);
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "payload");
    complete(request_for(AgentRole::Summarizer, "payload"), c);
    CHECK(body["model"] == "summary-model");
}

TEST_CASE("retry-after is honored on 429") {
    KeyEnv env;
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls == 1) {
            res.status = 429;
            res.set_header("Retry-After", "1");
            return;
        }
        res.set_content(chat_body("later"), "application/json");
    });
    stub.start();
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(complete(request_for(AgentRole::Coder, "x"), http_config(stub)).text == "later");
    CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(900));
}

TEST_CASE("in-flight requests never exceed the configured cap") {
    KeyEnv env;
    StubServer stub;
    std::atomic<int> now{0}, peak{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int n = ++now;
        int p = peak.load();
        while (n > p && !peak.compare_exchange_weak(p, n)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(60));
        --now;
        res.set_content(chat_body("ok"), "application/json");
    });
    stub.start();
    BackendConfig c = http_config(stub);
    c.max_in_flight = 2;
    auto backend = make_backend(c);
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&] { backend->complete(request_for(AgentRole::Coder, "x")); });
    }
    for (auto& t : threads) t.join();
    CHECK(peak == 2);
}

TEST_CASE("config validation") {
    BackendConfig c;
    c.kind = BackendKind::Http;
    CHECK_THROWS_AS(validate(c), Error);
    c.endpoint_url = "not a url";
    c.api_key_env_var = "X";
    CHECK_THROWS_AS(validate(c), Error);
    c.endpoint_url = "http://127.0.0.1:1/v1";
    CHECK_NOTHROW(validate(c));
    c.retry.max_attempts = 0;
    CHECK_THROWS_AS(validate(c), Error);
    CompletionRequest r;
    CHECK_THROWS_AS(validate(r), Error);
    r.user_content = "x";
    r.temperature = 2.0;
    CHECK_THROWS_AS(validate(r), Error);
}

TEST_CASE("mock coder ranks cat, mat, ran, sat on the cat corpus") {
    const auto out = std::get<payload::CodeSet>(mock_parse(AgentRole::Coder, payload::SummaryText{"the cat sat on the mat.", {{0, kCatCorpus}}, {}}));
    CHECK(labels(out.codes) == std::vector<std::string>{"cat", "mat", "ran", "sat"});
    for (const auto& c : out.codes) CHECK(c.supporting_segments == std::vector<int>{0});
}

TEST_CASE("mock coder on raw content without markers") {
    const auto r = mock_complete(request_for(AgentRole::Coder, kCatCorpus));
    const auto out = std::get<payload::CodeSet>(parse_agent_output(AgentRole::Coder, r.text));
    CHECK(labels(out.codes) == std::vector<std::string>{"cat", "mat", "ran", "sat"});
}

TEST_CASE("mock coder caps at ten codes and points at the first containing segment") {
    payload::SummaryText in{"alpha.", {{0, "alpha beta gamma delta epsilon zeta."}, {1, "eta theta iota kappa lambda mu nu xi beta."}}, {}};
    const auto out = std::get<payload::CodeSet>(mock_parse(AgentRole::Coder, in));
    REQUIRE(out.codes.size() == 10);
    CHECK(out.codes[0].label == "beta");
    CHECK(out.codes[0].supporting_segments == std::vector<int>{0});
    for (const auto& c : out.codes) {
        if (c.label == "kappa") CHECK(c.supporting_segments == std::vector<int>{1});
    }
}

TEST_CASE("mock summarizer returns a single sentence verbatim") {
    const std::string sentence = "The harbor froze for the first time in a century.";
    const auto out = std::get<payload::SummaryText>(mock_parse(AgentRole::Summarizer, payload::RawText{{{0, sentence}}}));
    CHECK(out.summary == sentence);
}

TEST_CASE("mock summarizer takes first sentences and caps at five") {
    payload::RawText in;
    for (int i = 0; i < 7; ++i) {
        in.segments.push_back({i, "Lead " + std::to_string(i) + ". Tail " + std::to_string(i) + "."});
    }
    const auto out = std::get<payload::SummaryText>(mock_parse(AgentRole::Summarizer, in));
    CHECK(out.summary == "Lead 0. Lead 1. Lead 2. Lead 3. Lead 4.");
}

TEST_CASE("mock subcategorizer groups four codes into threes") {
    payload::CodeSet in;
    in.sources = {{0, "a b c d"}};
    int n = 1;
    for (const char* l : {"a", "b", "c", "d"}) {
        in.codes.push_back({"code-" + std::to_string(n++), l, "", {0}, ""});
    }
    const auto out = std::get<payload::GroupedCodes>(mock_parse(AgentRole::SubCategorizer, in));
    REQUIRE(out.subcategories.size() == 2);
    CHECK(out.subcategories[0].label == "a-group");
    CHECK(out.subcategories[0].member_codes == std::vector<std::string>{"code-1", "code-2", "code-3"});
    CHECK(out.subcategories[1].label == "d-group");
    CHECK(out.subcategories[1].member_codes == std::vector<std::string>{"code-4"});
}

TEST_CASE("mock is a pure function of role and content") {
    for (AgentRole role : kAllRoles) {
        const auto r = request_for(role, kCatCorpus);
        CHECK(mock_complete(r).text == mock_complete(r).text);
    }
    auto a = request_for(AgentRole::Coder, kCatCorpus);
    auto b = a;
    b.system_instruction = "something else entirely";
    CHECK(mock_complete(a).text == mock_complete(b).text);
}

TEST_CASE("mock rejects an unknown role") {
    auto r = request_for(static_cast<AgentRole>(999), "x");
    try {
        mock_complete(r);
        FAIL("expected UnknownRole");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnknownRole);
    }
}

TEST_CASE("mock backend through make_backend") {
    auto backend = make_backend({});
    CHECK(backend->kind() == BackendKind::Mock);
    const auto r = request_for(AgentRole::Coder, kCatCorpus);
    CHECK(backend->complete(r).text == mock_complete(r).text);
    CHECK(backend->complete(r).usage.input_chars == std::string("system").size() + std::string(kCatCorpus).size());
}
