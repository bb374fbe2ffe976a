#include <doctest.h>

#include <random>

#include "qda/agents.hpp"
#include "qda/backend.hpp"
#include "qda/error.hpp"
#include "support.hpp"

using namespace qda;
using qda::testing::kCatCorpus;

namespace {

ErrorKind parse_error_kind(AgentRole role, std::string_view raw) {
    try {
        parse_agent_output(role, raw);
    } catch (const AgentOutputError& e) {
        return e.kind();
    }
    FAIL("expected an AgentOutputError");
    return ErrorKind::ContractViolation;
}

payload::CodeSet one_code(std::string_view raw) {
    return std::get<payload::CodeSet>(parse_agent_output(AgentRole::Coder, raw));
}

StagePayload sample_input(PayloadKind k) {
    const std::vector<SourceSegment> src{{0, "the cat sat on the mat."}, {1, "the cat ran."}};
    const std::vector<Code> codes{{"code-1", "cat", "", {0, 1}, "the cat"}, {"code-2", "mat", "", {0}, "the mat"}};
    const std::vector<SubCategory> subs{{"subcat-1", "cat-group", {"code-1", "code-2"}}};
    const std::vector<Category> cats{{"cat-1", "animals", {"subcat-1"}}};
    switch (k) {
        case PayloadKind::RawText: return payload::RawText{src};
        case PayloadKind::SummaryText: return payload::SummaryText{"the cat sat on the mat.", src, {0}};
        case PayloadKind::CodeSet: return payload::CodeSet{codes, src};
        case PayloadKind::GroupedCodes: return payload::GroupedCodes{subs, codes, src};
        case PayloadKind::CategorySet: return payload::CategorySet{cats, subs, codes, src};
        case PayloadKind::ThemeSet: return payload::ThemeSet{{{"theme-1", "t", "n", {"cat-1"}}}, cats, {}, src};
        case PayloadKind::PatternSet: return payload::PatternSet{{{"pattern-1", "p", {0}}}, cats, {}, codes, src};
        case PayloadKind::DiscourseSection: return payload::DiscourseSection{"analysis"};
        case PayloadKind::CoreConceptPayload: return payload::CoreConceptPayload{};
    }
    return payload::RawText{src};
}

}  // namespace

TEST_CASE("role sequences per method") {
    using R = AgentRole;
    CHECK(role_sequence(Method::Thematic) ==
          std::vector<R>{R::Analyzer, R::Coder, R::CodeReviewer, R::SubCategorizer, R::Categorizer, R::ThemeSynthesizer});
    CHECK(role_sequence(Method::Narrative).size() == 4);
    CHECK(role_sequence(Method::Content) == std::vector<R>{R::Summarizer, R::Coder, R::PatternExtractor});
    CHECK(role_sequence(Method::Discourse) ==
          std::vector<R>{R::KeyPatternIdentifier, R::LanguageAnalyzer, R::ContextInterpreter});
    CHECK(role_sequence(Method::GroundedTheory) == std::vector<R>{R::GroundedCoder, R::GroundedCategorizer,
                                                                 R::GroundedPatternAgent, R::GroundedThemeAgent,
                                                                 R::CoreCoder});
}

TEST_CASE("consecutive roles hand off compatible payload kinds") {
    for (Method m : {Method::Thematic, Method::Narrative, Method::Content, Method::GroundedTheory}) {
        const auto seq = role_sequence(m);
        CHECK(input_kind(seq.front()) == PayloadKind::RawText);
        for (std::size_t i = 1; i < seq.size(); ++i) {
            CHECK(input_kind(seq[i]) == output_kind(seq[i - 1]));
        }
    }
}

TEST_CASE("role names round-trip") {
    for (AgentRole r : kAllRoles) {
        CHECK(parse_role(to_string(r)) == r);
    }
    CHECK_FALSE(parse_role("Oracle").has_value());
}

TEST_CASE("render_prompt embeds the payload and demands the output schema") {
    const auto p = render_prompt(AgentRole::Coder, payload::SummaryText{"a summary about cats", {{0, "cats."}}, {}});
    CHECK(p.user_content.find("a summary about cats") != std::string::npos);
    CHECK(p.system_instruction.find(text::trim(output_schema_text(PayloadKind::CodeSet))) != std::string::npos);
    CHECK(p.user_content.find(segment_marker(0)) != std::string::npos);
}

TEST_CASE("custom instruction lands inside the delimited goal section") {
    const auto p = render_prompt(AgentRole::Coder, sample_input(PayloadKind::SummaryText), std::string("identify the cause"));
    const auto b = p.system_instruction.find(kGoalBegin);
    const auto e = p.system_instruction.find(kGoalEnd);
    REQUIRE(b != std::string::npos);
    REQUIRE(e != std::string::npos);
    const auto goal = p.system_instruction.find("identify the cause");
    CHECK(goal > b);
    CHECK(goal < e);
    const auto plain = render_prompt(AgentRole::Coder, sample_input(PayloadKind::SummaryText));
    CHECK(plain.system_instruction.find(kGoalBegin) == std::string::npos);
    CHECK_THROWS_AS(render_prompt(AgentRole::Coder, sample_input(PayloadKind::SummaryText), std::string("  ")), Error);
}

TEST_CASE("render_prompt rejects the wrong payload kind") {
    try {
        render_prompt(AgentRole::Coder, sample_input(PayloadKind::CategorySet));
        FAIL("expected PayloadKindMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::PayloadKindMismatch);
    }
}

TEST_CASE("rendered prompts leave no placeholders behind") {
    for (AgentRole r : kAllRoles) {
        for (const auto& goal : {std::optional<std::string>{}, std::optional<std::string>{"look for {payload}"}}) {
            const auto p = render_prompt(r, sample_input(input_kind(r)), goal);
            for (const char* ph : {"{method}", "{custom_instruction}", "{output_schema}", "{payload}"}) {
                const bool in_goal = goal && std::string_view(ph) == "{payload}";
                if (!in_goal) CHECK(p.system_instruction.find(ph) == std::string::npos);
                CHECK(p.user_content.find(ph) == std::string::npos);
            }
        }
    }
}

TEST_CASE("parse: well-formed fenced block after prose") {
    const auto cs = one_code("Here are the codes.\n```json\n{\"codes\":[{\"label\":\"cat\",\"segments\":[0]}]}\n```\n");
    REQUIRE(cs.codes.size() == 1);
    CHECK(cs.codes[0].label == "cat");
    CHECK(cs.codes[0].id == "code-1");
    CHECK(cs.codes[0].supporting_segments == std::vector<int>{0});
}

TEST_CASE("parse: the three repair rules") {
    const auto expected = one_code(R"({"codes":[{"label":"cat","segments":[0]}]})");
    SUBCASE("trailing comma") { CHECK(one_code(R"({"codes":[{"label":"cat","segments":[0]},]})") == expected); }
    SUBCASE("smart quotes") {
        CHECK(one_code("{\xE2\x80\x9C" "codes\xE2\x80\x9D:[{\xE2\x80\x9C" "label\xE2\x80\x9D:\xE2\x80\x9C" "cat\xE2\x80\x9D,"
                       "\xE2\x80\x9C" "segments\xE2\x80\x9D:[0]}]}") == expected);
    }
    SUBCASE("unterminated string and bracket") {
        CHECK(one_code("```json\n{\"codes\":[{\"label\":\"cat\",\"segments\":[0]}]\n```") == expected);
        CHECK(repair_json(R"({"a":"b)") == std::optional<std::string>(R"({"a":"b"})"));
        CHECK(repair_json("[1,2") == std::optional<std::string>("[1,2]"));
        // two unclosed brackets exceed the bound
        CHECK_FALSE(repair_json(R"({"a":[1,2)").has_value());
    }
}

TEST_CASE("parse: typed failures") {
    CHECK(parse_error_kind(AgentRole::Coder, "I cannot help with that.") == ErrorKind::AgentOutputUnparseable);
    CHECK(parse_error_kind(AgentRole::Coder, "```json\n{\"codes\": [[[[\n```") == ErrorKind::AgentOutputUnparseable);
    CHECK(parse_error_kind(AgentRole::Coder, R"({"codes":"cat"})") == ErrorKind::SchemaViolation);
    CHECK(parse_error_kind(AgentRole::Coder, R"({"codes":[{"segments":[0]}]})") == ErrorKind::SchemaViolation);
}

TEST_CASE("fenced extraction") {
    CHECK(extract_fenced_json("x ```json\n{\"a\":1}\n``` y") == std::optional<std::string>("{\"a\":1}\n"));
    CHECK(extract_fenced_json("```\n[1]") == std::optional<std::string>("[1]"));
    CHECK_FALSE(extract_fenced_json("no fence here").has_value());
    CHECK(one_code("codes follow: {\"codes\":[{\"label\":\"cat\",\"segments\":[0]}]} done").codes.size() == 1);
}

TEST_CASE("parse fuzz: 1000 strings give a payload or a typed error") {
    std::mt19937 rng(20261017);
    const std::vector<std::string> pieces{"{",     "}",      "[",       "]",        ",",     ":",      "\"",
                                          "codes", "label",  "segments", "0",       "1",     "-7",     "```json\n",
                                          "```",   " ",      "\n",      "\xE2\x80\x9C", "\xE2\x80\x9D", "null", "true",
                                          "cat",   "\\",     "\xFF",    "summary",  "1e999", "\"codes\":[{\"label\":\"x\",\"segments\":[0]}"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 40);
    int payloads = 0, typed = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        const std::size_t n = len(rng);
        for (std::size_t k = 0; k < n; ++k) s += pieces[pick(rng)];
        const AgentRole role = kAllRoles[static_cast<std::size_t>(i) % std::size(kAllRoles)];
        try {
            parse_agent_output(role, s);
            ++payloads;
        } catch (const AgentOutputError& e) {
            CHECK((e.kind() == ErrorKind::AgentOutputUnparseable || e.kind() == ErrorKind::SchemaViolation));
            ++typed;
        }
    }
    CHECK(payloads + typed == 1000);
}

TEST_CASE("every mock response parses for its role") {
    for (AgentRole r : kAllRoles) {
        const auto p = render_prompt(r, sample_input(input_kind(r)));
        CompletionRequest req;
        req.role = r;
        req.system_instruction = p.system_instruction;
        req.user_content = p.user_content;
        const StagePayload out = parse_agent_output(r, mock_complete(req).text);
        CHECK(kind_of(out) == output_kind(r));
    }
}

TEST_CASE("referenced segments cover sources and citations") {
    const auto refs = referenced_segments(sample_input(PayloadKind::CodeSet));
    CHECK(refs == std::vector<int>{0, 1});
}
