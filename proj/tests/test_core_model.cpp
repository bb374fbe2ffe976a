#include <doctest.h>

#include <random>

#include "qda/core_model.hpp"
#include "qda/error.hpp"
#include "support.hpp"

using namespace qda;
using qda::testing::doc_from;

namespace {

AnalysisResult minimal_thematic(const Document& doc) {
    AnalysisResult r;
    r.method = Method::Thematic;
    r.doc_id = doc.doc_id;
    r.summary = "Hello world.";
    r.codes = {{"code-1", "hello", "greeting", {0}, "Hello"}};
    r.subcategories = {{"subcat-1", "hello-group", {"code-1"}}};
    r.categories = {{"cat-1", "greetings", {"subcat-1"}}};
    r.themes = {{"theme-1", "openings", "people open with greetings", {"cat-1"}}};
    const char* roles[] = {"Analyzer", "Coder", "CodeReviewer", "SubCategorizer", "Categorizer", "ThemeSynthesizer"};
    for (int i = 0; i < 6; ++i) {
        r.stage_trace.push_back({i, roles[i], "t0", "t1", 1, 10, 10});
    }
    return r;
}

bool has_violation(const ValidationReport& rep, IssueKind k) {
    for (const auto& v : rep.violations) {
        if (v.kind == k) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("segment: single paragraph") {
    const auto segs = segment_document("Hello world.");
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].begin == 0);
    CHECK(segs[0].end == 12);
    CHECK(segs[0].text == "Hello world.");
}

TEST_CASE("segment: two paragraphs") {
    // "Para one." is [0,9); the blank line takes 9 and 10; "Para two." is [11,20)
    const auto segs = segment_document("Para one.\n\nPara two.");
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].begin == 0);
    CHECK(segs[0].end == 9);
    CHECK(segs[1].begin == 11);
    CHECK(segs[1].end == 20);
    CHECK(segs[1].text == "Para two.");
    CHECK(segs[1].id == 1);
}

TEST_CASE("segment: empty input") {
    for (const char* t : {"", "   \n\n  "}) {
        try {
            segment_document(t);
            FAIL("expected EmptyInput");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::EmptyInput);
        }
    }
}

TEST_CASE("segment: long paragraphs split at sentences within the cap") {
    std::string para;
    for (int i = 0; i < 40; ++i) para += "Sentence number " + std::to_string(i) + " is here. ";
    para.pop_back();
    SegmentationPolicy p;
    p.max_paragraph_chars = 100;
    const auto segs = segment_document(para, p);
    CHECK(segs.size() > 1);
    for (const auto& s : segs) {
        CHECK(s.end - s.begin <= 100);
        CHECK(s.text.back() == '.');
    }
}

TEST_CASE("segment property: segments tile the text in order") {
    std::mt19937 rng(7);
    const std::vector<std::string> words{"alpha", "beta", "gamma.", "delta!", "eps?", "\n", "\n\n", "  ", "caf\xC3\xA9"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 120), cap(10, 300);
    for (int trial = 0; trial < 300; ++trial) {
        std::string raw;
        const std::size_t n = len(rng);
        for (std::size_t i = 0; i < n; ++i) raw += words[pick(rng)] + " ";
        const std::string text = text::normalize(raw);
        if (text::trim(text).empty()) continue;
        SegmentationPolicy p;
        p.max_paragraph_chars = cap(rng);
        const auto segs = segment_document(text, p);
        REQUIRE_FALSE(segs.empty());
        std::size_t prev_end = 0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const auto& s = segs[i];
            CHECK(s.id == static_cast<int>(i));
            CHECK(s.begin >= prev_end);
            CHECK(s.end > s.begin);
            CHECK(s.text == text.substr(s.begin, s.end - s.begin));
            // gaps hold only whitespace
            CHECK(text::trim(text.substr(prev_end, s.begin - prev_end)).empty());
            prev_end = s.end;
        }
        CHECK(text::trim(text.substr(prev_end)).empty());
    }
}

TEST_CASE("documents get a content-derived id and check clean") {
    const Document a = doc_from("Para one.\n\nPara two.");
    const Document b = doc_from("Para one.\n\nPara two.");
    CHECK(a.doc_id == b.doc_id);
    CHECK(a.doc_id != doc_from("Other.").doc_id);
    CHECK(check_document(a).empty());
    CHECK(a.find_segment(1) != nullptr);
    CHECK(a.find_segment(2) == nullptr);
}

TEST_CASE("validate: minimal well-formed result") {
    const Document doc = doc_from("Hello world.");
    const auto rep = validate_result(minimal_thematic(doc), doc);
    CHECK(rep.ok);
    CHECK(rep.violations.empty());
}

TEST_CASE("validate: dangling subcategory member") {
    const Document doc = doc_from("Hello world.");
    auto r = minimal_thematic(doc);
    r.subcategories[0].member_codes = {"code-1", "code-99"};
    const auto rep = validate_result(r, doc);
    CHECK_FALSE(rep.ok);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].kind == IssueKind::DanglingReference);
}

TEST_CASE("validate: code citing a missing segment") {
    const Document doc = doc_from("Hello world.");
    auto r = minimal_thematic(doc);
    r.codes[0].supporting_segments = {3};
    CHECK(has_violation(validate_result(r, doc), IssueKind::DanglingReference));
}

TEST_CASE("validate: thematic trace of four stages") {
    const Document doc = doc_from("Hello world.");
    auto r = minimal_thematic(doc);
    r.stage_trace.resize(4);
    const auto rep = validate_result(r, doc);
    CHECK_FALSE(rep.ok);
    REQUIRE(has_violation(rep, IssueKind::StageCountMismatch));
    for (const auto& v : rep.violations) {
        if (v.kind == IssueKind::StageCountMismatch) CHECK(v.message.find('6') != std::string::npos);
    }
}

TEST_CASE("validate: tier shape and document identity") {
    const Document doc = doc_from("Hello world.");
    auto r = minimal_thematic(doc);
    r.core_concept = CoreConcept{"x", "y", {"cat-1"}};
    CHECK(has_violation(validate_result(r, doc), IssueKind::UnexpectedTier));
    r = minimal_thematic(doc);
    r.doc_id = "someone-else";
    CHECK(has_violation(validate_result(r, doc), IssueKind::DocumentMismatch));
    r = minimal_thematic(doc);
    r.categories[0].members.clear();
    CHECK(has_violation(validate_result(r, doc), IssueKind::EmptyMembers));
    r = minimal_thematic(doc);
    r.codes.push_back(r.codes[0]);
    CHECK(has_violation(validate_result(r, doc), IssueKind::DuplicateId));
}

TEST_CASE("validate: empty coding is a warning, and validation is pure") {
    const Document doc = doc_from("Hello world.");
    AnalysisResult r = minimal_thematic(doc);
    r.codes.clear();
    r.subcategories.clear();
    r.categories.clear();
    r.themes.clear();
    const auto rep = validate_result(r, doc);
    CHECK(rep.ok);
    REQUIRE_FALSE(rep.warnings.empty());
    CHECK(rep.warnings[0].kind == IssueKind::EmptyCoding);
    CHECK(validate_result(r, doc) == rep);
}

TEST_CASE("result JSON round-trips through the canonical form") {
    const Document doc = doc_from("Hello world.");
    AnalysisResult r = minimal_thematic(doc);
    r.codes[0].supporting_excerpt = "caf\xC3\xA9 \"quoted\"";
    const std::string bytes = canonical_json(r);
    CHECK(parse_result_json(bytes) == r);
    CHECK(canonical_json(parse_result_json(bytes)) == bytes);
    CHECK(bytes.find("\": ") == std::string::npos);
    CHECK_THROWS_AS(parse_result_json("{\"not\":\"a result\"}"), Error);
    CHECK_THROWS_AS(parse_result_json("nope"), Error);
}

TEST_CASE("method names and shapes") {
    CHECK(method_names() ==
          std::vector<std::string>{"thematic", "narrative", "content", "discourse", "grounded-theory"});
    CHECK(result_shape(Method::Discourse) == std::vector<Tier>{Tier::DiscourseSections});
    CHECK(result_shape(Method::GroundedTheory).back() == Tier::CoreConcept);
}
