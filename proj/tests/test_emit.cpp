#include <doctest.h>

#include <random>
#include <regex>

#include "qda/emit.hpp"
#include "qda/error.hpp"
#include "qda/pipelines.hpp"
#include "support.hpp"

using namespace qda;
using qda::testing::doc_from;
using qda::testing::fixture;
using qda::testing::kCatCorpus;
using qda::testing::read_file;

namespace {

AnalysisResult mock_run(Method m, std::string_view text = kCatCorpus) {
    AnalysisRequest req;
    req.method = m;
    req.document = doc_from(text);
    return run(req);
}

AnalysisResult golden() {
    return parse_result_json(text::trim(read_file(fixture("golden/cat_thematic.json"))));
}

std::vector<std::string> h2_headings(const std::string& md) {
    std::vector<std::string> out;
    for (const auto& line : text::split(md, '\n')) {
        if (line.rfind("## ", 0) == 0) out.push_back(line.substr(3));
    }
    return out;
}

}  // namespace

TEST_CASE("golden thematic run exports the hand-composed CSV") {
    const std::string theme = "mock ThemeSynthesizer: the cat sat on the mat. the cat ran.";
    const std::string expected = "code,subcategory,category,theme,supporting_segments,excerpt\n"
                                 "cat,cat-group,cat-group-group," + theme + ",0,the cat sat\n"
                                 "mat,cat-group,cat-group-group," + theme + ",0,the mat. the\n"
                                 "ran,cat-group,cat-group-group," + theme + ",0,cat ran.\n"
                                 "sat,sat-group,cat-group-group," + theme + ",0,cat sat on\n";
    CHECK(to_csv(golden()) == expected);
    CHECK(to_csv(golden()) == to_csv(golden()));
}

TEST_CASE("CSV quoting follows RFC 4180") {
    AnalysisResult r;
    r.method = Method::Content;
    r.codes = {{"code-1", "say \"hi\", ok", "", {0, 3}, "line one\nline two"},
               {"code-2", "plain", "", {2}, "x"}};
    r.categories = {{"cat-1", "greetings, mostly", {"code-1", "code-2"}}};
    r.themes = {{"theme-1", "A", "", {"cat-1"}}, {"theme-2", "B", "", {"cat-1"}}};
    const std::string csv = to_csv(r);
    CHECK(csv == "code,subcategory,category,theme,supporting_segments,excerpt\n"
                 "\"say \"\"hi\"\", ok\",,\"greetings, mostly\",A; B,0;3,\"line one\nline two\"\n"
                 "plain,,\"greetings, mostly\",A; B,2,x\n");
    const auto rows = read_csv(csv);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == CsvRow{"say \"hi\", ok", "", "greetings, mostly", "A; B", {0, 3}, "line one\nline two"});
}

TEST_CASE("rows follow numeric code id order") {
    AnalysisResult r;
    r.method = Method::Content;
    for (int i : {10, 2, 1}) r.codes.push_back({"code-" + std::to_string(i), "c" + std::to_string(i), "", {0}, ""});
    const auto rows = read_csv(to_csv(r));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].code == "c1");
    CHECK(rows[1].code == "c2");
    CHECK(rows[2].code == "c10");
}

TEST_CASE("empty coding exports the header only") {
    AnalysisResult r;
    r.method = Method::Thematic;
    CHECK(to_csv(r) == "code,subcategory,category,theme,supporting_segments,excerpt\n");
    CHECK(read_csv(to_csv(r)).empty());
    CHECK(to_csv(mock_run(Method::Discourse)) == std::string(kCsvHeader) + "\n");
}

TEST_CASE("CSV reader rejects malformed input") {
    CHECK_THROWS_AS(read_csv("a,b\n"), Error);
    CHECK_THROWS_AS(read_csv(std::string(kCsvHeader) + "\nx,y\n"), Error);
    CHECK_THROWS_AS(read_csv(std::string(kCsvHeader) + "\na,b,c,d,1;x,f\n"), Error);
    CHECK_THROWS_AS(parse_csv("\"open"), Error);
    CHECK_THROWS_AS(parse_csv("a\"b"), Error);
    CHECK(parse_csv("a,b\r\nc,\"d\"\"e\"") == std::vector<std::vector<std::string>>{{"a", "b"}, {"c", "d\"e"}});
    CHECK(parse_csv("x,\n") == std::vector<std::vector<std::string>>{{"x", ""}});
}

TEST_CASE("property: CSV round-trip recovers the hierarchy tuples") {
    std::mt19937 rng(5);
    const std::string alphabet = "ab ,\"\n;x\xC3\xA9";
    auto word = [&] {
        std::string s;
        const int n = static_cast<int>(rng() % 8);
        for (int i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
        if (s.size() >= 2 && static_cast<unsigned char>(s.back()) == 0xC3) s.pop_back();
        return s;
    };
    for (int trial = 0; trial < 300; ++trial) {
        AnalysisResult r;
        r.method = Method::Thematic;
        const int nc = static_cast<int>(rng() % 6);
        const int ns = 1 + static_cast<int>(rng() % 3);
        for (int s = 0; s < ns; ++s) r.subcategories.push_back({"subcat-" + std::to_string(s + 1), word(), {}});
        r.categories.push_back({"cat-1", word(), {}});
        for (int s = 0; s < ns; ++s) r.categories[0].members.push_back(r.subcategories[s].id);
        r.themes.push_back({"theme-1", word(), "", {"cat-1"}});
        for (int c = 0; c < nc; ++c) {
            Code code{"code-" + std::to_string(c + 1), word(), "", {}, word()};
            for (int k = 0, m = static_cast<int>(rng() % 4); k < m; ++k) code.supporting_segments.push_back(rng() % 50);
            r.codes.push_back(code);
            r.subcategories[rng() % ns].member_codes.push_back(code.id);
        }
        // oracle: walk the hierarchy by hand
        std::vector<CsvRow> expected;
        for (const auto& c : r.codes) {
            std::string sub;
            for (const auto& s : r.subcategories)
                for (const auto& m : s.member_codes)
                    if (m == c.id) sub = s.label;
            expected.push_back({c.label, sub, r.categories[0].label, r.themes[0].label, c.supporting_segments,
                                c.supporting_excerpt});
        }
        CHECK(read_csv(to_csv(r)) == expected);
    }
}

TEST_CASE("discourse report has exactly the three fixed sections") {
    const AnalysisResult r = mock_run(Method::Discourse);
    const std::string md = to_report(r);
    CHECK(h2_headings(md) == std::vector<std::string>{"Key Patterns", "Language Analysis", "Broader Context"});
    CHECK(md.rfind("# Discourse Analysis Report\n", 0) == 0);
    CHECK(md.find("(segments S0)") != std::string::npos);
}

TEST_CASE("grounded theory report ends with the core concept") {
    const AnalysisResult r = mock_run(Method::GroundedTheory);
    REQUIRE(r.core_concept.has_value());
    const std::string md = to_report(r);
    const auto h = h2_headings(md);
    CHECK(h == std::vector<std::string>{"Codes", "Categories", "Patterns", "Themes", "Core Concept"});
    const auto at = md.find("## Core Concept");
    CHECK(md.find(text::trim(r.core_concept->theory_narrative).substr(0, 20), at) != std::string::npos);
}

TEST_CASE("report sections follow each method's result shape") {
    CHECK(h2_headings(to_report(golden())) ==
          std::vector<std::string>{"Summary", "Codes", "Subcategories", "Categories", "Themes"});
    CHECK(h2_headings(to_report(mock_run(Method::Narrative))) ==
          std::vector<std::string>{"Summary", "Codes", "Subcategories", "Categories"});
    CHECK(h2_headings(to_report(mock_run(Method::Content))) ==
          std::vector<std::string>{"Summary", "Codes", "Categories", "Themes", "Patterns"});
}

TEST_CASE("every code in the report cites its segments") {
    const AnalysisResult r = golden();
    const std::string md = to_report(r);
    for (const auto& c : r.codes) {
        const std::string line = "- **" + c.label + "** (" + c.id + ") (segments S0)";
        CHECK(md.find(line) != std::string::npos);
    }
    CHECK(md.find("  > the cat sat\n") != std::string::npos);
}

TEST_CASE("empty coding report shows the placeholder") {
    AnalysisResult r;
    r.method = Method::Thematic;
    r.doc_id = "doc-0";
    r.summary = "Nothing to code.";
    const std::string md = to_report(r);
    CHECK(md.find("## Codes\n\nNo codes identified.\n") != std::string::npos);
}

TEST_CASE("report title block uses document metadata but never the fetch time") {
    Document d = doc_from("A sentence.");
    d.metadata = {{"title", "A *bold* title"}, {"origin", "https://example.com/x"}, {"fetched_at", "2026-01-01"}};
    const AnalysisResult r = mock_run(Method::Narrative, "A sentence.");
    const std::string md = to_report(r, &d);
    CHECK(md.find("- Title: A \\*bold\\* title\n") != std::string::npos);
    CHECK(md.find("- Origin: https://example.com/x\n") != std::string::npos);
    CHECK(md.find("2026-01-01") == std::string::npos);
    CHECK(md == to_report(r, &d));
}

TEST_CASE("markdown escaping keeps user text inert") {
    AnalysisResult r;
    r.method = Method::Narrative;
    r.summary = "# not a heading\n\n- not a list <script>";
    const std::string md = to_report(r);
    CHECK(md.find("\\# not a heading") != std::string::npos);
    CHECK(md.find("\\- not a list \\<script\\>") != std::string::npos);
    CHECK(h2_headings(md).size() == 4);
}

TEST_CASE("output area is the canonical JSON and round-trips") {
    const std::string bytes = to_output_area(golden());
    CHECK(bytes == std::string(text::trim(read_file(fixture("golden/cat_thematic.json")))));
    CHECK(to_output_area(parse_result_json(bytes)) == bytes);
    for (Method m : {Method::Content, Method::Discourse, Method::GroundedTheory}) {
        const AnalysisResult r = mock_run(m);
        CHECK(parse_result_json(to_output_area(r)) == r);
        CHECK(emit(r, OutputFormat::OutputArea) == to_output_area(r));
        CHECK(emit(r, OutputFormat::Csv) == to_csv(r));
        CHECK(emit(r, OutputFormat::DocReport) == to_report(r));
    }
    CHECK(content_type(OutputFormat::Csv).rfind("text/csv", 0) == 0);
    CHECK(file_extension(OutputFormat::DocReport) == "md");
}
