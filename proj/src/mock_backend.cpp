// Deterministic stand-in for an LLM. Every rule here is a pure function of the
// role and the user content so end-to-end runs are byte-reproducible.

#include <algorithm>
#include <cstdint>
#include <map>

#include "qda/backend.hpp"
#include "qda/core_model.hpp"
#include "qda/error.hpp"
#include "qda/resources.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxCodes = 10;
constexpr std::size_t kMaxSummarySentences = 5;
constexpr std::size_t kGroupSize = 3;
constexpr std::size_t kStatementChars = 40;

struct MockInput {
    std::vector<SourceSegment> segments;
    json payload;  // first fenced JSON block of the user content, or null
};

// Segments come from «[S<id>]» markers; unmarked content is split into
// blank-line paragraphs numbered from zero.
MockInput read_input(std::string_view content) {
    MockInput in;
    const std::string open = "\xC2\xAB[S";
    const std::string close = "]\xC2\xBB";
    std::size_t pos = content.find(open);
    while (pos != std::string_view::npos) {
        std::size_t digits = pos + open.size();
        std::size_t d = digits;
        while (d < content.size() && content[d] >= '0' && content[d] <= '9') {
            ++d;
        }
        if (d == digits || content.compare(d, close.size(), close) != 0 || d - digits > 9) {
            pos = content.find(open, pos + 1);
            continue;
        }
        const int id = std::stoi(std::string(content.substr(digits, d - digits)));
        const std::size_t body = d + close.size();
        std::size_t next = content.find(open, body);
        const std::size_t end_marker = content.find(kSegmentsEndMarker, body);
        std::size_t stop = std::min(next, end_marker);
        if (stop == std::string_view::npos) {
            stop = content.size();
        }
        in.segments.push_back({id, std::string(text::trim(content.substr(body, stop - body)))});
        if (stop == end_marker) {
            next = content.find(open, end_marker);
        }
        pos = next;
    }
    if (auto block = extract_fenced_json(content)) {
        in.payload = json::parse(*block, nullptr, false);
        if (in.payload.is_discarded()) {
            in.payload = nullptr;
        }
    }
    if (in.segments.empty() && !in.payload.is_object()) {
        const std::string normalized = text::normalize(content);
        if (!normalized.empty()) {
            SegmentationPolicy whole;
            whole.max_paragraph_chars = normalized.size() + 1;
            for (const auto& s : segment_document(normalized, whole)) {
                in.segments.push_back({s.id, s.text});
            }
        }
    }
    return in;
}

// Decodes one code point at s[i]; returns its length (1 for invalid bytes,
// reported as U+FFFD).
std::size_t decode(std::string_view s, std::size_t i, std::uint32_t& cp) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c & 0xE0U) == 0xC0U ? 2 : (c & 0xF0U) == 0xE0U ? 3 : (c & 0xF8U) == 0xF0U ? 4 : 0;
    if (len == 0 || i + len > s.size() || !text::is_valid_utf8(s.substr(i, len))) {
        cp = 0xFFFD;
        return 1;
    }
    cp = len == 1 ? c : c & (0xFFU >> (len + 1));
    for (std::size_t k = 1; k < len; ++k) {
        cp = (cp << 6U) | (static_cast<unsigned char>(s[i + k]) & 0x3FU);
    }
    return len;
}

// ASCII letters plus non-ASCII code points outside the common punctuation
// and symbol blocks.
bool is_word_cp(std::uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (cp < 0xC0 || cp == 0xD7 || cp == 0xF7 || cp == 0xFFFD) {
        return false;
    }
    if ((cp >= 0x2000 && cp <= 0x2BFF) || (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFE30 && cp <= 0xFE4F) ||
        (cp >= 0xFF00 && cp <= 0xFF20)) {
        return false;
    }
    return true;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    std::size_t cur_cps = 0;
    auto flush = [&] {
        if (cur_cps >= 2) {
            out.push_back(text::ascii_lower(cur));
        }
        cur.clear();
        cur_cps = 0;
    };
    std::size_t i = 0;
    while (i < s.size()) {
        std::uint32_t cp = 0;
        const std::size_t len = decode(s, i, cp);
        if (is_word_cp(cp)) {
            cur.append(s.substr(i, len));
            ++cur_cps;
        } else {
            flush();
        }
        i += len;
    }
    flush();
    return out;
}

std::string statement(AgentRole role, const MockInput& in, std::string_view content) {
    std::string basis;
    if (!in.segments.empty()) {
        std::vector<std::string> parts;
        for (const auto& s : in.segments) {
            parts.push_back(s.text);
        }
        basis = text::collapse_whitespace(text::join(parts, " "));
    } else {
        basis = text::collapse_whitespace(content);
    }
    std::string head(text::utf8_prefix(basis, kStatementChars));
    while (!head.empty() && head.back() == ' ') {
        head.pop_back();
    }
    return "mock " + std::string(to_string(role)) + ": " + head;
}

std::optional<int> first_segment(const MockInput& in) {
    if (in.segments.empty()) {
        return std::nullopt;
    }
    return in.segments.front().id;
}

json items_of(const MockInput& in, const char* key) {
    if (in.payload.is_object()) {
        if (auto it = in.payload.find(key); it != in.payload.end() && it->is_array()) {
            return *it;
        }
    }
    return json::array();
}

std::string label_of(const json& item) {
    if (item.is_object()) {
        if (auto it = item.find("label"); it != item.end() && it->is_string()) {
            return it->get<std::string>();
        }
    }
    return "item";
}

std::string id_of(const json& item) {
    if (item.is_object()) {
        if (auto it = item.find("id"); it != item.end() && it->is_string()) {
            return it->get<std::string>();
        }
    }
    return label_of(item);
}

json group(const json& items) {
    json groups = json::array();
    for (std::size_t i = 0; i < items.size(); i += kGroupSize) {
        json members = json::array();
        for (std::size_t k = i; k < std::min(items.size(), i + kGroupSize); ++k) {
            members.push_back(id_of(items[k]));
        }
        groups.push_back({{"label", label_of(items[i]) + "-group"}, {"members", members}});
    }
    return groups;
}

json summarize(const MockInput& in) {
    std::vector<std::string> sentences;
    json ids = json::array();
    for (const auto& seg : in.segments) {
        if (sentences.size() == kMaxSummarySentences) {
            break;
        }
        const auto ranges = text::sentence_ranges(seg.text);
        if (ranges.empty()) {
            continue;
        }
        sentences.push_back(seg.text.substr(ranges[0].begin, ranges[0].size()));
        ids.push_back(seg.id);
    }
    return {{"summary", text::join(sentences, " ")}, {"segments", ids}};
}

std::string excerpt_for(const std::string& token, const SourceSegment& seg) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < seg.text.size()) {
        while (i < seg.text.size() && text::is_space(seg.text[i])) {
            ++i;
        }
        std::size_t j = i;
        while (j < seg.text.size() && !text::is_space(seg.text[j])) {
            ++j;
        }
        if (j > i) {
            words.push_back(seg.text.substr(i, j - i));
        }
        i = j;
    }
    for (std::size_t w = 0; w < words.size(); ++w) {
        const auto toks = tokenize(words[w]);
        if (std::find(toks.begin(), toks.end(), token) != toks.end()) {
            const std::size_t b = w == 0 ? 0 : w - 1;
            const std::size_t e = std::min(words.size(), w + 2);
            std::vector<std::string> window(words.begin() + static_cast<std::ptrdiff_t>(b),
                                            words.begin() + static_cast<std::ptrdiff_t>(e));
            return text::join(window, " ");
        }
    }
    return token;
}

json code(const MockInput& in) {
    const auto& stop = resources::stopwords();
    std::map<std::string, std::size_t> freq;
    std::map<std::string, std::size_t> first_seg;  // index into in.segments
    for (std::size_t s = 0; s < in.segments.size(); ++s) {
        for (auto& tok : tokenize(in.segments[s].text)) {
            if (stop.contains(tok)) {
                continue;
            }
            ++freq[tok];
            first_seg.emplace(tok, s);
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    ranked.resize(std::min(ranked.size(), kMaxCodes));
    json codes = json::array();
    for (const auto& [tok, n] : ranked) {
        const SourceSegment& seg = in.segments[first_seg.at(tok)];
        codes.push_back({{"label", tok},
                         {"description", "recurring term '" + tok + "' (" + std::to_string(n) + " occurrence" +
                                             (n == 1 ? "" : "s") + ")"},
                         {"segments", json::array({seg.id})},
                         {"excerpt", excerpt_for(tok, seg)}});
    }
    return {{"codes", codes}};
}

json review(const MockInput& in) {
    json codes = json::array();
    for (const auto& c : items_of(in, "codes")) {
        if (!c.is_object()) {
            continue;
        }
        json out{{"label", label_of(c)},
                 {"description", c.value("description", std::string())},
                 {"segments", c.value("segments", json::array())},
                 {"excerpt", c.value("excerpt", std::string())}};
        codes.push_back(std::move(out));
    }
    return {{"codes", codes}};
}

json category_ids(const MockInput& in) {
    json ids = json::array();
    for (const auto& c : items_of(in, "categories")) {
        ids.push_back(id_of(c));
    }
    return ids;
}

json patterns(const std::string& stmt, const MockInput& in) {
    json arr = json::array();
    if (auto first = first_segment(in)) {
        arr.push_back({{"statement", stmt}, {"evidence", json::array({*first})}});
    }
    return arr;
}

json themes(const std::string& stmt, const json& category_refs) {
    json arr = json::array();
    if (!category_refs.empty()) {
        arr.push_back({{"label", stmt}, {"narrative", stmt}, {"categories", category_refs}});
    }
    return arr;
}

json respond(AgentRole role, const MockInput& in, std::string_view content) {
    switch (role) {
        case AgentRole::Analyzer:
        case AgentRole::Summarizer: return summarize(in);
        case AgentRole::Coder:
        case AgentRole::GroundedCoder: return code(in);
        case AgentRole::CodeReviewer: return review(in);
        case AgentRole::SubCategorizer: return {{"subcategories", group(items_of(in, "codes"))}};
        case AgentRole::Categorizer: return {{"categories", group(items_of(in, "subcategories"))}};
        case AgentRole::GroundedCategorizer: return {{"categories", group(items_of(in, "codes"))}};
        case AgentRole::PatternExtractor: {
            const std::string stmt = statement(role, in, content);
            const json cats = group(items_of(in, "codes"));
            json labels = json::array();
            for (const auto& c : cats) {
                labels.push_back(c.at("label"));
            }
            return {{"categories", cats}, {"themes", themes(stmt, labels)}, {"patterns", patterns(stmt, in)}};
        }
        case AgentRole::KeyPatternIdentifier:
        case AgentRole::GroundedPatternAgent: return {{"patterns", patterns(statement(role, in, content), in)}};
        case AgentRole::LanguageAnalyzer:
        case AgentRole::ContextInterpreter: return {{"analysis", statement(role, in, content)}};
        case AgentRole::ThemeSynthesizer:
        case AgentRole::GroundedThemeAgent: return {{"themes", themes(statement(role, in, content), category_ids(in))}};
        case AgentRole::CoreCoder: {
            const json cats = category_ids(in);
            if (cats.empty()) {
                return {{"core_concept", nullptr}};
            }
            const std::string stmt = statement(role, in, content);
            return {{"core_concept", {{"label", stmt}, {"narrative", stmt}, {"categories", cats}}}};
        }
    }
    throw Error(ErrorKind::UnknownRole, "mock backend has no rule for this role");
}

}  // namespace

CompletionResponse mock_complete(const CompletionRequest& request) {
    const auto name = to_string(request.role);
    if (name == "Unknown") {
        throw Error(ErrorKind::UnknownRole, "mock backend has no rule for this role");
    }
    const MockInput in = read_input(request.user_content);
    const json body = respond(request.role, in, request.user_content);
    CompletionResponse out;
    out.text = "mock " + std::string(name) + " output\n```json\n" +
               body.dump(-1, ' ', false, json::error_handler_t::replace) + "\n```\n";
    out.finish_reason = FinishReason::Complete;
    out.usage.input_chars =
        text::code_point_count(request.system_instruction) + text::code_point_count(request.user_content);
    out.usage.output_chars = text::code_point_count(out.text);
    return out;
}

}  // namespace qda
