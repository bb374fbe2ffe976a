#include "qda/agents.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <map>
#include <mutex>
#include <set>

#include "qda/error.hpp"
#include "qda/resources.hpp"
#include "qda/schema.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

namespace {

struct RoleInfo {
    AgentRole role;
    std::string_view name;
    PayloadKind input;
    PayloadKind output;
    std::string_view template_file;
    std::optional<Method> home_method;
};

constexpr RoleInfo kRoles[] = {
    {AgentRole::Analyzer, "Analyzer", PayloadKind::RawText, PayloadKind::SummaryText, "analyzer", Method::Thematic},
    {AgentRole::Coder, "Coder", PayloadKind::SummaryText, PayloadKind::CodeSet, "coder", std::nullopt},
    {AgentRole::CodeReviewer, "CodeReviewer", PayloadKind::CodeSet, PayloadKind::CodeSet, "code_reviewer",
     Method::Thematic},
    {AgentRole::SubCategorizer, "SubCategorizer", PayloadKind::CodeSet, PayloadKind::GroupedCodes, "sub_categorizer",
     std::nullopt},
    {AgentRole::Categorizer, "Categorizer", PayloadKind::GroupedCodes, PayloadKind::CategorySet, "categorizer",
     std::nullopt},
    {AgentRole::ThemeSynthesizer, "ThemeSynthesizer", PayloadKind::CategorySet, PayloadKind::ThemeSet,
     "theme_synthesizer", Method::Thematic},
    {AgentRole::Summarizer, "Summarizer", PayloadKind::RawText, PayloadKind::SummaryText, "summarizer", std::nullopt},
    {AgentRole::PatternExtractor, "PatternExtractor", PayloadKind::CodeSet, PayloadKind::PatternSet,
     "pattern_extractor", Method::Content},
    {AgentRole::KeyPatternIdentifier, "KeyPatternIdentifier", PayloadKind::RawText, PayloadKind::PatternSet,
     "key_pattern_identifier", Method::Discourse},
    {AgentRole::LanguageAnalyzer, "LanguageAnalyzer", PayloadKind::PatternSet, PayloadKind::DiscourseSection,
     "language_analyzer", Method::Discourse},
    {AgentRole::ContextInterpreter, "ContextInterpreter", PayloadKind::PatternSet, PayloadKind::DiscourseSection,
     "context_interpreter", Method::Discourse},
    {AgentRole::GroundedCoder, "GroundedCoder", PayloadKind::RawText, PayloadKind::CodeSet, "grounded_coder",
     Method::GroundedTheory},
    {AgentRole::GroundedCategorizer, "GroundedCategorizer", PayloadKind::CodeSet, PayloadKind::CategorySet,
     "grounded_categorizer", Method::GroundedTheory},
    {AgentRole::GroundedPatternAgent, "GroundedPatternAgent", PayloadKind::CategorySet, PayloadKind::PatternSet,
     "grounded_pattern_agent", Method::GroundedTheory},
    {AgentRole::GroundedThemeAgent, "GroundedThemeAgent", PayloadKind::PatternSet, PayloadKind::ThemeSet,
     "grounded_theme_agent", Method::GroundedTheory},
    {AgentRole::CoreCoder, "CoreCoder", PayloadKind::ThemeSet, PayloadKind::CoreConceptPayload, "core_coder",
     Method::GroundedTheory},
};

const RoleInfo& info(AgentRole r) {
    for (const auto& ri : kRoles) {
        if (ri.role == r) {
            return ri;
        }
    }
    throw Error(ErrorKind::UnknownRole, "unknown agent role");
}

std::string_view schema_file(PayloadKind k) {
    switch (k) {
        case PayloadKind::RawText: return "";
        case PayloadKind::SummaryText: return "summary_text";
        case PayloadKind::CodeSet: return "code_set";
        case PayloadKind::GroupedCodes: return "grouped_codes";
        case PayloadKind::CategorySet: return "category_set";
        case PayloadKind::ThemeSet: return "theme_set";
        case PayloadKind::PatternSet: return "pattern_set";
        case PayloadKind::DiscourseSection: return "discourse_section";
        case PayloadKind::CoreConceptPayload: return "core_concept";
    }
    return "";
}

}  // namespace

std::string_view to_string(AgentRole r) noexcept {
    for (const auto& ri : kRoles) {
        if (ri.role == r) {
            return ri.name;
        }
    }
    return "Unknown";
}

std::optional<AgentRole> parse_role(std::string_view name) noexcept {
    for (const auto& ri : kRoles) {
        if (text::iequals(ri.name, name)) {
            return ri.role;
        }
    }
    return std::nullopt;
}

std::string_view to_string(PayloadKind k) noexcept {
    switch (k) {
        case PayloadKind::RawText: return "RawText";
        case PayloadKind::SummaryText: return "SummaryText";
        case PayloadKind::CodeSet: return "CodeSet";
        case PayloadKind::GroupedCodes: return "GroupedCodes";
        case PayloadKind::CategorySet: return "CategorySet";
        case PayloadKind::ThemeSet: return "ThemeSet";
        case PayloadKind::PatternSet: return "PatternSet";
        case PayloadKind::DiscourseSection: return "DiscourseSection";
        case PayloadKind::CoreConceptPayload: return "CoreConceptPayload";
    }
    return "";
}

PayloadKind input_kind(AgentRole r) noexcept { return info(r).input; }
PayloadKind output_kind(AgentRole r) noexcept { return info(r).output; }

std::vector<AgentRole> role_sequence(Method m) {
    using R = AgentRole;
    switch (m) {
        case Method::Thematic:
            return {R::Analyzer, R::Coder, R::CodeReviewer, R::SubCategorizer, R::Categorizer, R::ThemeSynthesizer};
        case Method::Narrative: return {R::Summarizer, R::Coder, R::SubCategorizer, R::Categorizer};
        case Method::Content: return {R::Summarizer, R::Coder, R::PatternExtractor};
        case Method::Discourse: return {R::KeyPatternIdentifier, R::LanguageAnalyzer, R::ContextInterpreter};
        case Method::GroundedTheory:
            return {R::GroundedCoder, R::GroundedCategorizer, R::GroundedPatternAgent, R::GroundedThemeAgent,
                    R::CoreCoder};
    }
    return {};
}

PayloadKind kind_of(const StagePayload& p) noexcept {
    return static_cast<PayloadKind>(p.index());
}

std::vector<int> referenced_segments(const StagePayload& p) {
    std::set<int> ids;
    auto add_sources = [&](const std::vector<SourceSegment>& s) {
        for (const auto& seg : s) ids.insert(seg.id);
    };
    auto add_codes = [&](const std::vector<Code>& codes) {
        for (const auto& c : codes) ids.insert(c.supporting_segments.begin(), c.supporting_segments.end());
    };
    auto add_patterns = [&](const std::vector<Pattern>& ps) {
        for (const auto& pt : ps) ids.insert(pt.evidence.begin(), pt.evidence.end());
    };
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, payload::RawText>) {
                add_sources(v.segments);
            } else if constexpr (std::is_same_v<T, payload::SummaryText>) {
                add_sources(v.sources);
                ids.insert(v.cited_segments.begin(), v.cited_segments.end());
            } else if constexpr (std::is_same_v<T, payload::CodeSet> || std::is_same_v<T, payload::GroupedCodes> ||
                                 std::is_same_v<T, payload::CategorySet>) {
                add_sources(v.sources);
                add_codes(v.codes);
            } else if constexpr (std::is_same_v<T, payload::ThemeSet>) {
                add_sources(v.sources);
                add_patterns(v.patterns);
            } else if constexpr (std::is_same_v<T, payload::PatternSet>) {
                add_sources(v.sources);
                add_codes(v.codes);
                add_patterns(v.patterns);
            }
        },
        p);
    return {ids.begin(), ids.end()};
}

// ---------------------------------------------------------------------------
// Rendering

std::string segment_marker(int id) {
    return "\xC2\xAB[S" + std::to_string(id) + "]\xC2\xBB";
}

namespace {

struct Template {
    std::string system;
    std::string user;
};

constexpr std::string_view kPlaceholders[] = {"role", "method", "custom_instruction", "output_schema", "payload"};

bool is_placeholder(std::string_view name) {
    return std::find(std::begin(kPlaceholders), std::end(kPlaceholders), name) != std::end(kPlaceholders);
}

// Calls on_text for literal runs and on_name for each {identifier}.
template <class OnText, class OnName>
void scan_template(std::string_view t, OnText on_text, OnName on_name) {
    std::size_t i = 0;
    while (i < t.size()) {
        const std::size_t open = t.find('{', i);
        if (open == std::string_view::npos) {
            on_text(t.substr(i));
            return;
        }
        std::size_t j = open + 1;
        while (j < t.size() && ((t[j] >= 'a' && t[j] <= 'z') || t[j] == '_')) {
            ++j;
        }
        if (j < t.size() && t[j] == '}' && j > open + 1) {
            on_text(t.substr(i, open - i));
            on_name(t.substr(open + 1, j - open - 1));
            i = j + 1;
        } else {
            on_text(t.substr(i, open + 1 - i));
            i = open + 1;
        }
    }
}

const Template& load_template(AgentRole role) {
    static std::mutex mu;
    static std::map<AgentRole, Template> cache;
    std::lock_guard lock(mu);
    if (auto it = cache.find(role); it != cache.end()) {
        return it->second;
    }
    const std::string file = "prompts/" + std::string(resources::kPromptVersion) + "/" +
                             std::string(info(role).template_file) + ".prompt";
    const std::string& raw = resources::load(file);
    constexpr std::string_view sys_marker = "--- system ---\n";
    constexpr std::string_view user_marker = "\n--- user ---\n";
    const auto s = raw.find(sys_marker);
    const auto u = raw.find(user_marker);
    if (s == std::string::npos || u == std::string::npos || u < s) {
        throw Error(ErrorKind::ResourceError, file + ": expected '--- system ---' and '--- user ---' sections");
    }
    Template t;
    t.system = raw.substr(s + sys_marker.size(), u - s - sys_marker.size());
    t.user = raw.substr(u + user_marker.size());
    while (!t.user.empty() && t.user.back() == '\n') {
        t.user.pop_back();
    }
    for (const std::string* part : {&t.system, &t.user}) {
        scan_template(
            *part, [](std::string_view) {},
            [&](std::string_view name) {
                if (!is_placeholder(name)) {
                    throw Error(ErrorKind::ResourceError, file + ": unknown placeholder {" + std::string(name) + "}");
                }
            });
    }
    return cache.emplace(role, std::move(t)).first->second;
}

std::string fill(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    scan_template(
        tmpl, [&](std::string_view lit) { out.append(lit); },
        [&](std::string_view name) {
            auto it = values.find(name);
            if (it == values.end()) {
                throw Error(ErrorKind::ResourceError, "unbound placeholder {" + std::string(name) + "}");
            }
            out.append(it->second);
        });
    return out;
}

std::string render_sources(const std::vector<SourceSegment>& sources) {
    std::string out = "Source segments:\n";
    for (const auto& s : sources) {
        out += segment_marker(s.id);
        out += ' ';
        out += s.text;
        out += '\n';
    }
    out += kSegmentsEndMarker;
    return out;
}

std::string fenced(const json& j) {
    return "```json\n" + j.dump(2) + "\n```";
}

json code_brief(const std::vector<Code>& codes, bool full) {
    json arr = json::array();
    for (const auto& c : codes) {
        json o{{"id", c.id}, {"label", c.label}, {"segments", c.supporting_segments}};
        if (full) {
            o["description"] = c.description;
            o["excerpt"] = c.supporting_excerpt;
        }
        arr.push_back(std::move(o));
    }
    return arr;
}

json category_brief(const std::vector<Category>& cats, bool with_members) {
    json arr = json::array();
    for (const auto& c : cats) {
        json o{{"id", c.id}, {"label", c.label}};
        if (with_members) {
            o["members"] = c.members;
        }
        arr.push_back(std::move(o));
    }
    return arr;
}

json pattern_brief(const std::vector<Pattern>& ps) {
    json arr = json::array();
    for (const auto& p : ps) {
        arr.push_back({{"id", p.id}, {"statement", p.statement}, {"evidence", p.evidence}});
    }
    return arr;
}

json theme_brief(const std::vector<Theme>& ts) {
    json arr = json::array();
    for (const auto& t : ts) {
        arr.push_back({{"id", t.id}, {"label", t.label}, {"narrative", t.narrative}, {"categories", t.member_categories}});
    }
    return arr;
}

std::string render_payload(const StagePayload& p) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, payload::RawText>) {
                return "Input text.\n" + render_sources(v.segments);
            } else if constexpr (std::is_same_v<T, payload::SummaryText>) {
                return "Summary:\n" + v.summary + "\n\n" + render_sources(v.sources);
            } else if constexpr (std::is_same_v<T, payload::CodeSet>) {
                return "Codes:\n" + fenced(json{{"codes", code_brief(v.codes, true)}}) + "\n\n" +
                       render_sources(v.sources);
            } else if constexpr (std::is_same_v<T, payload::GroupedCodes>) {
                json subs = json::array();
                for (const auto& s : v.subcategories) {
                    subs.push_back({{"id", s.id}, {"label", s.label}, {"members", s.member_codes}});
                }
                return "Subcategories:\n" +
                       fenced(json{{"subcategories", subs}, {"codes", code_brief(v.codes, false)}}) + "\n\n" +
                       render_sources(v.sources);
            } else if constexpr (std::is_same_v<T, payload::CategorySet>) {
                json subs = json::array();
                for (const auto& s : v.subcategories) {
                    subs.push_back({{"id", s.id}, {"label", s.label}, {"members", s.member_codes}});
                }
                return "Categories:\n" +
                       fenced(json{{"categories", category_brief(v.categories, true)},
                                   {"subcategories", subs},
                                   {"codes", code_brief(v.codes, false)}}) +
                       "\n\n" + render_sources(v.sources);
            } else if constexpr (std::is_same_v<T, payload::ThemeSet>) {
                return "Themes:\n" +
                       fenced(json{{"themes", theme_brief(v.themes)},
                                   {"categories", category_brief(v.categories, true)},
                                   {"patterns", pattern_brief(v.patterns)}}) +
                       "\n\n" + render_sources(v.sources);
            } else if constexpr (std::is_same_v<T, payload::PatternSet>) {
                return "Patterns:\n" +
                       fenced(json{{"patterns", pattern_brief(v.patterns)},
                                   {"categories", category_brief(v.categories, true)},
                                   {"themes", theme_brief(v.themes)},
                                   {"codes", code_brief(v.codes, false)}}) +
                       "\n\n" + render_sources(v.sources);
            } else if constexpr (std::is_same_v<T, payload::DiscourseSection>) {
                return "Analysis:\n" + v.analysis;
            } else {
                json core = nullptr;
                if (v.core) {
                    core = {{"label", v.core->label},
                            {"narrative", v.core->theory_narrative},
                            {"categories", v.core->linked_categories}};
                }
                return "Core concept:\n" + fenced(json{{"core_concept", core}});
            }
        },
        p);
}

const json& schema_json(PayloadKind kind) {
    static std::mutex mu;
    static std::map<PayloadKind, json> cache;
    const std::string& raw = output_schema_text(kind);
    std::lock_guard lock(mu);
    if (auto it = cache.find(kind); it != cache.end()) {
        return it->second;
    }
    return cache.emplace(kind, json::parse(raw)).first->second;
}

}  // namespace

const std::string& output_schema_text(PayloadKind kind) {
    const auto name = schema_file(kind);
    if (name.empty()) {
        throw Error(ErrorKind::InvalidArgument, std::string(to_string(kind)) + " is not an agent output kind");
    }
    return resources::load("schemas/" + std::string(name) + ".schema.json");
}

RenderedPrompt render_prompt(AgentRole role, const StagePayload& payload,
                             const std::optional<std::string>& custom_instruction, std::optional<Method> method) {
    const RoleInfo& ri = info(role);
    if (kind_of(payload) != ri.input) {
        throw Error(ErrorKind::PayloadKindMismatch, std::string(ri.name) + " expects " +
                                                        std::string(to_string(ri.input)) + " but got " +
                                                        std::string(to_string(kind_of(payload))));
    }
    if (custom_instruction && text::trim(*custom_instruction).empty()) {
        throw Error(ErrorKind::InvalidArgument, "custom instruction must not be blank");
    }
    const Template& t = load_template(role);
    const std::optional<Method> m = method ? method : ri.home_method;
    std::map<std::string, std::string, std::less<>> values;
    values["role"] = std::string(ri.name);
    values["method"] = m ? text::ascii_lower(display_name(*m)) : std::string("qualitative analysis");
    values["output_schema"] = output_schema_text(ri.output);
    while (!values["output_schema"].empty() && values["output_schema"].back() == '\n') {
        values["output_schema"].pop_back();
    }
    values["custom_instruction"] =
        custom_instruction ? "\n\n" + std::string(kGoalBegin) + "\n" + std::string(text::trim(*custom_instruction)) +
                                 "\n" + std::string(kGoalEnd)
                           : std::string();
    values["payload"] = render_payload(payload);
    RenderedPrompt out;
    out.system_instruction = fill(t.system, values);
    out.user_content = fill(t.user, values);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

std::optional<std::string> extract_fenced_json(std::string_view raw) {
    std::size_t pos = 0;
    while (true) {
        const std::size_t open = raw.find("```", pos);
        if (open == std::string_view::npos) {
            return std::nullopt;
        }
        std::size_t tag_end = open + 3;
        while (tag_end < raw.size() && (std::isalnum(static_cast<unsigned char>(raw[tag_end])) != 0 ||
                                        raw[tag_end] == '_' || raw[tag_end] == '-' || raw[tag_end] == '+')) {
            ++tag_end;
        }
        const std::string_view tag = raw.substr(open + 3, tag_end - open - 3);
        const std::size_t eol = raw.find('\n', tag_end);
        const std::size_t line_end = eol == std::string_view::npos ? raw.size() : eol;
        // ```json {...}``` on one line keeps the body on the fence line
        std::size_t body_begin = tag_end;
        if (text::trim(raw.substr(tag_end, line_end - tag_end)).empty()) {
            body_begin = eol == std::string_view::npos ? raw.size() : eol + 1;
        }
        const std::size_t close = raw.find("```", body_begin);
        const std::size_t body_end = close == std::string_view::npos ? raw.size() : close;
        const bool json_tag = tag.empty() || text::iequals(tag, "json");
        if (json_tag) {
            return std::string(raw.substr(body_begin, body_end - body_begin));
        }
        if (close == std::string_view::npos) {
            return std::nullopt;
        }
        pos = close + 3;
    }
}

namespace {

constexpr std::size_t kMaxDepth = 128;

std::string replace_smart_quotes(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        // U+2018..U+201F live at E2 80 98..9F
        if (i + 2 < s.size() && s[i] == '\xE2' && s[i + 1] == '\x80') {
            const auto c = static_cast<unsigned char>(s[i + 2]);
            if (c == 0x9C || c == 0x9D || c == 0x9E || c == 0x9F) {
                out.push_back('"');
                i += 2;
                continue;
            }
            if (c == 0x98 || c == 0x99 || c == 0x9A || c == 0x9B) {
                out.push_back('\'');
                i += 2;
                continue;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

struct ScanState {
    bool in_string = false;
    std::vector<char> stack;
    std::size_t max_depth = 0;
    bool mismatched = false;
};

ScanState scan(std::string_view s) {
    ScanState st;
    bool escape = false;
    for (char c : s) {
        if (st.in_string) {
            if (escape) {
                escape = false;
            } else if (c == '\\') {
                escape = true;
            } else if (c == '"') {
                st.in_string = false;
            }
            continue;
        }
        if (c == '"') {
            st.in_string = true;
        } else if (c == '{' || c == '[') {
            st.stack.push_back(c);
            st.max_depth = std::max(st.max_depth, st.stack.size());
        } else if (c == '}' || c == ']') {
            if (st.stack.empty() || (c == '}' ? '{' : '[') != st.stack.back()) {
                st.mismatched = true;
            } else {
                st.stack.pop_back();
            }
        }
    }
    return st;
}

std::string strip_trailing_commas(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    bool escape = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out.push_back(c);
            if (escape) {
                escape = false;
            } else if (c == '\\') {
                escape = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && text::is_space(s[j])) {
                ++j;
            }
            if (j < s.size() && (s[j] == '}' || s[j] == ']')) {
                continue;
            }
        }
        out.push_back(c);
    }
    return out;
}

std::optional<json> try_parse(std::string_view s) {
    if (scan(s).max_depth > kMaxDepth) {
        return std::nullopt;
    }
    json j = json::parse(s, nullptr, false);
    if (j.is_discarded()) {
        return std::nullopt;
    }
    return j;
}

}  // namespace

std::optional<std::string> repair_json(std::string_view json_text) {
    std::string s = replace_smart_quotes(json_text);
    const ScanState st = scan(s);
    if (st.max_depth > kMaxDepth) {
        return std::nullopt;
    }
    if (st.in_string) {
        s.push_back('"');
    }
    if (st.stack.size() > 1) {
        return std::nullopt;
    }
    if (st.stack.size() == 1) {
        while (!s.empty() && text::is_space(s.back())) {
            s.pop_back();
        }
        s.push_back(st.stack.back() == '{' ? '}' : ']');
    }
    return strip_trailing_commas(s);
}

namespace {

[[noreturn]] void unparseable(std::string_view raw, const std::string& why) {
    throw AgentOutputError(ErrorKind::AgentOutputUnparseable, why, std::string(raw));
}

[[noreturn]] void schema_violation(std::string_view raw, const std::string& why) {
    throw AgentOutputError(ErrorKind::SchemaViolation, why, std::string(raw));
}

std::vector<int> segment_list(const json& arr, std::string_view raw) {
    std::vector<int> out;
    for (const auto& v : arr) {
        const auto n = v.get<std::int64_t>();
        if (n < 0 || n > INT_MAX) {
            schema_violation(raw, "segment id out of range");
        }
        const int id = static_cast<int>(n);
        if (std::find(out.begin(), out.end(), id) == out.end()) {
            out.push_back(id);
        }
    }
    return out;
}

std::string str_or(const json& o, const char* key, std::string fallback = {}) {
    if (auto it = o.find(key); it != o.end() && it->is_string()) {
        return it->get<std::string>();
    }
    return fallback;
}

std::vector<Category> map_categories(const json& arr) {
    std::vector<Category> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back({"cat-" + std::to_string(i + 1), arr[i].at("label").get<std::string>(),
                       arr[i].at("members").get<std::vector<std::string>>()});
    }
    return out;
}

std::vector<Theme> map_themes(const json& arr) {
    std::vector<Theme> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back({"theme-" + std::to_string(i + 1), arr[i].at("label").get<std::string>(),
                       arr[i].at("narrative").get<std::string>(),
                       arr[i].at("categories").get<std::vector<std::string>>()});
    }
    return out;
}

StagePayload map_payload(PayloadKind kind, const json& j, std::string_view raw) {
    switch (kind) {
        case PayloadKind::SummaryText: {
            payload::SummaryText p;
            p.summary = j.at("summary").get<std::string>();
            if (auto it = j.find("segments"); it != j.end()) {
                p.cited_segments = segment_list(*it, raw);
            }
            return p;
        }
        case PayloadKind::CodeSet: {
            payload::CodeSet p;
            const auto& codes = j.at("codes");
            for (std::size_t i = 0; i < codes.size(); ++i) {
                const auto& c = codes[i];
                p.codes.push_back({"code-" + std::to_string(i + 1), c.at("label").get<std::string>(),
                                   str_or(c, "description"), segment_list(c.at("segments"), raw), str_or(c, "excerpt")});
            }
            return p;
        }
        case PayloadKind::GroupedCodes: {
            payload::GroupedCodes p;
            const auto& subs = j.at("subcategories");
            for (std::size_t i = 0; i < subs.size(); ++i) {
                p.subcategories.push_back({"subcat-" + std::to_string(i + 1), subs[i].at("label").get<std::string>(),
                                           subs[i].at("members").get<std::vector<std::string>>()});
            }
            return p;
        }
        case PayloadKind::CategorySet: {
            payload::CategorySet p;
            p.categories = map_categories(j.at("categories"));
            return p;
        }
        case PayloadKind::ThemeSet: {
            payload::ThemeSet p;
            p.themes = map_themes(j.at("themes"));
            return p;
        }
        case PayloadKind::PatternSet: {
            payload::PatternSet p;
            const auto& pats = j.at("patterns");
            for (std::size_t i = 0; i < pats.size(); ++i) {
                p.patterns.push_back({"pattern-" + std::to_string(i + 1), pats[i].at("statement").get<std::string>(),
                                      segment_list(pats[i].at("evidence"), raw)});
            }
            if (auto it = j.find("categories"); it != j.end()) {
                p.categories = map_categories(*it);
            }
            if (auto it = j.find("themes"); it != j.end()) {
                p.themes = map_themes(*it);
            }
            return p;
        }
        case PayloadKind::DiscourseSection:
            return payload::DiscourseSection{j.at("analysis").get<std::string>()};
        case PayloadKind::CoreConceptPayload: {
            payload::CoreConceptPayload p;
            const auto& cc = j.at("core_concept");
            if (!cc.is_null()) {
                p.core = CoreConcept{cc.at("label").get<std::string>(), cc.at("narrative").get<std::string>(),
                                     cc.at("categories").get<std::vector<std::string>>()};
            }
            return p;
        }
        case PayloadKind::RawText: break;
    }
    throw Error(ErrorKind::InvalidArgument, "RawText is not an agent output kind");
}

}  // namespace

StagePayload parse_agent_output(AgentRole role, std::string_view raw) {
    const PayloadKind kind = info(role).output;
    auto block = extract_fenced_json(raw);
    if (!block) {
        // bare object: first '{' through the last '}' (or the end when unclosed)
        const std::size_t open = raw.find('{');
        if (open == std::string_view::npos) {
            unparseable(raw, "no JSON block in agent output");
        }
        const std::size_t close = raw.rfind('}');
        const std::size_t end = close == std::string_view::npos || close < open ? raw.size() : close + 1;
        block = std::string(raw.substr(open, end - open));
    }
    std::optional<json> parsed = try_parse(*block);
    if (!parsed) {
        if (auto repaired = repair_json(*block)) {
            parsed = try_parse(*repaired);
        }
    }
    if (!parsed) {
        unparseable(raw, "JSON block is malformed beyond bounded repair");
    }
    if (!parsed->is_object()) {
        schema_violation(raw, "expected a JSON object at the top level");
    }
    if (auto err = schema::validate(schema_json(kind), *parsed)) {
        schema_violation(raw, std::string(to_string(kind)) + " schema: " + *err);
    }
    try {
        return map_payload(kind, *parsed, raw);
    } catch (const json::exception& e) {
        schema_violation(raw, std::string("unexpected shape: ") + e.what());
    }
}

}  // namespace qda
