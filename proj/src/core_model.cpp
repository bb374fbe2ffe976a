#include "qda/core_model.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "qda/error.hpp"
#include "qda/text.hpp"

namespace qda {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorKind::DecodeError: return "DecodeError";
        case ErrorKind::ExtractionIncomplete: return "ExtractionIncomplete";
        case ErrorKind::TooLarge: return "TooLarge";
        case ErrorKind::FetchFailed: return "FetchFailed";
        case ErrorKind::RateLimited: return "RateLimited";
        case ErrorKind::NotAThread: return "NotAThread";
        case ErrorKind::EmptyAfterStrip: return "EmptyAfterStrip";
        case ErrorKind::BackendUnavailable: return "BackendUnavailable";
        case ErrorKind::AuthFailure: return "AuthFailure";
        case ErrorKind::ContractViolation: return "ContractViolation";
        case ErrorKind::UnknownRole: return "UnknownRole";
        case ErrorKind::PayloadKindMismatch: return "PayloadKindMismatch";
        case ErrorKind::AgentOutputUnparseable: return "AgentOutputUnparseable";
        case ErrorKind::SchemaViolation: return "SchemaViolation";
        case ErrorKind::StageFailed: return "StageFailed";
        case ErrorKind::BadRequest: return "BadRequest";
        case ErrorKind::QueueFull: return "QueueFull";
        case ErrorKind::NotFound: return "NotFound";
        case ErrorKind::NotReady: return "NotReady";
        case ErrorKind::ResourceError: return "ResourceError";
    }
    return "Unknown";
}

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::Thematic: return "thematic";
        case Method::Narrative: return "narrative";
        case Method::Content: return "content";
        case Method::Discourse: return "discourse";
        case Method::GroundedTheory: return "grounded-theory";
    }
    return "thematic";
}

std::string_view display_name(Method m) noexcept {
    switch (m) {
        case Method::Thematic: return "Thematic Analysis";
        case Method::Narrative: return "Narrative Analysis";
        case Method::Content: return "Content Analysis";
        case Method::Discourse: return "Discourse Analysis";
        case Method::GroundedTheory: return "Grounded Theory";
    }
    return "";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
    std::string n = text::ascii_lower(text::trim(name));
    std::erase_if(n, [](char c) { return c == ' ' || c == '_' || c == '-'; });
    if (n.ends_with("analysis") && n.size() > 8) {
        n.resize(n.size() - 8);
    }
    if (n == "thematic") return Method::Thematic;
    if (n == "narrative") return Method::Narrative;
    if (n == "content") return Method::Content;
    if (n == "discourse") return Method::Discourse;
    if (n == "groundedtheory" || n == "grounded") return Method::GroundedTheory;
    return std::nullopt;
}

std::vector<std::string> method_names() {
    std::vector<std::string> out;
    for (Method m : kAllMethods) {
        out.emplace_back(to_string(m));
    }
    return out;
}

std::string_view to_string(OutputFormat f) noexcept {
    switch (f) {
        case OutputFormat::Csv: return "csv";
        case OutputFormat::OutputArea: return "json";
        case OutputFormat::DocReport: return "report";
    }
    return "json";
}

std::optional<OutputFormat> parse_output_format(std::string_view name) noexcept {
    const std::string n = text::ascii_lower(text::trim(name));
    if (n == "csv") return OutputFormat::Csv;
    if (n == "json" || n == "output-area" || n == "outputarea" || n == "output_area") return OutputFormat::OutputArea;
    if (n == "report" || n == "doc" || n == "docreport" || n == "md" || n == "markdown") return OutputFormat::DocReport;
    return std::nullopt;
}

std::string_view to_string(Tier t) noexcept {
    switch (t) {
        case Tier::Summary: return "summary";
        case Tier::Codes: return "codes";
        case Tier::Subcategories: return "subcategories";
        case Tier::Categories: return "categories";
        case Tier::Themes: return "themes";
        case Tier::Patterns: return "patterns";
        case Tier::CoreConcept: return "core_concept";
        case Tier::DiscourseSections: return "discourse_sections";
    }
    return "";
}

const std::vector<Tier>& result_shape(Method m) {
    static const std::vector<Tier> thematic{Tier::Summary, Tier::Codes, Tier::Subcategories, Tier::Categories,
                                            Tier::Themes};
    static const std::vector<Tier> narrative{Tier::Summary, Tier::Codes, Tier::Subcategories, Tier::Categories};
    static const std::vector<Tier> content{Tier::Summary, Tier::Codes, Tier::Categories, Tier::Themes,
                                           Tier::Patterns};
    static const std::vector<Tier> discourse{Tier::DiscourseSections};
    static const std::vector<Tier> grounded{Tier::Codes, Tier::Categories, Tier::Patterns, Tier::Themes,
                                            Tier::CoreConcept};
    switch (m) {
        case Method::Thematic: return thematic;
        case Method::Narrative: return narrative;
        case Method::Content: return content;
        case Method::Discourse: return discourse;
        case Method::GroundedTheory: return grounded;
    }
    return thematic;
}

bool shape_has(Method m, Tier t) {
    const auto& shape = result_shape(m);
    return std::find(shape.begin(), shape.end(), t) != shape.end();
}

std::size_t expected_stage_count(Method m) noexcept {
    switch (m) {
        case Method::Thematic: return 6;
        case Method::Narrative: return 4;
        case Method::Content: return 3;
        case Method::Discourse: return 3;
        case Method::GroundedTheory: return 5;
    }
    return 0;
}

std::string_view modality_name(const SourceSpec& s) noexcept {
    struct Visitor {
        std::string_view operator()(const InlineText&) const { return "inline-text"; }
        std::string_view operator()(const FileUpload&) const { return "file-upload"; }
        std::string_view operator()(const WebLink&) const { return "web-link"; }
        std::string_view operator()(const GitHubLink&) const { return "github-link"; }
        std::string_view operator()(const Transcript&) const { return "transcript"; }
    };
    return std::visit(Visitor{}, s);
}

// ---------------------------------------------------------------------------
// Segmentation

const Segment* Document::find_segment(int id) const noexcept {
    if (id < 0 || static_cast<std::size_t>(id) >= segments.size()) {
        return nullptr;
    }
    return &segments[static_cast<std::size_t>(id)];
}

namespace {

void push_segment(std::string_view text, std::size_t b, std::size_t e, std::vector<Segment>& out) {
    while (b < e && text::is_space(text[b])) {
        ++b;
    }
    while (e > b && text::is_space(text[e - 1])) {
        --e;
    }
    if (b == e) {
        return;
    }
    out.push_back(Segment{static_cast<int>(out.size()), b, e, std::string(text.substr(b, e - b))});
}

// Cuts [b, e) into pieces of at most max_chars bytes, preferring whitespace.
void hard_split(std::string_view text, std::size_t b, std::size_t e, std::size_t max_chars,
                std::vector<Segment>& out) {
    while (e - b > max_chars) {
        std::size_t cut = b + max_chars;
        std::size_t ws = cut;
        while (ws > b && !text::is_space(text[ws])) {
            --ws;
        }
        if (ws > b) {
            cut = ws;
        } else {
            while (cut > b && !text::is_char_boundary(text, cut)) {
                --cut;
            }
            if (cut == b) {
                cut = b + max_chars;
                while (cut < e && !text::is_char_boundary(text, cut)) {
                    ++cut;
                }
            }
        }
        push_segment(text, b, cut, out);
        b = cut;
        while (b < e && text::is_space(text[b])) {
            ++b;
        }
    }
    push_segment(text, b, e, out);
}

}  // namespace

void append_span_segments(std::string_view text, std::size_t begin, std::size_t end, std::size_t max_chars,
                          std::vector<Segment>& out) {
    if (max_chars == 0) {
        throw Error(ErrorKind::InvalidArgument, "segment size limit must be positive");
    }
    if (end - begin <= max_chars) {
        push_segment(text, begin, end, out);
        return;
    }
    const auto sentences = text::sentence_ranges(text.substr(begin, end - begin));
    std::size_t cur_b = 0;
    std::size_t cur_e = 0;
    bool open = false;
    for (const auto& s : sentences) {
        const std::size_t sb = begin + s.begin;
        const std::size_t se = begin + s.end;
        if (open && se - cur_b <= max_chars) {
            cur_e = se;
            continue;
        }
        if (open) {
            push_segment(text, cur_b, cur_e, out);
            open = false;
        }
        if (se - sb > max_chars) {
            hard_split(text, sb, se, max_chars, out);
        } else {
            cur_b = sb;
            cur_e = se;
            open = true;
        }
    }
    if (open) {
        push_segment(text, cur_b, cur_e, out);
    }
}

std::vector<Segment> segment_document(std::string_view text, const SegmentationPolicy& policy) {
    if (text::trim(text).empty()) {
        throw Error(ErrorKind::EmptyInput, "input text is empty");
    }
    std::vector<Segment> out;
    std::size_t para_b = 0;
    bool in_para = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        const bool blank = text::trim(text.substr(pos, eol - pos)).empty();
        if (blank) {
            if (in_para) {
                append_span_segments(text, para_b, pos, policy.max_paragraph_chars, out);
                in_para = false;
            }
        } else if (!in_para) {
            para_b = pos;
            in_para = true;
        }
        pos = eol + 1;
    }
    if (in_para) {
        append_span_segments(text, para_b, text.size(), policy.max_paragraph_chars, out);
    }
    return out;
}

Document make_document(std::string text, SourceSpec source, std::vector<Segment> segments,
                       std::map<std::string, std::string> metadata) {
    Document doc;
    doc.doc_id = "doc-" + text::fnv1a_hex(text);
    doc.source = std::move(source);
    doc.text = std::move(text);
    doc.segments = std::move(segments);
    doc.metadata = std::move(metadata);
    doc.metadata["modality"] = std::string(modality_name(doc.source));
    return doc;
}

std::vector<std::string> check_document(const Document& doc) {
    std::vector<std::string> problems;
    if (text::trim(doc.text).empty()) {
        problems.emplace_back("text is empty");
    }
    if (doc.segments.empty()) {
        problems.emplace_back("document has no segments");
    }
    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < doc.segments.size(); ++i) {
        const Segment& s = doc.segments[i];
        const std::string tag = "segment " + std::to_string(i) + ": ";
        if (s.id != static_cast<int>(i)) {
            problems.push_back(tag + "id is not dense");
        }
        if (s.begin >= s.end || s.end > doc.text.size()) {
            problems.push_back(tag + "range outside text or empty");
            continue;
        }
        if (s.begin < prev_end) {
            problems.push_back(tag + "overlaps previous segment");
        }
        if (!text::is_char_boundary(doc.text, s.begin) || !text::is_char_boundary(doc.text, s.end)) {
            problems.push_back(tag + "range splits a character");
        }
        if (doc.text.compare(s.begin, s.end - s.begin, s.text) != 0) {
            problems.push_back(tag + "text does not match its range");
        }
        if (s.begin >= prev_end && !text::trim(std::string_view(doc.text).substr(prev_end, s.begin - prev_end)).empty()) {
            problems.push_back(tag + "non-separator text between segments");
        }
        prev_end = std::max(prev_end, s.end);
    }
    if (prev_end <= doc.text.size() && !text::trim(std::string_view(doc.text).substr(prev_end)).empty()) {
        problems.emplace_back("text after the last segment is not covered");
    }
    return problems;
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(IssueKind k) noexcept {
    switch (k) {
        case IssueKind::DanglingReference: return "DanglingReference";
        case IssueKind::StageCountMismatch: return "StageCountMismatch";
        case IssueKind::MissingTier: return "MissingTier";
        case IssueKind::UnexpectedTier: return "UnexpectedTier";
        case IssueKind::EmptyMembers: return "EmptyMembers";
        case IssueKind::MultipleMembership: return "MultipleMembership";
        case IssueKind::UnassignedMember: return "UnassignedMember";
        case IssueKind::DuplicateId: return "DuplicateId";
        case IssueKind::InvalidLabel: return "InvalidLabel";
        case IssueKind::DocumentMismatch: return "DocumentMismatch";
        case IssueKind::EmptyCoding: return "EmptyCoding";
        case IssueKind::EmptyKeyPatterns: return "EmptyKeyPatterns";
    }
    return "";
}

namespace {

class Validator {
public:
    Validator(const AnalysisResult& r, const Document& d) : r_(r), d_(d) {}

    ValidationReport run() {
        check_document_link();
        check_stage_count();
        check_tiers();
        check_codes();
        check_subcategories();
        check_categories();
        check_themes();
        check_patterns(r_.patterns, "pattern");
        if (r_.discourse_sections) {
            check_patterns(r_.discourse_sections->key_patterns, "key pattern");
        }
        check_core();
        report_.ok = report_.violations.empty();
        return std::move(report_);
    }

private:
    void violation(IssueKind k, std::string id, std::string msg) {
        report_.violations.push_back({k, std::move(id), std::move(msg)});
    }
    void warning(IssueKind k, std::string id, std::string msg) {
        report_.warnings.push_back({k, std::move(id), std::move(msg)});
    }

    void check_document_link() {
        if (r_.doc_id != d_.doc_id) {
            violation(IssueKind::DocumentMismatch, r_.doc_id,
                      "result refers to document '" + r_.doc_id + "' but was validated against '" + d_.doc_id + "'");
        }
    }

    void check_stage_count() {
        const std::size_t expected = expected_stage_count(r_.method);
        if (r_.stage_trace.size() != expected) {
            violation(IssueKind::StageCountMismatch, std::string(to_string(r_.method)),
                      "stage trace has " + std::to_string(r_.stage_trace.size()) + " entries, expected " +
                          std::to_string(expected));
        }
    }

    bool tier_populated(Tier t) const {
        switch (t) {
            case Tier::Summary: return r_.summary.has_value();
            case Tier::Codes: return !r_.codes.empty();
            case Tier::Subcategories: return !r_.subcategories.empty();
            case Tier::Categories: return !r_.categories.empty();
            case Tier::Themes: return !r_.themes.empty();
            case Tier::Patterns: return !r_.patterns.empty();
            case Tier::CoreConcept: return r_.core_concept.has_value();
            case Tier::DiscourseSections: return r_.discourse_sections.has_value();
        }
        return false;
    }

    void check_tiers() {
        const Method m = r_.method;
        for (Tier t : {Tier::Summary, Tier::Codes, Tier::Subcategories, Tier::Categories, Tier::Themes,
                       Tier::Patterns, Tier::CoreConcept, Tier::DiscourseSections}) {
            const bool in_shape = shape_has(m, t);
            const bool populated = tier_populated(t);
            const std::string name(to_string(t));
            if (!in_shape && populated) {
                violation(IssueKind::UnexpectedTier, name,
                          name + " is not part of the " + std::string(to_string(m)) + " result shape");
            }
            if (!in_shape || populated) {
                continue;
            }
            if (t == Tier::Summary || t == Tier::DiscourseSections) {
                violation(IssueKind::MissingTier, name, name + " is required for " + std::string(to_string(m)));
            } else if (t != Tier::Codes && !r_.codes.empty()) {
                violation(IssueKind::MissingTier, name, name + " is empty although codes were produced");
            }
        }
        if (shape_has(m, Tier::Codes) && r_.codes.empty()) {
            warning(IssueKind::EmptyCoding, "", "empty coding");
        }
        if (r_.summary && text::trim(*r_.summary).empty()) {
            violation(IssueKind::MissingTier, "summary", "summary is blank");
        }
        if (r_.discourse_sections) {
            const auto& ds = *r_.discourse_sections;
            if (ds.key_patterns.empty()) {
                warning(IssueKind::EmptyKeyPatterns, "", "no key patterns identified");
            }
            if (text::trim(ds.language_analysis).empty()) {
                violation(IssueKind::MissingTier, "language_analysis", "language analysis is blank");
            }
            if (text::trim(ds.broader_context).empty()) {
                violation(IssueKind::MissingTier, "broader_context", "broader context is blank");
            }
        }
    }

    template <class T, class IdOf>
    std::unordered_set<std::string> collect_ids(const std::vector<T>& items, IdOf id_of, std::string_view what) {
        std::unordered_set<std::string> ids;
        for (const auto& item : items) {
            const std::string& id = id_of(item);
            if (!ids.insert(id).second) {
                violation(IssueKind::DuplicateId, id, "duplicate " + std::string(what) + " id");
            }
        }
        return ids;
    }

    void check_segment_ref(int seg, const std::string& owner, std::string_view what) {
        if (d_.find_segment(seg) == nullptr) {
            violation(IssueKind::DanglingReference, owner,
                      std::string(what) + " " + owner + " cites missing segment " + std::to_string(seg));
        }
    }

    void check_codes() {
        code_ids_ = collect_ids(r_.codes, [](const Code& c) -> const std::string& { return c.id; }, "code");
        for (const Code& c : r_.codes) {
            if (c.supporting_segments.empty()) {
                violation(IssueKind::EmptyMembers, c.id, "code " + c.id + " has no supporting segments");
            }
            for (int s : c.supporting_segments) {
                check_segment_ref(s, c.id, "code");
            }
            if (c.label.empty() || c.label.find_first_of("\r\n") != std::string::npos ||
                text::code_point_count(c.label) > 80) {
                violation(IssueKind::InvalidLabel, c.id, "code label must be 1-80 characters on one line");
            }
        }
    }

    void check_subcategories() {
        subcat_ids_ = collect_ids(r_.subcategories, [](const SubCategory& s) -> const std::string& { return s.id; },
                                  "subcategory");
        std::unordered_map<std::string, int> membership;
        for (const SubCategory& s : r_.subcategories) {
            if (s.member_codes.empty()) {
                violation(IssueKind::EmptyMembers, s.id, "subcategory " + s.id + " has no member codes");
            }
            for (const auto& code : s.member_codes) {
                if (!code_ids_.contains(code)) {
                    violation(IssueKind::DanglingReference, s.id,
                              "subcategory " + s.id + " references unknown code " + code);
                } else if (++membership[code] == 2) {
                    violation(IssueKind::MultipleMembership, code, "code " + code + " belongs to several subcategories");
                }
            }
        }
        if (!r_.subcategories.empty()) {
            for (const Code& c : r_.codes) {
                if (!membership.contains(c.id)) {
                    violation(IssueKind::UnassignedMember, c.id, "code " + c.id + " belongs to no subcategory");
                }
            }
        }
    }

    void check_categories() {
        cat_ids_ = collect_ids(r_.categories, [](const Category& c) -> const std::string& { return c.id; }, "category");
        const bool over_subcats = r_.method == Method::Thematic || r_.method == Method::Narrative;
        const auto& member_ids = over_subcats ? subcat_ids_ : code_ids_;
        const std::string member_kind = over_subcats ? "subcategory" : "code";
        std::unordered_map<std::string, int> membership;
        for (const Category& c : r_.categories) {
            if (c.members.empty()) {
                violation(IssueKind::EmptyMembers, c.id, "category " + c.id + " has no members");
            }
            for (const auto& m : c.members) {
                if (!member_ids.contains(m)) {
                    violation(IssueKind::DanglingReference, c.id,
                              "category " + c.id + " references unknown " + member_kind + " " + m);
                } else if (++membership[m] == 2) {
                    violation(IssueKind::MultipleMembership, m, member_kind + " " + m + " belongs to several categories");
                }
            }
        }
        if (!r_.categories.empty()) {
            if (over_subcats) {
                for (const SubCategory& s : r_.subcategories) {
                    if (!membership.contains(s.id)) {
                        violation(IssueKind::UnassignedMember, s.id, "subcategory " + s.id + " belongs to no category");
                    }
                }
            } else {
                for (const Code& c : r_.codes) {
                    if (!membership.contains(c.id)) {
                        violation(IssueKind::UnassignedMember, c.id, "code " + c.id + " belongs to no category");
                    }
                }
            }
        }
    }

    void check_themes() {
        collect_ids(r_.themes, [](const Theme& t) -> const std::string& { return t.id; }, "theme");
        for (const Theme& t : r_.themes) {
            if (t.member_categories.empty()) {
                violation(IssueKind::EmptyMembers, t.id, "theme " + t.id + " links no categories");
            }
            for (const auto& c : t.member_categories) {
                if (!cat_ids_.contains(c)) {
                    violation(IssueKind::DanglingReference, t.id, "theme " + t.id + " references unknown category " + c);
                }
            }
        }
    }

    void check_patterns(const std::vector<Pattern>& patterns, std::string_view what) {
        collect_ids(patterns, [](const Pattern& p) -> const std::string& { return p.id; }, what);
        for (const Pattern& p : patterns) {
            if (p.evidence.empty()) {
                violation(IssueKind::EmptyMembers, p.id, std::string(what) + " " + p.id + " has no evidence");
            }
            for (int s : p.evidence) {
                check_segment_ref(s, p.id, what);
            }
        }
    }

    void check_core() {
        if (!r_.core_concept) {
            return;
        }
        const auto& cc = *r_.core_concept;
        if (cc.linked_categories.empty()) {
            violation(IssueKind::EmptyMembers, "core_concept", "core concept links no categories");
        }
        for (const auto& c : cc.linked_categories) {
            if (!cat_ids_.contains(c)) {
                violation(IssueKind::DanglingReference, "core_concept", "core concept references unknown category " + c);
            }
        }
    }

    const AnalysisResult& r_;
    const Document& d_;
    ValidationReport report_;
    std::unordered_set<std::string> code_ids_;
    std::unordered_set<std::string> subcat_ids_;
    std::unordered_set<std::string> cat_ids_;
};

}  // namespace

ValidationReport validate_result(const AnalysisResult& result, const Document& document) {
    return Validator(result, document).run();
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

void to_json(json& j, const Segment& s) {
    j = json{{"id", s.id}, {"begin", s.begin}, {"end", s.end}, {"text", s.text}};
}

void to_json(json& j, const Code& c) {
    j = json{{"id", c.id},
             {"label", c.label},
             {"description", c.description},
             {"supporting_segments", c.supporting_segments},
             {"supporting_excerpt", c.supporting_excerpt}};
}

void from_json(const json& j, Code& c) {
    j.at("id").get_to(c.id);
    j.at("label").get_to(c.label);
    j.at("description").get_to(c.description);
    j.at("supporting_segments").get_to(c.supporting_segments);
    j.at("supporting_excerpt").get_to(c.supporting_excerpt);
}

void to_json(json& j, const SubCategory& s) {
    j = json{{"id", s.id}, {"label", s.label}, {"member_codes", s.member_codes}};
}

void from_json(const json& j, SubCategory& s) {
    j.at("id").get_to(s.id);
    j.at("label").get_to(s.label);
    j.at("member_codes").get_to(s.member_codes);
}

void to_json(json& j, const Category& c) {
    j = json{{"id", c.id}, {"label", c.label}, {"members", c.members}};
}

void from_json(const json& j, Category& c) {
    j.at("id").get_to(c.id);
    j.at("label").get_to(c.label);
    j.at("members").get_to(c.members);
}

void to_json(json& j, const Theme& t) {
    j = json{{"id", t.id}, {"label", t.label}, {"narrative", t.narrative}, {"member_categories", t.member_categories}};
}

void from_json(const json& j, Theme& t) {
    j.at("id").get_to(t.id);
    j.at("label").get_to(t.label);
    j.at("narrative").get_to(t.narrative);
    j.at("member_categories").get_to(t.member_categories);
}

void to_json(json& j, const Pattern& p) {
    j = json{{"id", p.id}, {"statement", p.statement}, {"evidence", p.evidence}};
}

void from_json(const json& j, Pattern& p) {
    j.at("id").get_to(p.id);
    j.at("statement").get_to(p.statement);
    j.at("evidence").get_to(p.evidence);
}

void to_json(json& j, const CoreConcept& c) {
    j = json{{"label", c.label}, {"theory_narrative", c.theory_narrative}, {"linked_categories", c.linked_categories}};
}

void from_json(const json& j, CoreConcept& c) {
    j.at("label").get_to(c.label);
    j.at("theory_narrative").get_to(c.theory_narrative);
    j.at("linked_categories").get_to(c.linked_categories);
}

void to_json(json& j, const DiscourseSections& d) {
    j = json{{"key_patterns", d.key_patterns},
             {"language_analysis", d.language_analysis},
             {"broader_context", d.broader_context}};
}

void from_json(const json& j, DiscourseSections& d) {
    j.at("key_patterns").get_to(d.key_patterns);
    j.at("language_analysis").get_to(d.language_analysis);
    j.at("broader_context").get_to(d.broader_context);
}

void to_json(json& j, const StageRecord& s) {
    j = json{{"stage_index", s.stage_index}, {"role", s.role},
             {"started_at", s.started_at},   {"finished_at", s.finished_at},
             {"attempts", s.attempts},       {"input_chars", s.input_chars},
             {"output_chars", s.output_chars}};
}

void from_json(const json& j, StageRecord& s) {
    j.at("stage_index").get_to(s.stage_index);
    j.at("role").get_to(s.role);
    j.at("started_at").get_to(s.started_at);
    j.at("finished_at").get_to(s.finished_at);
    j.at("attempts").get_to(s.attempts);
    j.at("input_chars").get_to(s.input_chars);
    j.at("output_chars").get_to(s.output_chars);
}

void to_json(json& j, const AnalysisResult& r) {
    j = json::object();
    j["method"] = std::string(to_string(r.method));
    j["doc_id"] = r.doc_id;
    j["summary"] = r.summary ? json(*r.summary) : json(nullptr);
    j["codes"] = r.codes;
    j["subcategories"] = r.subcategories;
    j["categories"] = r.categories;
    j["themes"] = r.themes;
    j["patterns"] = r.patterns;
    j["core_concept"] = r.core_concept ? json(*r.core_concept) : json(nullptr);
    j["discourse_sections"] = r.discourse_sections ? json(*r.discourse_sections) : json(nullptr);
    j["stage_trace"] = r.stage_trace;
}

void from_json(const json& j, AnalysisResult& r) {
    const auto method = parse_method(j.at("method").get<std::string>());
    if (!method) {
        throw Error(ErrorKind::ContractViolation, "unknown method in result JSON");
    }
    r.method = *method;
    j.at("doc_id").get_to(r.doc_id);
    r.summary = j.at("summary").is_null() ? std::nullopt : std::optional(j.at("summary").get<std::string>());
    j.at("codes").get_to(r.codes);
    j.at("subcategories").get_to(r.subcategories);
    j.at("categories").get_to(r.categories);
    j.at("themes").get_to(r.themes);
    j.at("patterns").get_to(r.patterns);
    r.core_concept = j.at("core_concept").is_null() ? std::nullopt
                                                     : std::optional(j.at("core_concept").get<CoreConcept>());
    r.discourse_sections = j.at("discourse_sections").is_null()
                               ? std::nullopt
                               : std::optional(j.at("discourse_sections").get<DiscourseSections>());
    j.at("stage_trace").get_to(r.stage_trace);
}

void to_json(json& j, const ValidationReport& r) {
    auto issues = [](const std::vector<Issue>& v) {
        json arr = json::array();
        for (const auto& i : v) {
            arr.push_back({{"kind", std::string(to_string(i.kind))}, {"offending_id", i.offending_id}, {"message", i.message}});
        }
        return arr;
    };
    j = json{{"ok", r.ok}, {"violations", issues(r.violations)}, {"warnings", issues(r.warnings)}};
}

std::string canonical_json(const AnalysisResult& result) {
    return json(result).dump();
}

AnalysisResult parse_result_json(std::string_view bytes) {
    try {
        return json::parse(bytes).get<AnalysisResult>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ContractViolation, std::string("not a serialized analysis result: ") + e.what());
    }
}

}  // namespace qda
