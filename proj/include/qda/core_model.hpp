#pragma once

// Shared data model: documents and their segments, the qualitative coding
// hierarchy, analysis results, canonical JSON and result validation.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace qda {

enum class Method { Thematic, Narrative, Content, Discourse, GroundedTheory };

inline constexpr Method kAllMethods[] = {Method::Thematic, Method::Narrative, Method::Content,
                                         Method::Discourse, Method::GroundedTheory};

/// Wire name: thematic, narrative, content, discourse, grounded-theory.
std::string_view to_string(Method m) noexcept;
std::string_view display_name(Method m) noexcept;
/// Accepts wire names, display names and a few aliases, case-insensitively.
std::optional<Method> parse_method(std::string_view name) noexcept;
std::vector<std::string> method_names();

enum class OutputFormat { Csv, OutputArea, DocReport };

/// Wire name: csv, json, report.
std::string_view to_string(OutputFormat f) noexcept;
std::optional<OutputFormat> parse_output_format(std::string_view name) noexcept;

/// Result tiers an analysis can populate.
enum class Tier { Summary, Codes, Subcategories, Categories, Themes, Patterns, CoreConcept, DiscourseSections };

std::string_view to_string(Tier t) noexcept;

/// Tiers a method must populate, in report order.
const std::vector<Tier>& result_shape(Method m);
bool shape_has(Method m, Tier t);

/// Agents per method: 6/4/3/3/5.
std::size_t expected_stage_count(Method m) noexcept;

// ---------------------------------------------------------------------------
// Sources and documents

enum class MarkerMode { Auto, On, Off };

struct InlineText {
    std::string text;
};

struct FileUpload {
    std::string filename;
    std::string bytes;
    std::string declared_kind;  // txt, md, pdf, doc-text
};

struct WebLink {
    std::string url;
};

struct GitHubLink {
    std::string url;
};

struct Transcript {
    std::string text;
    MarkerMode markers = MarkerMode::Auto;
};

using SourceSpec = std::variant<InlineText, FileUpload, WebLink, GitHubLink, Transcript>;

/// inline-text, file-upload, web-link, github-link, transcript
std::string_view modality_name(const SourceSpec& s) noexcept;

struct Segment {
    int id = 0;
    std::size_t begin = 0;  // UTF-8 byte offsets into Document::text, half-open
    std::size_t end = 0;
    std::string text;

    friend bool operator==(const Segment&, const Segment&) = default;
};

struct SegmentationPolicy {
    std::size_t max_paragraph_chars = 2000;
};

struct Document {
    std::string doc_id;
    SourceSpec source;
    std::string text;
    std::vector<Segment> segments;
    std::map<std::string, std::string> metadata;

    const Segment* find_segment(int id) const noexcept;
};

/// Paragraph-first segmentation with sentence fallback for long paragraphs.
/// `text` must already be normalized (see text::normalize); offsets refer to it.
/// Throws Error(EmptyInput) for empty or whitespace-only text.
std::vector<Segment> segment_document(std::string_view text, const SegmentationPolicy& policy = {});

/// Splits an over-long span into sentence-packed segments of at most
/// `max_chars` bytes each (hard split at a code point boundary when a single
/// sentence is longer). Used by segment_document and transcript turns.
void append_span_segments(std::string_view text, std::size_t begin, std::size_t end, std::size_t max_chars,
                          std::vector<Segment>& out);

/// Builds a Document from already-normalized text; doc_id is derived from the text.
Document make_document(std::string text, SourceSpec source, std::vector<Segment> segments,
                       std::map<std::string, std::string> metadata = {});

/// Invariant violations of a document (empty when well-formed).
std::vector<std::string> check_document(const Document& doc);

// ---------------------------------------------------------------------------
// Coding hierarchy

struct Code {
    std::string id;
    std::string label;
    std::string description;
    std::vector<int> supporting_segments;
    std::string supporting_excerpt;

    friend bool operator==(const Code&, const Code&) = default;
};

struct SubCategory {
    std::string id;
    std::string label;
    std::vector<std::string> member_codes;

    friend bool operator==(const SubCategory&, const SubCategory&) = default;
};

/// Members are subcategory ids (thematic, narrative) or code ids (content, grounded theory).
struct Category {
    std::string id;
    std::string label;
    std::vector<std::string> members;

    friend bool operator==(const Category&, const Category&) = default;
};

struct Theme {
    std::string id;
    std::string label;
    std::string narrative;
    std::vector<std::string> member_categories;

    friend bool operator==(const Theme&, const Theme&) = default;
};

struct Pattern {
    std::string id;
    std::string statement;
    std::vector<int> evidence;

    friend bool operator==(const Pattern&, const Pattern&) = default;
};

struct CoreConcept {
    std::string label;
    std::string theory_narrative;
    std::vector<std::string> linked_categories;

    friend bool operator==(const CoreConcept&, const CoreConcept&) = default;
};

struct DiscourseSections {
    std::vector<Pattern> key_patterns;
    std::string language_analysis;
    std::string broader_context;

    friend bool operator==(const DiscourseSections&, const DiscourseSections&) = default;
};

struct StageRecord {
    int stage_index = 0;
    std::string role;
    std::string started_at;
    std::string finished_at;
    int attempts = 0;
    std::size_t input_chars = 0;
    std::size_t output_chars = 0;

    friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

struct AnalysisResult {
    Method method = Method::Thematic;
    std::string doc_id;
    std::optional<std::string> summary;
    std::vector<Code> codes;
    std::vector<SubCategory> subcategories;
    std::vector<Category> categories;
    std::vector<Theme> themes;
    std::vector<Pattern> patterns;
    std::optional<CoreConcept> core_concept;
    std::optional<DiscourseSections> discourse_sections;
    std::vector<StageRecord> stage_trace;

    friend bool operator==(const AnalysisResult&, const AnalysisResult&) = default;
};

// ---------------------------------------------------------------------------
// Validation

enum class IssueKind {
    DanglingReference,
    StageCountMismatch,
    MissingTier,
    UnexpectedTier,
    EmptyMembers,
    MultipleMembership,
    UnassignedMember,
    DuplicateId,
    InvalidLabel,
    DocumentMismatch,
    EmptyCoding,
    EmptyKeyPatterns,
};

std::string_view to_string(IssueKind k) noexcept;

struct Issue {
    IssueKind kind;
    std::string offending_id;
    std::string message;

    friend bool operator==(const Issue&, const Issue&) = default;
};

struct ValidationReport {
    bool ok = true;
    std::vector<Issue> violations;
    std::vector<Issue> warnings;

    friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

ValidationReport validate_result(const AnalysisResult& result, const Document& document);

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const Segment& s);
void to_json(nlohmann::json& j, const Code& c);
void from_json(const nlohmann::json& j, Code& c);
void to_json(nlohmann::json& j, const SubCategory& s);
void from_json(const nlohmann::json& j, SubCategory& s);
void to_json(nlohmann::json& j, const Category& c);
void from_json(const nlohmann::json& j, Category& c);
void to_json(nlohmann::json& j, const Theme& t);
void from_json(const nlohmann::json& j, Theme& t);
void to_json(nlohmann::json& j, const Pattern& p);
void from_json(const nlohmann::json& j, Pattern& p);
void to_json(nlohmann::json& j, const CoreConcept& c);
void from_json(const nlohmann::json& j, CoreConcept& c);
void to_json(nlohmann::json& j, const DiscourseSections& d);
void from_json(const nlohmann::json& j, DiscourseSections& d);
void to_json(nlohmann::json& j, const StageRecord& s);
void from_json(const nlohmann::json& j, StageRecord& s);
void to_json(nlohmann::json& j, const AnalysisResult& r);
void from_json(const nlohmann::json& j, AnalysisResult& r);
void to_json(nlohmann::json& j, const ValidationReport& r);

/// Alphabetical keys, no insignificant whitespace, UTF-8 passed through.
std::string canonical_json(const AnalysisResult& result);

/// Throws Error(ContractViolation) when the bytes are not a serialized result.
AnalysisResult parse_result_json(std::string_view bytes);

}  // namespace qda
