#pragma once

// Agent roles, their typed hand-off payloads, prompt rendering and the
// parsing of raw completions back into payloads.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "qda/core_model.hpp"

namespace qda {

enum class AgentRole {
    Analyzer,
    Coder,
    CodeReviewer,
    SubCategorizer,
    Categorizer,
    ThemeSynthesizer,
    Summarizer,
    PatternExtractor,
    KeyPatternIdentifier,
    LanguageAnalyzer,
    ContextInterpreter,
    GroundedCoder,
    GroundedCategorizer,
    GroundedPatternAgent,
    GroundedThemeAgent,
    CoreCoder,
};

inline constexpr AgentRole kAllRoles[] = {
    AgentRole::Analyzer,          AgentRole::Coder,               AgentRole::CodeReviewer,
    AgentRole::SubCategorizer,    AgentRole::Categorizer,         AgentRole::ThemeSynthesizer,
    AgentRole::Summarizer,        AgentRole::PatternExtractor,    AgentRole::KeyPatternIdentifier,
    AgentRole::LanguageAnalyzer,  AgentRole::ContextInterpreter,  AgentRole::GroundedCoder,
    AgentRole::GroundedCategorizer, AgentRole::GroundedPatternAgent, AgentRole::GroundedThemeAgent,
    AgentRole::CoreCoder,
};

std::string_view to_string(AgentRole r) noexcept;
std::optional<AgentRole> parse_role(std::string_view name) noexcept;

enum class PayloadKind {
    RawText,
    SummaryText,
    CodeSet,
    GroupedCodes,
    CategorySet,
    ThemeSet,
    PatternSet,
    DiscourseSection,
    CoreConceptPayload,
};

std::string_view to_string(PayloadKind k) noexcept;

PayloadKind input_kind(AgentRole r) noexcept;
PayloadKind output_kind(AgentRole r) noexcept;

/// Canonical agent order for a method.
std::vector<AgentRole> role_sequence(Method m);

// ---------------------------------------------------------------------------
// Payloads. Every variant carries the source segments it relies on so that
// prompts can quote them and provenance can be checked.

struct SourceSegment {
    int id = 0;
    std::string text;

    friend bool operator==(const SourceSegment&, const SourceSegment&) = default;
};

namespace payload {

struct RawText {
    std::vector<SourceSegment> segments;
    friend bool operator==(const RawText&, const RawText&) = default;
};

struct SummaryText {
    std::string summary;
    std::vector<SourceSegment> sources;
    std::vector<int> cited_segments;  // as reported by the agent; empty = all sources
    friend bool operator==(const SummaryText&, const SummaryText&) = default;
};

struct CodeSet {
    std::vector<Code> codes;
    std::vector<SourceSegment> sources;
    friend bool operator==(const CodeSet&, const CodeSet&) = default;
};

struct GroupedCodes {
    std::vector<SubCategory> subcategories;
    std::vector<Code> codes;
    std::vector<SourceSegment> sources;
    friend bool operator==(const GroupedCodes&, const GroupedCodes&) = default;
};

struct CategorySet {
    std::vector<Category> categories;
    std::vector<SubCategory> subcategories;
    std::vector<Code> codes;
    std::vector<SourceSegment> sources;
    friend bool operator==(const CategorySet&, const CategorySet&) = default;
};

struct ThemeSet {
    std::vector<Theme> themes;
    std::vector<Category> categories;
    std::vector<Pattern> patterns;
    std::vector<SourceSegment> sources;
    friend bool operator==(const ThemeSet&, const ThemeSet&) = default;
};

/// Patterns; content analysis also returns categories and themes here.
/// Theme member references that are not input category ids are kept as
/// labels and resolved by the pipeline.
struct PatternSet {
    std::vector<Pattern> patterns;
    std::vector<Category> categories;
    std::vector<Theme> themes;
    std::vector<Code> codes;
    std::vector<SourceSegment> sources;
    friend bool operator==(const PatternSet&, const PatternSet&) = default;
};

struct DiscourseSection {
    std::string analysis;
    friend bool operator==(const DiscourseSection&, const DiscourseSection&) = default;
};

struct CoreConceptPayload {
    std::optional<CoreConcept> core;
    friend bool operator==(const CoreConceptPayload&, const CoreConceptPayload&) = default;
};

}  // namespace payload

using StagePayload = std::variant<payload::RawText, payload::SummaryText, payload::CodeSet, payload::GroupedCodes,
                                  payload::CategorySet, payload::ThemeSet, payload::PatternSet,
                                  payload::DiscourseSection, payload::CoreConceptPayload>;

PayloadKind kind_of(const StagePayload& p) noexcept;

/// Every segment id the payload mentions: its sources and all item citations.
std::vector<int> referenced_segments(const StagePayload& p);

// ---------------------------------------------------------------------------
// Prompts

inline constexpr std::string_view kSegmentsEndMarker = "\xC2\xAB[end of segments]\xC2\xBB";
inline constexpr std::string_view kGoalBegin = "=== USER ANALYSIS GOAL ===";
inline constexpr std::string_view kGoalEnd = "=== END USER ANALYSIS GOAL ===";

/// «[S<id>]»
std::string segment_marker(int id);

struct RenderedPrompt {
    std::string system_instruction;
    std::string user_content;
};

/// Fills the role's versioned template. Throws Error(PayloadKindMismatch)
/// when the payload is not the role's input kind, Error(InvalidArgument) for
/// a blank custom instruction.
RenderedPrompt render_prompt(AgentRole role, const StagePayload& payload,
                             const std::optional<std::string>& custom_instruction = std::nullopt,
                             std::optional<Method> method = std::nullopt);

/// JSON schema text published for a payload kind.
const std::string& output_schema_text(PayloadKind kind);

// ---------------------------------------------------------------------------
// Output parsing

/// The JSON text of the first fenced block, or nullopt when there is none.
/// An unterminated fence runs to the end of input.
std::optional<std::string> extract_fenced_json(std::string_view raw);

/// Applies the bounded repairs: smart quotes to ASCII quotes, at most one
/// unterminated string and one unclosed bracket closed at end of input,
/// trailing commas before '}' / ']' removed. nullopt when repair is not
/// possible within those bounds.
std::optional<std::string> repair_json(std::string_view json_text);

/// Extracts, repairs, schema-checks and maps a completion to the role's output
/// payload. Provisional ids are assigned in order (code-1, subcat-1, ...).
/// Throws AgentOutputError with kind AgentOutputUnparseable or SchemaViolation.
StagePayload parse_agent_output(AgentRole role, std::string_view raw);

}  // namespace qda
