#pragma once

// Turns every supported input modality into a segmented Document: inline
// text, uploaded files, web pages, GitHub threads and transcripts.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "qda/core_model.hpp"
#include "qda/http.hpp"

namespace qda {

struct FetchConfig {
    std::string user_agent = "qda/1.0";
    int timeout_ms = 30000;
    std::size_t max_bytes = 2 * 1024 * 1024;
    std::optional<std::string> github_token_env_var;
    std::string github_api_base = "https://api.github.com";
    std::shared_ptr<http::Transport> transport;  // default transport when null
    SegmentationPolicy segmentation;
};

/// Dispatches to the modality-specific ingestion below.
Document ingest(const SourceSpec& source, const FetchConfig& config = {});

// ---------------------------------------------------------------------------
// Files

/// Converts file bytes of a declared kind into text. Kinds other than
/// txt, md, doc-text and pdf are served by registered adapters.
class TextExtractor {
public:
    virtual ~TextExtractor() = default;
    virtual std::string extract(std::string_view bytes) const = 0;
};

/// Installs (or replaces, or with nullptr removes) the adapter for a kind.
void register_extractor(const std::string& kind, std::shared_ptr<const TextExtractor> extractor);

/// Throws Error(DecodeError), Error(ExtractionIncomplete) or Error(UnsupportedFormat).
std::string extract_text(std::string_view bytes, std::string_view declared_kind);

/// Built-in PDF adapter: text-showing operators of uncompressed and
/// Flate-compressed content streams.
std::string extract_pdf_text(std::string_view bytes);

/// Declared kind from a filename extension; empty when unknown.
std::string kind_from_filename(std::string_view filename);

// ---------------------------------------------------------------------------
// Links

struct GitHubThreadRef {
    std::string owner;
    std::string repo;
    std::string kind;  // issues or pull
    int number = 0;
};

/// Recognizes github.com issue and pull request URLs.
std::optional<GitHubThreadRef> parse_github_url(std::string_view url);

/// Title, blank line, body, then each comment prefixed «[Cn] author:».
/// Throws Error(NotAThread), Error(FetchFailed), RateLimitedError, Error(TooLarge).
Document fetch_github(const std::string& url, const FetchConfig& config = {});

/// Throws Error(FetchFailed), Error(EmptyAfterStrip), Error(TooLarge).
Document fetch_web(const std::string& url, const FetchConfig& config = {});

/// Visible text of an HTML page: script, style and head removed, block
/// elements become paragraph breaks, entities decoded, whitespace collapsed.
std::string html_to_text(std::string_view html);

/// Contents of the first <title> element, whitespace-collapsed.
std::string html_title(std::string_view html);

// ---------------------------------------------------------------------------
// Transcripts

/// True when a line starts with a speaker marker such as "Interviewer:".
bool is_speaker_line(std::string_view line);

/// With markers each speaker turn becomes a segment (split further when it
/// exceeds the policy maximum); without, paragraph segmentation applies.
/// metadata["speakers"] lists speakers in order of first appearance.
Document ingest_transcript(std::string_view text, MarkerMode markers = MarkerMode::Auto,
                           const SegmentationPolicy& policy = {});

}  // namespace qda
