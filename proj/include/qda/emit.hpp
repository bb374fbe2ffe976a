#pragma once

// Output formats for a finished analysis: a one-row-per-code CSV, a
// markdown report, and the canonical JSON "output area" view.

#include <string>
#include <string_view>
#include <vector>

#include "qda/core_model.hpp"

namespace qda {

inline constexpr std::string_view kCsvHeader = "code,subcategory,category,theme,supporting_segments,excerpt";

/// One CSV data row. Hierarchy columns hold labels; a code linked to several
/// themes lists them joined by "; ".
struct CsvRow {
    std::string code;
    std::string subcategory;
    std::string category;
    std::string theme;
    std::vector<int> supporting_segments;
    std::string excerpt;

    friend bool operator==(const CsvRow&, const CsvRow&) = default;
};

/// RFC 4180, LF line endings, header first, one row per code in id order.
std::string to_csv(const AnalysisResult& result);

/// Generic RFC 4180 reader (accepts LF or CRLF). Throws Error(DecodeError)
/// on an unterminated quote or stray quote inside an unquoted field.
std::vector<std::vector<std::string>> parse_csv(std::string_view bytes);

/// Reads a file written by to_csv back into rows. Throws Error(DecodeError)
/// when the header or column count is wrong.
std::vector<CsvRow> read_csv(std::string_view bytes);

/// Markdown report. `document`, when given, contributes title-block metadata.
std::string to_report(const AnalysisResult& result, const Document* document = nullptr);

/// Canonical JSON bytes.
std::string to_output_area(const AnalysisResult& result);

/// Dispatches on the format.
std::string emit(const AnalysisResult& result, OutputFormat format, const Document* document = nullptr);

std::string_view content_type(OutputFormat format) noexcept;
std::string_view file_extension(OutputFormat format) noexcept;

}  // namespace qda
