#pragma once

// Small UTF-8 and text helpers shared by ingestion, segmentation and the mock
// backend. Everything here works on byte offsets into UTF-8 strings.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qda::text {

bool is_valid_utf8(std::string_view s) noexcept;

/// True when `offset` does not point into the middle of a multi-byte sequence.
inline bool is_char_boundary(std::string_view s, std::size_t offset) noexcept {
    if (offset == 0 || offset >= s.size()) {
        return offset <= s.size();
    }
    return (static_cast<unsigned char>(s[offset]) & 0xC0U) != 0x80U;
}

/// Number of code points in a valid UTF-8 string.
std::size_t code_point_count(std::string_view s) noexcept;

/// Longest prefix of `s` holding at most `n` code points.
std::string_view utf8_prefix(std::string_view s, std::size_t n) noexcept;

/// Appends the UTF-8 encoding of `cp` (invalid code points become U+FFFD).
void append_utf8(std::string& out, std::uint32_t cp);

/// Converts Latin-1 / Windows-1252 bytes to UTF-8.
std::string latin1_to_utf8(std::string_view s);

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) noexcept;

/// CRLF/CR to LF, drops a leading BOM, trims surrounding whitespace.
std::string normalize(std::string_view s);

/// Replaces every whitespace run by a single space and trims.
std::string collapse_whitespace(std::string_view s);

std::string ascii_lower(std::string_view s);

bool iequals(std::string_view a, std::string_view b) noexcept;

/// Byte ranges [begin, end) of sentences inside `s`. A sentence ends after a
/// run of '.', '!' or '?' (plus closing quotes/brackets) that is followed by
/// whitespace or the end of input. Ranges exclude surrounding whitespace.
struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const Range&, const Range&) = default;
};

std::vector<Range> sentence_ranges(std::string_view s);

/// Splits on `sep`, keeping empty pieces.
std::vector<std::string> split(std::string_view s, char sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view s);

}  // namespace qda::text
