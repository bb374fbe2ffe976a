#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "qda/error.hpp"
#include "qda/ingest.hpp"
#include "qda/text.hpp"

namespace qda {

namespace {

bool is_ws(char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '\f' || c == '\0';
}

bool is_delim(char c) {
    return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' || c == '}' ||
           c == '/' || c == '%';
}

std::optional<std::string> inflate_bytes(std::string_view in) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) return std::nullopt;
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::string out;
    char buf[16384];
    int rc = Z_OK;
    while (rc == Z_OK) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(buf, sizeof buf - zs.avail_out);
        if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;  // truncated but usable
        if (out.size() > (64U << 20U)) {
            rc = Z_MEM_ERROR;
        }
    }
    inflateEnd(&zs);
    if (rc != Z_STREAM_END && rc != Z_BUF_ERROR) return std::nullopt;
    return out;
}

std::optional<std::string> ascii85(std::string_view in) {
    std::string out;
    std::uint32_t group = 0;
    int n = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const char c = in[i];
        if (is_ws(c)) continue;
        if (c == '~') break;
        if (c == 'z' && n == 0) {
            out.append(4, '\0');
            continue;
        }
        if (c < '!' || c > 'u') return std::nullopt;
        group = group * 85 + static_cast<std::uint32_t>(c - '!');
        if (++n == 5) {
            for (int k = 3; k >= 0; --k) out.push_back(static_cast<char>((group >> (8 * k)) & 0xFFU));
            group = 0;
            n = 0;
        }
    }
    if (n > 0) {
        for (int k = n; k < 5; ++k) group = group * 85 + 84;
        for (int k = 3; k > 3 - (n - 1); --k) out.push_back(static_cast<char>((group >> (8 * k)) & 0xFFU));
    }
    return out;
}

std::string squeeze(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (!is_ws(c)) out.push_back(c);
    }
    return out;
}

/// Filter names of a stream dictionary, in application order.
std::vector<std::string> filters_of(const std::string& dict) {
    std::vector<std::string> out;
    const auto at = dict.find("/Filter");
    if (at == std::string::npos) return out;
    std::size_t i = at + 7;
    const bool array = i < dict.size() && dict[i] == '[';
    if (array) ++i;
    while (i < dict.size() && dict[i] == '/') {
        std::size_t j = i + 1;
        while (j < dict.size() && std::isalnum(static_cast<unsigned char>(dict[j]))) ++j;
        out.push_back(dict.substr(i + 1, j - i - 1));
        i = j;
        if (!array) break;
    }
    return out;
}

struct Token {
    enum Kind { Number, String, Name, Operator, ArrayBegin, ArrayEnd } kind;
    std::string text;
    double number = 0;
};

/// Decodes PDF string bytes: UTF-16BE when marked or evidently two-byte,
/// otherwise a single-byte Windows encoding.
std::string decode_string(const std::string& bytes) {
    bool utf16 = bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFE &&
                 static_cast<unsigned char>(bytes[1]) == 0xFF;
    std::size_t start = utf16 ? 2 : 0;
    if (!utf16 && bytes.size() >= 2 && bytes.size() % 2 == 0) {
        utf16 = true;
        for (std::size_t i = 0; i < bytes.size(); i += 2) {
            if (bytes[i] != '\0' || bytes[i + 1] == '\0') {
                utf16 = false;
                break;
            }
        }
    }
    if (utf16) {
        std::string out;
        for (std::size_t i = start; i + 1 < bytes.size(); i += 2) {
            const std::uint32_t cp = (static_cast<unsigned char>(bytes[i]) << 8U) |
                                     static_cast<unsigned char>(bytes[i + 1]);
            text::append_utf8(out, cp);
        }
        return out;
    }
    std::string clean;
    for (char c : bytes) {
        const auto u = static_cast<unsigned char>(c);
        clean.push_back(u < 0x20 && c != '\t' ? ' ' : c);
    }
    return text::latin1_to_utf8(clean);
}

class ContentScanner {
public:
    explicit ContentScanner(std::string_view s) : s_(s) {}

    std::optional<Token> next() {
        skip();
        if (i_ >= s_.size()) return std::nullopt;
        const char c = s_[i_];
        if (c == '(') return Token{Token::String, literal(), 0};
        if (c == '<' && i_ + 1 < s_.size() && s_[i_ + 1] != '<') return Token{Token::String, hex(), 0};
        if (c == '[') {
            ++i_;
            return Token{Token::ArrayBegin, "[", 0};
        }
        if (c == ']') {
            ++i_;
            return Token{Token::ArrayEnd, "]", 0};
        }
        if (c == '/') {
            const std::size_t b = i_++;
            while (i_ < s_.size() && !is_ws(s_[i_]) && !is_delim(s_[i_])) ++i_;
            return Token{Token::Name, std::string(s_.substr(b, i_ - b)), 0};
        }
        if (c == '<' || c == '>' || c == '{' || c == '}' || c == ')') {
            // dictionary delimiters and strays carry no text
            ++i_;
            if (i_ < s_.size() && (s_[i_] == '<' || s_[i_] == '>')) ++i_;
            return Token{Token::Operator, "", 0};
        }
        const std::size_t b = i_;
        while (i_ < s_.size() && !is_ws(s_[i_]) && !is_delim(s_[i_])) ++i_;
        const std::string word(s_.substr(b, i_ - b));
        if (word.empty()) {
            ++i_;
            return Token{Token::Operator, "", 0};
        }
        char* end = nullptr;
        const double v = std::strtod(word.c_str(), &end);
        if (end != word.c_str() && *end == '\0') return Token{Token::Number, word, v};
        return Token{Token::Operator, word, 0};
    }

    /// Skips inline image data (BI ... ID <bytes> EI).
    void skip_inline_image() {
        const auto ei = s_.find("EI", i_);
        i_ = ei == std::string_view::npos ? s_.size() : ei + 2;
    }

private:
    void skip() {
        while (i_ < s_.size()) {
            if (is_ws(s_[i_])) {
                ++i_;
            } else if (s_[i_] == '%') {
                while (i_ < s_.size() && s_[i_] != '\n' && s_[i_] != '\r') ++i_;
            } else {
                break;
            }
        }
    }

    std::string literal() {
        std::string out;
        int depth = 0;
        ++i_;
        while (i_ < s_.size()) {
            const char c = s_[i_++];
            if (c == '\\' && i_ < s_.size()) {
                const char e = s_[i_++];
                switch (e) {
                    case 'n': out.push_back('\n'); break;
                    case 'r': out.push_back('\r'); break;
                    case 't': out.push_back('\t'); break;
                    case 'b': out.push_back('\b'); break;
                    case 'f': out.push_back('\f'); break;
                    case '\r':
                        if (i_ < s_.size() && s_[i_] == '\n') ++i_;
                        break;
                    case '\n': break;
                    default:
                        if (e >= '0' && e <= '7') {
                            int v = e - '0';
                            for (int k = 0; k < 2 && i_ < s_.size() && s_[i_] >= '0' && s_[i_] <= '7'; ++k) {
                                v = v * 8 + (s_[i_++] - '0');
                            }
                            out.push_back(static_cast<char>(v & 0xFF));
                        } else {
                            out.push_back(e);
                        }
                }
            } else if (c == '(') {
                ++depth;
                out.push_back(c);
            } else if (c == ')') {
                if (depth == 0) break;
                --depth;
                out.push_back(c);
            } else {
                out.push_back(c);
            }
        }
        return out;
    }

    std::string hex() {
        std::string digits;
        ++i_;
        while (i_ < s_.size() && s_[i_] != '>') {
            if (std::isxdigit(static_cast<unsigned char>(s_[i_]))) digits.push_back(s_[i_]);
            ++i_;
        }
        ++i_;
        if (digits.size() % 2) digits.push_back('0');
        std::string out;
        for (std::size_t k = 0; k < digits.size(); k += 2) {
            out.push_back(static_cast<char>(std::stoi(digits.substr(k, 2), nullptr, 16)));
        }
        return out;
    }

    std::string_view s_;
    std::size_t i_ = 0;
};

/// Appends the text shown by a content stream. Returns whether it showed any.
bool show_text(std::string_view content, std::string& out) {
    ContentScanner sc(content);
    std::vector<Token> operands;
    std::vector<Token> array;
    bool in_array = false;
    bool shown = false;
    bool have_y = false;
    double last_y = 0;
    auto newline = [&] {
        if (!out.empty() && out.back() != '\n') out.push_back('\n');
    };
    auto append = [&](const std::string& bytes) {
        const std::string s = decode_string(bytes);
        if (!s.empty()) {
            out += s;
            shown = true;
        }
    };
    while (auto t = sc.next()) {
        if (t->kind == Token::ArrayBegin) {
            in_array = true;
            array.clear();
            continue;
        }
        if (t->kind == Token::ArrayEnd) {
            in_array = false;
            operands.push_back(Token{Token::ArrayEnd, "", 0});
            continue;
        }
        if (in_array) {
            array.push_back(*t);
            continue;
        }
        if (t->kind != Token::Operator) {
            operands.push_back(*t);
            continue;
        }
        const std::string& op = t->text;
        if (op == "BT") {
            have_y = false;
        } else if (op == "ET") {
            newline();
        } else if (op == "Tj" && !operands.empty() && operands.back().kind == Token::String) {
            append(operands.back().text);
        } else if ((op == "'" || op == "\"") && !operands.empty() && operands.back().kind == Token::String) {
            newline();
            append(operands.back().text);
        } else if (op == "TJ") {
            for (const auto& item : array) {
                if (item.kind == Token::String) {
                    append(item.text);
                } else if (item.kind == Token::Number && item.number < -180 && !out.empty() && out.back() != ' ' &&
                           out.back() != '\n') {
                    out.push_back(' ');
                }
            }
        } else if ((op == "Td" || op == "TD") && operands.size() >= 2) {
            const double tx = operands[operands.size() - 2].number;
            const double ty = operands.back().number;
            if (std::fabs(ty) > 0.01) {
                newline();
            } else if (tx > 0.01 && !out.empty() && out.back() != ' ' && out.back() != '\n') {
                out.push_back(' ');
            }
        } else if (op == "T*") {
            newline();
        } else if (op == "Tm" && operands.size() >= 6) {
            const double y = operands.back().number;
            if (have_y && std::fabs(last_y - y) > 0.01) newline();
            last_y = y;
            have_y = true;
        } else if (op == "BI") {
            sc.skip_inline_image();
        }
        operands.clear();
        array.clear();
    }
    newline();
    return shown;
}

}  // namespace

std::string extract_pdf_text(std::string_view bytes) {
    const auto magic = bytes.substr(0, 1024).find("%PDF-");
    if (magic == std::string_view::npos) {
        throw Error(ErrorKind::DecodeError, "file is not a PDF document");
    }
    if (bytes.find("/Encrypt") != std::string_view::npos) {
        throw Error(ErrorKind::ExtractionIncomplete, "encrypted PDF documents are not supported");
    }
    std::string out;
    int undecodable = 0;
    std::size_t pos = 0;
    while (true) {
        const auto kw = bytes.find("stream", pos);
        if (kw == std::string_view::npos) break;
        pos = kw + 6;
        if (kw >= 3 && bytes.substr(kw - 3, 3) == "end") continue;
        std::size_t back = kw;
        while (back > 0 && is_ws(bytes[back - 1])) --back;
        if (back < 2 || bytes.substr(back - 2, 2) != ">>") continue;

        std::size_t data = kw + 6;
        if (data < bytes.size() && bytes[data] == '\r') ++data;
        if (data < bytes.size() && bytes[data] == '\n') ++data;
        const auto stop = bytes.find("endstream", data);
        if (stop == std::string_view::npos) break;
        std::size_t data_end = stop;
        while (data_end > data && (bytes[data_end - 1] == '\n' || bytes[data_end - 1] == '\r')) --data_end;
        pos = stop + 9;

        const auto obj = bytes.rfind(" obj", kw);
        const std::size_t dict_begin = obj == std::string_view::npos ? 0 : obj;
        const std::string_view raw_dict = bytes.substr(dict_begin, back - dict_begin);
        const std::string dict = squeeze(raw_dict);
        // embedded font programs carry /Length1 or /Length2 keys
        static const std::regex font_program(R"(/Length[123][\s/>])");
        if (std::regex_search(raw_dict.begin(), raw_dict.end(), font_program)) continue;
        static const char* const skipped[] = {"/Subtype/Image",
                                              "/Type/XRef",     "/Type/ObjStm",    "/Type/Metadata",
                                              "/Subtype/Type1C", "/Subtype/CIDFontType0C", "/Subtype/OpenType",
                                              "/Type/EmbeddedFile", "/Subtype/XML"};
        if (std::any_of(std::begin(skipped), std::end(skipped),
                        [&](const char* s) { return dict.find(s) != std::string::npos; })) {
            continue;
        }
        std::optional<std::string> decoded(std::string(bytes.substr(data, data_end - data)));
        for (const auto& f : filters_of(dict)) {
            if (!decoded) break;
            if (f == "FlateDecode" || f == "Fl") {
                decoded = inflate_bytes(*decoded);
            } else if (f == "ASCII85Decode" || f == "A85") {
                decoded = ascii85(*decoded);
            } else {
                decoded.reset();
            }
        }
        if (!decoded) {
            ++undecodable;
            continue;
        }
        show_text(*decoded, out);
    }
    std::vector<std::string> lines;
    for (const auto& line : text::split(out, '\n')) {
        std::string l = text::collapse_whitespace(line);
        if (!l.empty()) lines.push_back(std::move(l));
    }
    if (undecodable > 0) {
        throw Error(ErrorKind::ExtractionIncomplete, std::to_string(undecodable) +
                                                         " PDF stream(s) use unsupported encodings; "
                                                         "convert the file to text first");
    }
    if (lines.empty()) {
        throw Error(ErrorKind::ExtractionIncomplete,
                    "no extractable text found in the PDF (it may be scanned or image-only)");
    }
    return text::join(lines, "\n");
}

}  // namespace qda
