#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "qda/ingest.hpp"
#include "qda/text.hpp"

namespace qda {

namespace {

constexpr char kBreak = '\x1E';  // paragraph-break sentinel, removed before returning

bool is_block(std::string_view name) {
    static const std::unordered_set<std::string_view> blocks{
        "address", "article", "aside",  "blockquote", "br",      "caption", "dd",     "details", "dialog",
        "div",     "dl",      "dt",     "fieldset",   "figcaption", "figure", "footer", "form",   "h1",
        "h2",      "h3",      "h4",     "h5",         "h6",      "header",  "hgroup", "hr",      "li",
        "main",    "nav",     "ol",     "p",          "pre",     "section", "summary", "table",  "tbody",
        "td",      "tfoot",   "th",     "thead",      "tr",      "ul",      "body",   "html"};
    return blocks.contains(name);
}

bool is_hidden(std::string_view name) {
    return name == "script" || name == "style" || name == "head" || name == "noscript" || name == "template" ||
           name == "svg" || name == "iframe" || name == "object";
}

std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from) {
    if (needle.empty() || hay.size() < needle.size()) return std::string_view::npos;
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
        if (text::iequals(hay.substr(i, needle.size()), needle)) return i;
    }
    return std::string_view::npos;
}

/// Index just past the '>' closing a tag that opens at `lt`, honoring quoted attributes.
std::size_t tag_end(std::string_view s, std::size_t lt) {
    char quote = 0;
    for (std::size_t i = lt + 1; i < s.size(); ++i) {
        const char c = s[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i + 1;
        }
    }
    return s.size();
}

std::string tag_name(std::string_view tag) {
    std::size_t i = 1;
    if (i < tag.size() && tag[i] == '/') ++i;
    std::string name;
    while (i < tag.size() && (std::isalnum(static_cast<unsigned char>(tag[i])) || tag[i] == '-')) {
        name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(tag[i]))));
        ++i;
    }
    return name;
}

bool decode_entity(std::string_view s, std::size_t amp, std::string& out, std::size_t& consumed) {
    static const std::unordered_map<std::string_view, std::uint32_t> named{
        {"amp", '&'},       {"lt", '<'},         {"gt", '>'},         {"quot", '"'},      {"apos", '\''},
        {"nbsp", ' '},      {"mdash", 0x2014},   {"ndash", 0x2013},   {"hellip", 0x2026}, {"rsquo", 0x2019},
        {"lsquo", 0x2018},  {"rdquo", 0x201D},   {"ldquo", 0x201C},   {"copy", 0xA9},     {"reg", 0xAE},
        {"trade", 0x2122},  {"laquo", 0xAB},     {"raquo", 0xBB},     {"middot", 0xB7},   {"bull", 0x2022},
        {"eacute", 0xE9},   {"egrave", 0xE8},    {"aacute", 0xE1},    {"agrave", 0xE0},   {"ouml", 0xF6},
        {"uuml", 0xFC},     {"auml", 0xE4},      {"szlig", 0xDF},     {"ccedil", 0xE7},   {"ntilde", 0xF1},
        {"euro", 0x20AC},   {"pound", 0xA3},     {"times", 0xD7},     {"deg", 0xB0},      {"shy", 0xAD}};
    const auto semi = s.find(';', amp + 1);
    if (semi == std::string_view::npos || semi - amp > 12) return false;
    const std::string_view body = s.substr(amp + 1, semi - amp - 1);
    std::uint32_t cp = 0;
    if (!body.empty() && body[0] == '#') {
        const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
        const std::string_view digits = body.substr(hex ? 2 : 1);
        if (digits.empty()) return false;
        for (char c : digits) {
            const int v = std::isdigit(static_cast<unsigned char>(c))         ? c - '0'
                          : hex && std::isxdigit(static_cast<unsigned char>(c)) ? std::tolower(c) - 'a' + 10
                                                                                : -1;
            if (v < 0) return false;
            cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
            if (cp > 0x10FFFF) return false;
        }
        if (cp == 0) cp = 0xFFFD;
    } else {
        auto it = named.find(body);
        if (it == named.end()) return false;
        cp = it->second;
    }
    if (cp == 0xA0 || cp == 0xAD) {
        if (cp == 0xA0) out.push_back(' ');
    } else {
        text::append_utf8(out, cp);
    }
    consumed = semi - amp + 1;
    return true;
}

}  // namespace

std::string html_to_text(std::string_view html) {
    std::string flat;
    flat.reserve(html.size());
    std::size_t i = 0;
    while (i < html.size()) {
        const char c = html[i];
        if (c == '<') {
            if (html.substr(i, 4) == "<!--") {
                const auto close = html.find("-->", i + 4);
                i = close == std::string_view::npos ? html.size() : close + 3;
                continue;
            }
            if (i + 1 < html.size() && (html[i + 1] == '!' || html[i + 1] == '?')) {
                i = tag_end(html, i);
                continue;
            }
            const bool tagish = i + 1 < html.size() &&
                                (std::isalpha(static_cast<unsigned char>(html[i + 1])) || html[i + 1] == '/');
            if (!tagish) {
                flat.push_back('<');
                ++i;
                continue;
            }
            const std::size_t end = tag_end(html, i);
            const std::string_view tag = html.substr(i, end - i);
            const std::string name = tag_name(tag);
            const bool closing = tag.size() > 1 && tag[1] == '/';
            const bool self_closing = tag.size() > 2 && tag[tag.size() - 2] == '/';
            i = end;
            if (!closing && !self_closing && is_hidden(name)) {
                const auto close = find_ci(html, "</" + name, i);
                i = close == std::string_view::npos ? html.size() : tag_end(html, close);
                continue;
            }
            if (is_block(name)) {
                flat.push_back(kBreak);
            }
            continue;
        }
        if (c == '&') {
            std::size_t consumed = 0;
            if (decode_entity(html, i, flat, consumed)) {
                i += consumed;
                continue;
            }
        }
        flat.push_back(c);
        ++i;
    }
    std::vector<std::string> paragraphs;
    std::size_t start = 0;
    while (start <= flat.size()) {
        const auto stop = flat.find(kBreak, start);
        const std::size_t end = stop == std::string::npos ? flat.size() : stop;
        std::string para = text::collapse_whitespace(std::string_view(flat).substr(start, end - start));
        if (!para.empty()) paragraphs.push_back(std::move(para));
        if (stop == std::string::npos) break;
        start = stop + 1;
    }
    return text::join(paragraphs, "\n\n");
}

std::string html_title(std::string_view html) {
    const auto open = find_ci(html, "<title", 0);
    if (open == std::string_view::npos) return {};
    const std::size_t body = tag_end(html, open);
    const auto close = find_ci(html, "</title", body);
    if (close == std::string_view::npos) return {};
    // decode entities by running the body through the stripper
    return text::collapse_whitespace(html_to_text(html.substr(body, close - body)));
}

}  // namespace qda
