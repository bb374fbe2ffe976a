#include "qda/ingest.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <mutex>
#include <regex>

#include <json.hpp>

#include "qda/error.hpp"
#include "qda/text.hpp"

namespace qda {

using nlohmann::json;

namespace {

std::string now_iso() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void check_size(std::size_t size, const FetchConfig& config, std::string_view what) {
    if (size > config.max_bytes) {
        throw Error(ErrorKind::TooLarge, std::string(what) + " is " + std::to_string(size) + " bytes, limit is " +
                                             std::to_string(config.max_bytes));
    }
}

Document from_text(std::string_view raw, SourceSpec source, const FetchConfig& config,
                   std::map<std::string, std::string> metadata = {}) {
    std::string text = text::normalize(raw);
    check_size(text.size(), config, "text");
    auto segments = segment_document(text, config.segmentation);
    return make_document(std::move(text), std::move(source), std::move(segments), std::move(metadata));
}

std::shared_ptr<http::Transport> transport_of(const FetchConfig& c) {
    return c.transport ? c.transport : http::default_transport();
}

std::string decode_utf16(std::string_view bytes, bool little_endian) {
    std::string out;
    auto unit = [&](std::size_t i) -> std::uint32_t {
        const auto a = static_cast<unsigned char>(bytes[i]);
        const auto b = static_cast<unsigned char>(bytes[i + 1]);
        return little_endian ? (a | (b << 8U)) : ((a << 8U) | b);
    };
    if (bytes.size() % 2 != 0) {
        throw Error(ErrorKind::DecodeError, "UTF-16 text has an odd number of bytes");
    }
    for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) {
        std::uint32_t cp = unit(i);
        if (cp >= 0xD800 && cp <= 0xDBFF) {
            if (i + 3 >= bytes.size()) {
                throw Error(ErrorKind::DecodeError, "truncated UTF-16 surrogate pair");
            }
            const std::uint32_t lo = unit(i + 2);
            if (lo < 0xDC00 || lo > 0xDFFF) {
                throw Error(ErrorKind::DecodeError, "invalid UTF-16 surrogate pair");
            }
            cp = 0x10000 + ((cp - 0xD800) << 10U) + (lo - 0xDC00);
            i += 2;
        } else if (cp >= 0xDC00 && cp <= 0xDFFF) {
            throw Error(ErrorKind::DecodeError, "unpaired UTF-16 surrogate");
        }
        text::append_utf8(out, cp);
    }
    return out;
}

std::string decode_plain(std::string_view bytes) {
    if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xFE) {
        return decode_utf16(bytes.substr(2), true);
    }
    if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFE &&
        static_cast<unsigned char>(bytes[1]) == 0xFF) {
        return decode_utf16(bytes.substr(2), false);
    }
    if (bytes.substr(0, 3) == "\xEF\xBB\xBF") {
        bytes.remove_prefix(3);
    }
    if (!text::is_valid_utf8(bytes)) {
        throw Error(ErrorKind::DecodeError, "file is not valid UTF-8 text");
    }
    return std::string(bytes);
}

std::mutex& registry_mutex() {
    static std::mutex mu;
    return mu;
}

std::map<std::string, std::shared_ptr<const TextExtractor>>& registry() {
    static std::map<std::string, std::shared_ptr<const TextExtractor>> r;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Files

void register_extractor(const std::string& kind, std::shared_ptr<const TextExtractor> extractor) {
    std::lock_guard lock(registry_mutex());
    if (extractor) {
        registry()[text::ascii_lower(kind)] = std::move(extractor);
    } else {
        registry().erase(text::ascii_lower(kind));
    }
}

std::string extract_text(std::string_view bytes, std::string_view declared_kind) {
    const std::string kind = text::ascii_lower(text::trim(declared_kind));
    std::shared_ptr<const TextExtractor> adapter;
    {
        std::lock_guard lock(registry_mutex());
        if (auto it = registry().find(kind); it != registry().end()) adapter = it->second;
    }
    if (adapter) {
        return adapter->extract(bytes);
    }
    if (kind == "txt" || kind == "md" || kind == "doc-text") {
        return decode_plain(bytes);
    }
    if (kind == "pdf") {
        return extract_pdf_text(bytes);
    }
    throw Error(ErrorKind::UnsupportedFormat, "unsupported file kind '" + std::string(declared_kind) +
                                                  "'; supported kinds are txt, md, pdf and doc-text");
}

std::string kind_from_filename(std::string_view filename) {
    const auto dot = filename.rfind('.');
    if (dot == std::string_view::npos) {
        return {};
    }
    const std::string ext = text::ascii_lower(filename.substr(dot + 1));
    if (ext == "txt" || ext == "text") return "txt";
    if (ext == "md" || ext == "markdown") return "md";
    if (ext == "pdf") return "pdf";
    return {};
}

// ---------------------------------------------------------------------------
// GitHub

std::optional<GitHubThreadRef> parse_github_url(std::string_view url) {
    static const std::regex re(
        R"(^https?://(?:www\.)?github\.com/([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+)/(issues|pull)/([0-9]{1,9})(?:[/?#].*)?$)",
        std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(url.begin(), url.end(), m, re)) {
        return std::nullopt;
    }
    GitHubThreadRef ref;
    ref.owner = m[1].str();
    ref.repo = m[2].str();
    ref.kind = text::ascii_lower(m[3].str());
    ref.number = std::stoi(m[4].str());
    if (ref.number <= 0) {
        return std::nullopt;
    }
    return ref;
}

namespace {

std::optional<int> rate_limit_wait(const http::Response& r) {
    if (const std::string ra = r.header("retry-after"); !ra.empty()) {
        char* end = nullptr;
        const long v = std::strtol(ra.c_str(), &end, 10);
        if (end != ra.c_str() && v >= 0) return static_cast<int>(v);
    }
    if (const std::string reset = r.header("x-ratelimit-reset"); !reset.empty()) {
        char* end = nullptr;
        const long long at = std::strtoll(reset.c_str(), &end, 10);
        if (end != reset.c_str()) {
            const long long wait = at - static_cast<long long>(std::time(nullptr));
            return static_cast<int>(std::max(0LL, wait));
        }
    }
    return std::nullopt;
}

bool is_rate_limited(const http::Response& r) {
    if (r.status == 429) return true;
    if (r.status != 403) return false;
    return r.header("x-ratelimit-remaining") == "0" || !r.header("retry-after").empty();
}

json github_get(const std::string& url, const FetchConfig& config, std::string* next_page) {
    http::Request req;
    req.method = "GET";
    req.url = url;
    req.timeout_ms = config.timeout_ms;
    req.headers["accept"] = "application/vnd.github+json";
    req.headers["user-agent"] = config.user_agent;
    req.headers["x-github-api-version"] = "2022-11-28";
    if (config.github_token_env_var) {
        if (const char* tok = std::getenv(config.github_token_env_var->c_str()); tok && *tok) {
            req.headers["authorization"] = std::string("Bearer ") + tok;
        }
    }
    const http::Response res = transport_of(config)->send(req);
    if (res.status == 0) {
        throw Error(ErrorKind::FetchFailed, "GitHub request failed: " + res.error);
    }
    if (is_rate_limited(res)) {
        const auto wait = rate_limit_wait(res);
        throw RateLimitedError("GitHub API rate limit exceeded" +
                                   (wait ? "; retry after " + std::to_string(*wait) + " s" : std::string()),
                               wait);
    }
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorKind::FetchFailed, "GitHub API returned HTTP " + std::to_string(res.status) + " for " + url);
    }
    check_size(res.body.size(), config, "GitHub response");
    json j = json::parse(res.body, nullptr, false);
    if (j.is_discarded()) {
        throw Error(ErrorKind::FetchFailed, "GitHub API returned malformed JSON for " + url);
    }
    if (next_page) {
        next_page->clear();
        // Link: <https://...&page=2>; rel="next", <...>; rel="last"
        static const std::regex next_re(R"re(<([^>]+)>\s*;\s*rel="next")re");
        const std::string link = res.header("link");
        std::smatch m;
        if (std::regex_search(link, m, next_re)) *next_page = m[1].str();
    }
    return j;
}

std::string string_field(const json& o, const char* key) {
    if (auto it = o.find(key); it != o.end() && it->is_string()) return it->get<std::string>();
    return {};
}

std::string login_of(const json& o) {
    if (auto u = o.find("user"); u != o.end() && u->is_object()) {
        const std::string login = string_field(*u, "login");
        if (!login.empty()) return login;
    }
    return "unknown";
}

}  // namespace

Document fetch_github(const std::string& url, const FetchConfig& config) {
    const auto ref = parse_github_url(url);
    if (!ref) {
        throw Error(ErrorKind::NotAThread, "not a GitHub issue or pull request URL: " + url);
    }
    std::string base = config.github_api_base;
    while (!base.empty() && base.back() == '/') base.pop_back();
    const std::string thread_url =
        base + "/repos/" + ref->owner + "/" + ref->repo + "/issues/" + std::to_string(ref->number);

    const json issue = github_get(thread_url, config, nullptr);
    if (!issue.is_object()) {
        throw Error(ErrorKind::FetchFailed, "GitHub API returned an unexpected issue payload");
    }
    std::vector<std::string> parts;
    const std::string title = std::string(text::trim(text::normalize(string_field(issue, "title"))));
    const std::string body = text::normalize(string_field(issue, "body"));
    if (!title.empty()) parts.push_back(title);
    if (!body.empty()) parts.push_back(body);

    std::string page = thread_url + "/comments?per_page=100";
    int n = 0;
    std::size_t total = title.size() + body.size();
    for (int guard = 0; !page.empty() && guard < 100; ++guard) {
        std::string next;
        const json comments = github_get(page, config, &next);
        if (!comments.is_array()) {
            throw Error(ErrorKind::FetchFailed, "GitHub API returned an unexpected comments payload");
        }
        for (const auto& c : comments) {
            if (!c.is_object()) continue;
            ++n;
            std::string part = "\xC2\xAB[C" + std::to_string(n) + "] " + login_of(c) + ":\xC2\xBB";
            const std::string cbody = text::normalize(string_field(c, "body"));
            if (!cbody.empty()) part += " " + cbody;
            total += part.size();
            check_size(total, config, "thread");
            parts.push_back(std::move(part));
        }
        page = next;
    }
    if (parts.empty()) {
        throw Error(ErrorKind::EmptyInput, "GitHub thread has no text");
    }
    std::map<std::string, std::string> meta{{"origin", url},
                                            {"title", title},
                                            {"repository", ref->owner + "/" + ref->repo},
                                            {"thread", ref->kind + "/" + std::to_string(ref->number)},
                                            {"comments", std::to_string(n)},
                                            {"fetched_at", now_iso()}};
    return from_text(text::join(parts, "\n\n"), GitHubLink{url}, config, std::move(meta));
}

// ---------------------------------------------------------------------------
// Web

namespace {

std::string charset_of(const std::string& content_type) {
    static const std::regex re(R"(charset\s*=\s*"?([A-Za-z0-9_.:-]+))", std::regex::icase);
    std::smatch m;
    if (std::regex_search(content_type, m, re)) return text::ascii_lower(m[1].str());
    return {};
}

std::string decode_web_body(const std::string& body, const std::string& content_type) {
    const std::string cs = charset_of(content_type);
    if (cs == "iso-8859-1" || cs == "latin1" || cs == "windows-1252" || cs == "cp1252" || cs == "us-ascii") {
        return text::latin1_to_utf8(body);
    }
    std::string_view v(body);
    if (v.substr(0, 3) == "\xEF\xBB\xBF") v.remove_prefix(3);
    if (text::is_valid_utf8(v)) return std::string(v);
    return text::latin1_to_utf8(v);
}

}  // namespace

Document fetch_web(const std::string& url, const FetchConfig& config) {
    http::Url parsed;
    if (!http::parse_url(url, parsed)) {
        throw Error(ErrorKind::InvalidArgument, "not an absolute http(s) URL: " + url);
    }
    http::Request req;
    req.method = "GET";
    req.url = url;
    req.timeout_ms = config.timeout_ms;
    req.headers["user-agent"] = config.user_agent;
    req.headers["accept"] = "text/html,application/xhtml+xml,text/plain;q=0.9,*/*;q=0.5";
    const http::Response res = transport_of(config)->send(req);
    if (res.status == 0) {
        throw Error(ErrorKind::FetchFailed, "fetch failed for " + url + ": " + res.error);
    }
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorKind::FetchFailed, "HTTP " + std::to_string(res.status) + " for " + url);
    }
    check_size(res.body.size(), config, "page");
    const std::string content_type = text::ascii_lower(res.header("content-type"));
    std::map<std::string, std::string> meta{{"origin", url}, {"fetched_at", now_iso()}};
    if (!content_type.empty()) meta["content_type"] = content_type;

    std::string visible;
    if (content_type.find("application/pdf") != std::string::npos) {
        visible = extract_pdf_text(res.body);
    } else {
        const std::string page = decode_web_body(res.body, content_type);
        const bool plain = content_type.find("text/plain") != std::string::npos;
        visible = plain ? page : html_to_text(page);
        if (!plain) {
            if (std::string title = html_title(page); !title.empty()) meta["title"] = std::move(title);
        }
    }
    if (text::trim(visible).empty()) {
        throw Error(ErrorKind::EmptyAfterStrip, "no visible text at " + url);
    }
    return from_text(visible, WebLink{url}, config, std::move(meta));
}

// ---------------------------------------------------------------------------
// Transcripts

bool is_speaker_line(std::string_view line) {
    if (line.empty() || !std::isalpha(static_cast<unsigned char>(line[0]))) {
        return false;
    }
    for (std::size_t i = 1; i < line.size() && i <= 30; ++i) {
        const char c = line[i];
        if (c == ':') {
            return i + 1 == line.size() || line[i + 1] == ' ' || line[i + 1] == '\t';
        }
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '.' || c == '_' ||
                        c == '\'' || c == '-';
        if (!ok) return false;
    }
    return false;
}

Document ingest_transcript(std::string_view raw, MarkerMode markers, const SegmentationPolicy& policy) {
    std::string text = text::normalize(raw);
    if (text.empty()) {
        throw Error(ErrorKind::EmptyInput, "transcript is empty");
    }
    struct Line {
        std::size_t begin, end;
    };
    std::vector<Line> lines;
    for (std::size_t pos = 0; pos <= text.size();) {
        const auto nl = text.find('\n', pos);
        const std::size_t end = nl == std::string::npos ? text.size() : nl;
        lines.push_back({pos, end});
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    auto view = [&](const Line& l) { return std::string_view(text).substr(l.begin, l.end - l.begin); };

    bool use_markers = markers == MarkerMode::On;
    if (markers == MarkerMode::Auto) {
        for (const auto& l : lines) {
            if (!text::trim(view(l)).empty()) {
                use_markers = is_speaker_line(view(l));
                break;
            }
        }
    }
    std::map<std::string, std::string> meta;
    Transcript source{std::string(raw), markers};
    if (!use_markers) {
        auto segments = segment_document(text, policy);
        return make_document(std::move(text), std::move(source), std::move(segments), std::move(meta));
    }

    std::vector<std::string> speakers;
    std::vector<Segment> segments;
    std::optional<std::size_t> turn_begin;
    std::size_t turn_end = 0;
    auto close_turn = [&] {
        if (turn_begin) append_span_segments(text, *turn_begin, turn_end, policy.max_paragraph_chars, segments);
        turn_begin.reset();
    };
    for (const auto& l : lines) {
        const std::string_view v = view(l);
        if (text::trim(v).empty()) continue;
        if (is_speaker_line(v)) {
            close_turn();
            const std::string name(text::trim(v.substr(0, v.find(':'))));
            if (std::find(speakers.begin(), speakers.end(), name) == speakers.end()) speakers.push_back(name);
        }
        if (!turn_begin) turn_begin = l.begin;
        turn_end = l.end;
        while (turn_end > *turn_begin && text::is_space(text[turn_end - 1])) --turn_end;
    }
    close_turn();
    meta["speakers"] = text::join(speakers, ", ");
    meta["turns"] = std::to_string(segments.size());
    return make_document(std::move(text), std::move(source), std::move(segments), std::move(meta));
}

// ---------------------------------------------------------------------------
// Dispatch

Document ingest(const SourceSpec& source, const FetchConfig& config) {
    return std::visit(
        [&](const auto& s) -> Document {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, InlineText>) {
                return from_text(s.text, s, config);
            } else if constexpr (std::is_same_v<T, FileUpload>) {
                if (s.bytes.empty()) {
                    throw Error(ErrorKind::EmptyInput, "uploaded file '" + s.filename + "' is empty");
                }
                check_size(s.bytes.size(), config, "upload");
                const std::string kind = s.declared_kind.empty() ? kind_from_filename(s.filename) : s.declared_kind;
                if (kind.empty()) {
                    throw Error(ErrorKind::UnsupportedFormat,
                                "cannot tell the kind of '" + s.filename + "'; declare one of txt, md, pdf, doc-text");
                }
                const std::string extracted = extract_text(s.bytes, kind);
                if (text::trim(extracted).empty()) {
                    throw Error(ErrorKind::EmptyInput, "uploaded file '" + s.filename + "' has no text");
                }
                FileUpload stored{s.filename, {}, kind};  // bytes are not kept on the document
                return from_text(extracted, stored, config, {{"filename", s.filename}, {"declared_kind", kind}});
            } else if constexpr (std::is_same_v<T, WebLink>) {
                return fetch_web(s.url, config);
            } else if constexpr (std::is_same_v<T, GitHubLink>) {
                return fetch_github(s.url, config);
            } else {
                check_size(s.text.size(), config, "transcript");
                Document d = ingest_transcript(s.text, s.markers, config.segmentation);
                return d;
            }
        },
        source);
}

}  // namespace qda
