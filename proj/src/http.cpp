#include <httplib.h>

#include "qda/http.hpp"
#include "qda/text.hpp"

namespace qda::http {

std::string Response::header(const std::string& lower_name) const {
    auto it = headers.find(lower_name);
    return it == headers.end() ? std::string() : it->second;
}

std::string Url::origin() const {
    const bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
    return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
}

bool parse_url(const std::string& url, Url& out) {
    const auto sep = url.find("://");
    if (sep == std::string::npos) {
        return false;
    }
    out.scheme = text::ascii_lower(url.substr(0, sep));
    if (out.scheme != "http" && out.scheme != "https") {
        return false;
    }
    const std::string rest = url.substr(sep + 3);
    const auto slash = rest.find_first_of("/?#");
    std::string authority = rest.substr(0, slash);
    out.path_and_query = slash == std::string::npos ? "/" : rest.substr(slash);
    if (!out.path_and_query.empty() && out.path_and_query.front() != '/') {
        out.path_and_query.insert(0, "/");
    }
    if (const auto hash = out.path_and_query.find('#'); hash != std::string::npos) {
        out.path_and_query.resize(hash);
    }
    if (const auto at = authority.rfind('@'); at != std::string::npos) {
        authority = authority.substr(at + 1);
    }
    out.port = out.scheme == "https" ? 443 : 80;
    if (!authority.empty() && authority.front() == '[') {
        const auto close = authority.find(']');
        if (close == std::string::npos) {
            return false;
        }
        out.host = authority.substr(0, close + 1);
        authority = authority.substr(close + 1);
        if (!authority.empty() && authority.front() == ':') {
            try {
                out.port = std::stoi(authority.substr(1));
            } catch (...) {
                return false;
            }
        }
    } else if (const auto colon = authority.find(':'); colon != std::string::npos) {
        out.host = authority.substr(0, colon);
        try {
            out.port = std::stoi(authority.substr(colon + 1));
        } catch (...) {
            return false;
        }
    } else {
        out.host = authority;
    }
    return !out.host.empty() && out.port > 0 && out.port < 65536;
}

Response HttplibTransport::send(const Request& request) {
    Response out;
    Url url;
    if (!parse_url(request.url, url)) {
        out.error = "invalid URL: " + request.url;
        return out;
    }
    httplib::Client client(url.origin());
    const time_t secs = request.timeout_ms / 1000;
    const time_t usecs = static_cast<time_t>(request.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    client.set_follow_location(request.follow_redirects);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "content-type") {
            content_type = v;
        } else {
            headers.emplace(k, v);
        }
    }
    httplib::Result res = request.method == "POST"
                              ? client.Post(url.path_and_query, headers, request.body, content_type)
                              : client.Get(url.path_and_query, headers);
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) {
        out.headers[text::ascii_lower(k)] = v;
    }
    return out;
}

Response RecordingTransport::send(const Request& request) {
    {
        std::lock_guard lock(mu_);
        log_.push_back(request);
    }
    if (!inner_) {
        Response r;
        r.error = "recording transport has no network";
        return r;
    }
    return inner_->send(request);
}

std::size_t RecordingTransport::call_count() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

std::vector<Request> RecordingTransport::requests() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::shared_ptr<Transport> default_transport() {
    static const auto t = std::make_shared<HttplibTransport>();
    return t;
}

}  // namespace qda::http
