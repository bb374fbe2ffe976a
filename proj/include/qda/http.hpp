#pragma once

// Minimal HTTP client seam shared by the completion backend and the fetchers.
// Tests substitute recording or scripted transports.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace qda::http {

/// Header names are stored lower-cased.
using Headers = std::map<std::string, std::string>;

struct Response {
    int status = 0;  // 0 when no HTTP response was received
    std::string body;
    Headers headers;
    std::string error;  // transport error when status == 0

    std::string header(const std::string& lower_name) const;
};

struct Request {
    std::string method;  // GET or POST
    std::string url;
    Headers headers;
    std::string body;
    int timeout_ms = 30000;
    bool follow_redirects = true;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual Response send(const Request& request) = 0;
};

/// cpp-httplib backed transport; one connection per call.
class HttplibTransport final : public Transport {
public:
    Response send(const Request& request) override;
};

/// Wraps another transport (or none) and records every request.
class RecordingTransport final : public Transport {
public:
    explicit RecordingTransport(std::shared_ptr<Transport> inner = nullptr) : inner_(std::move(inner)) {}

    Response send(const Request& request) override;

    std::size_t call_count() const;
    std::vector<Request> requests() const;

private:
    std::shared_ptr<Transport> inner_;
    mutable std::mutex mu_;
    std::vector<Request> log_;
};

std::shared_ptr<Transport> default_transport();

struct Url {
    std::string scheme;  // http or https
    std::string host;
    int port = 0;
    std::string path_and_query;  // starts with '/'

    std::string origin() const;
};

/// Absolute http(s) URL parse; nullopt-like failure reported as false.
bool parse_url(const std::string& url, Url& out);

}  // namespace qda::http
