#pragma once

#include <string>
#include <string_view>

namespace atlas::http {

/// Split form of an absolute http(s) URL.
struct Url {
    std::string scheme;  // "http" or "https"
    std::string host;
    int port = 0;
    std::string path;  // includes query, starts with '/'

    /// "scheme://host:port", suitable for httplib::Client.
    std::string origin() const;
};

bool is_http_url(std::string_view s);

/// Throws std::invalid_argument for anything but http(s)://host[:port][/path].
Url parse_url(std::string_view url);

std::string percent_encode(std::string_view s);

}  // namespace atlas::http
