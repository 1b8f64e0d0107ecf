#include "atlas/http_util.hpp"

#include <cctype>
#include <stdexcept>

namespace atlas::http {

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

bool is_http_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

Url parse_url(std::string_view url) {
    Url u;
    std::string_view rest;
    if (url.starts_with("http://")) {
        u.scheme = "http";
        u.port = 80;
        rest = url.substr(7);
    } else if (url.starts_with("https://")) {
        u.scheme = "https";
        u.port = 443;
        rest = url.substr(8);
    } else {
        throw std::invalid_argument("unsupported URL scheme: " + std::string(url));
    }
    const auto slash = rest.find('/');
    std::string_view authority = rest.substr(0, slash);
    u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
        const std::string port(authority.substr(colon + 1));
        if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos)
            throw std::invalid_argument("invalid port in URL: " + std::string(url));
        u.port = std::stoi(port);
        authority = authority.substr(0, colon);
    }
    if (authority.empty()) throw std::invalid_argument("URL has no host: " + std::string(url));
    u.host = std::string(authority);
    return u;
}

std::string percent_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 15];
        }
    }
    return out;
}

}  // namespace atlas::http
