#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <string>

#include "uagent/errors.hpp"

namespace uagent::ingest {

std::string download_archive(const std::string& url) {
    std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw Error("archive URL lacks a scheme: " + url);
    }
    std::size_t path_start = url.find('/', scheme + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(60, 0);
    client.set_read_timeout(300, 0);

    auto result = client.Get(path);
    if (!result) {
        throw Error("archive download failed (transport): " + httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        throw Error("archive download failed: HTTP " + std::to_string(result->status) +
                    " from " + url);
    }
    return result->body;
}

} // namespace uagent::ingest
