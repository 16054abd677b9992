#include "uagent/archive.hpp"

#include <zlib.h>

#include <cstring>

#include "uagent/errors.hpp"

namespace uagent::ingest {

std::string gunzip(std::string_view bytes) {
    z_stream stream{};
    // 15 window bits + 16 selects gzip framing.
    if (inflateInit2(&stream, 15 + 16) != Z_OK) {
        throw Error("zlib initialization failed");
    }
    std::string out;
    std::string buffer(64 * 1024, '\0');
    stream.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    stream.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    do {
        stream.next_out = reinterpret_cast<Bytef*>(buffer.data());
        stream.avail_out = static_cast<uInt>(buffer.size());
        rc = inflate(&stream, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&stream);
            throw ParseError("gzip stream is corrupt (zlib code " + std::to_string(rc) + ")");
        }
        out.append(buffer.data(), buffer.size() - stream.avail_out);
    } while (rc != Z_STREAM_END);
    inflateEnd(&stream);
    return out;
}

namespace {

constexpr std::size_t kBlock = 512;

std::string header_string(const char* field, std::size_t max_len) {
    std::size_t len = 0;
    while (len < max_len && field[len] != '\0') {
        ++len;
    }
    return std::string(field, len);
}

std::uint64_t parse_octal(const char* field, std::size_t max_len) {
    std::uint64_t value = 0;
    std::size_t i = 0;
    while (i < max_len && (field[i] == ' ' || field[i] == '\0')) {
        ++i;
    }
    for (; i < max_len && field[i] >= '0' && field[i] <= '7'; ++i) {
        value = value * 8 + static_cast<std::uint64_t>(field[i] - '0');
    }
    return value;
}

bool block_is_zero(const char* block) {
    for (std::size_t i = 0; i < kBlock; ++i) {
        if (block[i] != '\0') {
            return false;
        }
    }
    return true;
}

// Pax extended headers are "<len> <key>=<value>\n" records.
std::string pax_path_override(std::string_view data) {
    std::string path;
    std::size_t pos = 0;
    while (pos < data.size()) {
        std::size_t space = data.find(' ', pos);
        if (space == std::string_view::npos) {
            break;
        }
        std::size_t record_len = 0;
        for (std::size_t i = pos; i < space; ++i) {
            if (data[i] < '0' || data[i] > '9') {
                return path;
            }
            record_len = record_len * 10 + static_cast<std::size_t>(data[i] - '0');
        }
        if (record_len == 0 || pos + record_len > data.size()) {
            break;
        }
        std::string_view record = data.substr(space + 1, pos + record_len - space - 2);
        std::size_t eq = record.find('=');
        if (eq != std::string_view::npos && record.substr(0, eq) == "path") {
            path = std::string(record.substr(eq + 1));
        }
        pos += record_len;
    }
    return path;
}

std::string strip_component(const std::string& path) {
    std::size_t slash = path.find('/');
    if (slash == std::string::npos) {
        return "";
    }
    return path.substr(slash + 1);
}

} // namespace

std::vector<TarFile> extract_tar(std::string_view bytes, bool strip_first_component) {
    if (bytes.size() % kBlock != 0) {
        throw ParseError("tar stream length is not block aligned");
    }
    std::vector<TarFile> files;
    std::size_t offset = 0;
    std::string long_name;
    std::string pax_path;

    while (offset + kBlock <= bytes.size()) {
        const char* header = bytes.data() + offset;
        if (block_is_zero(header)) {
            break;
        }
        std::string name = header_string(header, 100);
        std::string prefix = header_string(header + 345, 155);
        std::uint64_t size = parse_octal(header + 124, 12);
        char typeflag = header[156];
        offset += kBlock;

        std::uint64_t padded = (size + kBlock - 1) / kBlock * kBlock;
        if (offset + padded > bytes.size()) {
            throw ParseError("tar entry extends past end of stream");
        }
        std::string_view content = bytes.substr(offset, size);
        offset += padded;

        if (typeflag == 'L') {
            long_name = std::string(content);
            while (!long_name.empty() && long_name.back() == '\0') {
                long_name.pop_back();
            }
            continue;
        }
        if (typeflag == 'x') {
            pax_path = pax_path_override(content);
            continue;
        }
        if (typeflag == 'g' || typeflag == 'K') {
            continue;
        }

        std::string path;
        if (!pax_path.empty()) {
            path = pax_path;
        } else if (!long_name.empty()) {
            path = long_name;
        } else if (!prefix.empty()) {
            path = prefix + "/" + name;
        } else {
            path = name;
        }
        long_name.clear();
        pax_path.clear();

        if (typeflag != '0' && typeflag != '\0') {
            continue;
        }
        if (strip_first_component) {
            path = strip_component(path);
        }
        if (path.empty() || path.back() == '/') {
            continue;
        }
        files.push_back(TarFile{std::move(path), std::string(content)});
    }
    return files;
}

} // namespace uagent::ingest
