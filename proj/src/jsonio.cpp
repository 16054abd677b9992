#include "uagent/jsonio.hpp"

#include <cstdio>
#include <fstream>
#include <system_error>

#include "uagent/errors.hpp"

namespace uagent {

namespace fs = std::filesystem;

std::string canonical_dump(const nlohmann::json& value) {
    // nlohmann's default object storage is std::map, so keys are already
    // sorted; dump(-1) emits the compact form with shortest-repr doubles.
    return value.dump();
}

nlohmann::json parse_json(std::string_view text, const std::string& what) {
    nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
    if (parsed.is_discarded()) {
        throw ParseError("invalid JSON in " + what);
    }
    return parsed;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open file for reading: " + path.string());
    }
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error("read failure on file: " + path.string());
    }
    return content;
}

void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) {
            throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
        }
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open file for writing: " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::remove(tmp.string().c_str());
            throw Error("write failure on file: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("cannot replace file " + path.string() + ": " + ec.message());
    }
}

nlohmann::json read_json_file(const fs::path& path) {
    return parse_json(read_file(path), path.string());
}

void write_json_file(const fs::path& path, const nlohmann::json& value) {
    write_file(path, canonical_dump(value) + "\n");
}

} // namespace uagent
