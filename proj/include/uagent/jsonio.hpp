#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace uagent {

// Serialize with sorted keys, no insignificant whitespace, shortest
// round-trip reals. Two semantically equal documents always serialize to
// identical bytes, so digests over this form are stable.
std::string canonical_dump(const nlohmann::json& value);

nlohmann::json parse_json(std::string_view text, const std::string& what);

std::string read_file(const std::filesystem::path& path);

// Creates parent directories as needed; overwrites atomically via a
// temporary sibling so readers never observe a partial file.
void write_file(const std::filesystem::path& path, std::string_view content);

nlohmann::json read_json_file(const std::filesystem::path& path);

// Canonical dump with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

} // namespace uagent
