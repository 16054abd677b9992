#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace uagent::ingest {

// Inflates a complete gzip stream. Throws ParseError on corrupt input.
std::string gunzip(std::string_view bytes);

struct TarFile {
    std::string path;
    std::string content;
};

// Extracts regular files from a POSIX ustar / GNU tar stream. Handles
// GNU longname entries and pax path overrides; directories, links, and
// special entries are skipped. With strip_first_component, the leading
// path segment (the archive's top-level directory) is removed, which is
// the layout hosted-forge tarballs use.
std::vector<TarFile> extract_tar(std::string_view bytes, bool strip_first_component);

} // namespace uagent::ingest
