#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uagent/gateway.hpp"

namespace uagent::ingest {

// ===== Types =====

enum class FileRole { Readme, CoreApi, ExampleCode, Other };

std::string role_name(FileRole role);
std::optional<FileRole> role_from_name(std::string_view name);

struct RepoSource {
    enum class Kind { RemoteUrl, LocalPath };
    Kind kind = Kind::LocalPath;
    std::string locator;
};

// Parses "https://..." into a remote source, anything else into a local
// directory source.
RepoSource source_from_locator(const std::string& locator);

struct RepoFile {
    std::string path;           // repo-relative, '/'-separated
    std::string content;        // raw bytes, UTF-8 clean
    std::string content_digest; // SHA-256 hex of content
};

struct RepoSnapshot {
    RepoSource source;
    std::vector<RepoFile> files; // sorted by path, paths unique
    std::string fetched_at;      // ISO-8601 UTC; informational only
    std::vector<std::string> warnings;

    const RepoFile* find(const std::string& path) const;
};

struct ClassifiedRepo {
    RepoSnapshot snapshot;
    std::map<std::string, FileRole> roles; // total over snapshot paths
    std::vector<std::string> warnings;
};

struct Document {
    std::string path;
    std::string text;
};

struct DocumentSet {
    std::string readme_text;
    std::vector<Document> api_documents;     // path order
    std::vector<Document> example_documents; // path order
    std::vector<std::string> warnings;
};

// ===== Operations =====

struct FetchOptions {
    std::filesystem::path cache_dir; // empty disables the archive cache
};

// Local sources walk the directory tree; remote sources download one
// default-branch tar.gz archive. Exclusions (VCS and vendor directories,
// oversized, binary, or non-UTF-8 files) are recorded as warnings.
// Throws on unreachable sources and on empty results.
RepoSnapshot fetch_repo(const RepoSource& source, const FetchOptions& options = {});

// Fallback role assignment from the path alone.
FileRole heuristic_role(const std::string& path);

struct ClassifyOptions {
    std::string model_id = "mock-chat";
    double temperature = 0.0;
    int max_tokens = 4096;
    std::size_t batch_size = 200;
};

// Asks the gateway to label each path, falling back to heuristic_role
// for paths the reply misses and for batches whose reply carries no
// parseable block. A null gateway selects pure heuristics.
ClassifiedRepo classify_files(const RepoSnapshot& snapshot, llm::Gateway* gateway,
                              const ClassifyOptions& options = {});

// Readme texts concatenate in lexicographic path order; API and example
// documents keep path order. Empty categories yield warnings.
DocumentSet extract_documents(const ClassifiedRepo& classified);

// ===== Serialization =====

nlohmann::json snapshot_to_json(const RepoSnapshot& snapshot);
RepoSnapshot snapshot_from_json(const nlohmann::json& value);

nlohmann::json roles_to_json(const ClassifiedRepo& classified);
// Requires the snapshot the roles were computed over.
ClassifiedRepo roles_from_json(const nlohmann::json& value, RepoSnapshot snapshot);

nlohmann::json documents_to_json(const DocumentSet& documents);
DocumentSet documents_from_json(const nlohmann::json& value);

// Maps a repository web URL to its archive download URL. Exposed for
// tests; URLs already pointing at a .tar.gz/.tgz pass through.
std::string archive_url_for(const std::string& repo_url);

} // namespace uagent::ingest
