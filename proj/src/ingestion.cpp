#include "uagent/ingestion.hpp"

#include <algorithm>
#include <array>
#include <ctime>
#include <fstream>
#include <set>
#include <unordered_set>

#include "uagent/archive.hpp"
#include "uagent/digest.hpp"
#include "uagent/errors.hpp"
#include "uagent/jsonio.hpp"
#include "uagent/textutil.hpp"

namespace uagent::ingest {

// Defined in remote.cpp so HTTP machinery stays in one translation unit.
std::string download_archive(const std::string& url);

namespace fs = std::filesystem;

// ===== Role names =====

std::string role_name(FileRole role) {
    switch (role) {
    case FileRole::Readme:
        return "readme";
    case FileRole::CoreApi:
        return "core_api";
    case FileRole::ExampleCode:
        return "example_code";
    case FileRole::Other:
        return "other";
    }
    return "other";
}

std::optional<FileRole> role_from_name(std::string_view name) {
    if (name == "readme") {
        return FileRole::Readme;
    }
    if (name == "core_api") {
        return FileRole::CoreApi;
    }
    if (name == "example_code") {
        return FileRole::ExampleCode;
    }
    if (name == "other") {
        return FileRole::Other;
    }
    return std::nullopt;
}

RepoSource source_from_locator(const std::string& locator) {
    RepoSource source;
    source.locator = locator;
    if (locator.rfind("https://", 0) == 0 || locator.rfind("http://", 0) == 0) {
        source.kind = RepoSource::Kind::RemoteUrl;
    } else {
        source.kind = RepoSource::Kind::LocalPath;
    }
    return source;
}

const RepoFile* RepoSnapshot::find(const std::string& path) const {
    auto it = std::lower_bound(files.begin(), files.end(), path,
                               [](const RepoFile& f, const std::string& p) { return f.path < p; });
    if (it != files.end() && it->path == path) {
        return &*it;
    }
    return nullptr;
}

// ===== Fetching =====

namespace {

constexpr std::size_t kMaxFileBytes = 256 * 1024;
constexpr std::size_t kBinarySniffBytes = 8 * 1024;

const std::set<std::string>& excluded_dirs() {
    static const std::set<std::string> dirs{".git",   "node_modules", "target",
                                            "build",  "dist",         "vendor",
                                            "third_party"};
    return dirs;
}

std::vector<std::string> path_segments(const std::string& path) {
    std::vector<std::string> segments;
    std::size_t start = 0;
    while (start <= path.size()) {
        std::size_t slash = path.find('/', start);
        if (slash == std::string::npos) {
            segments.push_back(path.substr(start));
            break;
        }
        segments.push_back(path.substr(start, slash - start));
        start = slash + 1;
    }
    return segments;
}

bool in_excluded_dir(const std::string& path) {
    std::vector<std::string> segments = path_segments(path);
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        if (excluded_dirs().count(segments[i]) != 0) {
            return true;
        }
    }
    return false;
}

// Returns false and appends a warning when the file must be excluded.
bool admit_file(const std::string& path, const std::string& content,
                std::vector<std::string>& warnings) {
    if (content.size() > kMaxFileBytes) {
        warnings.push_back("excluded oversized file: " + path + " (" +
                           std::to_string(content.size()) + " bytes)");
        return false;
    }
    std::size_t sniff = std::min(content.size(), kBinarySniffBytes);
    if (content.find('\0') < sniff) {
        warnings.push_back("excluded binary file: " + path);
        return false;
    }
    if (!is_valid_utf8(content)) {
        warnings.push_back("excluded non-text file: " + path + " (invalid encoding)");
        return false;
    }
    return true;
}

std::string now_utc_iso8601() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

RepoSnapshot snapshot_from_contents(RepoSource source,
                                    std::vector<std::pair<std::string, std::string>> contents) {
    std::sort(contents.begin(), contents.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    RepoSnapshot snapshot;
    snapshot.source = std::move(source);
    snapshot.fetched_at = now_utc_iso8601();

    std::string previous_path;
    for (auto& [path, content] : contents) {
        if (path == previous_path) {
            snapshot.warnings.push_back("skipped duplicate archive entry: " + path);
            continue;
        }
        previous_path = path;
        if (in_excluded_dir(path)) {
            continue;
        }
        if (!admit_file(path, content, snapshot.warnings)) {
            continue;
        }
        RepoFile file;
        file.path = path;
        file.content_digest = sha256_hex(content);
        file.content = std::move(content);
        snapshot.files.push_back(std::move(file));
    }
    if (snapshot.files.empty()) {
        throw Error("repository snapshot is empty: " + snapshot.source.locator);
    }
    return snapshot;
}

RepoSnapshot fetch_local(const RepoSource& source) {
    fs::path root(source.locator);
    if (!fs::is_directory(root)) {
        throw Error("repository path does not exist or is not a directory: " + source.locator);
    }
    std::vector<std::pair<std::string, std::string>> contents;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied);
    for (auto end = fs::recursive_directory_iterator(); it != end; ++it) {
        if (it->is_directory() && excluded_dirs().count(it->path().filename().string()) != 0) {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file() || it->is_symlink()) {
            continue;
        }
        std::string rel = it->path().lexically_relative(root).generic_string();
        std::ifstream in(it->path(), std::ios::binary);
        if (!in) {
            continue;
        }
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        contents.emplace_back(std::move(rel), std::move(content));
    }
    return snapshot_from_contents(source, std::move(contents));
}

RepoSnapshot fetch_remote(const RepoSource& source, const FetchOptions& options) {
    std::string archive_url = archive_url_for(source.locator);
    std::string archive_bytes;

    fs::path cache_file;
    if (!options.cache_dir.empty()) {
        cache_file = options.cache_dir / (sha256_hex(archive_url) + ".tar.gz");
    }
    if (!cache_file.empty() && fs::exists(cache_file)) {
        archive_bytes = read_file(cache_file);
    } else {
        archive_bytes = download_archive(archive_url);
        if (!cache_file.empty()) {
            write_file(cache_file, archive_bytes);
        }
    }

    std::vector<TarFile> entries = extract_tar(gunzip(archive_bytes), true);
    std::vector<std::pair<std::string, std::string>> contents;
    contents.reserve(entries.size());
    for (TarFile& entry : entries) {
        contents.emplace_back(std::move(entry.path), std::move(entry.content));
    }
    return snapshot_from_contents(source, std::move(contents));
}

} // namespace

std::string archive_url_for(const std::string& repo_url) {
    auto ends_with = [&](std::string_view suffix) {
        return repo_url.size() >= suffix.size() &&
               repo_url.compare(repo_url.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".tar.gz") || ends_with(".tgz")) {
        return repo_url;
    }
    const std::string prefix = "https://github.com/";
    if (repo_url.rfind(prefix, 0) == 0) {
        std::string rest = repo_url.substr(prefix.size());
        while (!rest.empty() && rest.back() == '/') {
            rest.pop_back();
        }
        const std::string git_suffix = ".git";
        if (rest.size() > git_suffix.size() &&
            rest.compare(rest.size() - git_suffix.size(), git_suffix.size(), git_suffix) == 0) {
            rest.resize(rest.size() - git_suffix.size());
        }
        std::size_t slash = rest.find('/');
        if (slash != std::string::npos && slash > 0 && slash + 1 < rest.size() &&
            rest.find('/', slash + 1) == std::string::npos) {
            return "https://codeload.github.com/" + rest + "/tar.gz/HEAD";
        }
    }
    throw Error("cannot derive an archive URL from: " + repo_url +
                " (expected a github.com repository URL or a direct .tar.gz link)");
}

RepoSnapshot fetch_repo(const RepoSource& source, const FetchOptions& options) {
    if (source.kind == RepoSource::Kind::LocalPath) {
        return fetch_local(source);
    }
    return fetch_remote(source, options);
}

// ===== Classification =====

namespace {

bool has_extension(const std::string& lower_name, const std::set<std::string>& extensions) {
    std::size_t dot = lower_name.rfind('.');
    if (dot == std::string::npos) {
        return false;
    }
    return extensions.count(lower_name.substr(dot)) != 0;
}

const std::set<std::string>& header_extensions() {
    static const std::set<std::string> exts{".h", ".hpp", ".hxx", ".hh"};
    return exts;
}

const std::set<std::string>& source_extensions() {
    static const std::set<std::string> exts{
        ".c",  ".cc", ".cpp", ".cxx", ".h",  ".hh",    ".hpp", ".hxx", ".py",
        ".rb", ".js", ".jsx", ".ts",  ".tsx", ".java", ".go",  ".rs",  ".cs",
        ".kt", ".scala", ".swift", ".m", ".mm", ".php", ".sh"};
    return exts;
}

} // namespace

FileRole heuristic_role(const std::string& path) {
    std::vector<std::string> segments = path_segments(path);
    if (segments.empty()) {
        return FileRole::Other;
    }
    std::string lower_name = lower_ascii(segments.back());
    if (lower_name.rfind("readme", 0) == 0) {
        return FileRole::Readme;
    }

    static const std::set<std::string> example_dirs{"examples", "example", "demos",
                                                    "demo",     "tutorials", "samples"};
    static const std::set<std::string> api_dirs{"include", "api", "core", "src"};

    bool in_example_dir = false;
    bool in_api_dir = false;
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        std::string seg = lower_ascii(segments[i]);
        in_example_dir = in_example_dir || example_dirs.count(seg) != 0;
        in_api_dir = in_api_dir || api_dirs.count(seg) != 0;
    }
    if (in_example_dir && has_extension(lower_name, source_extensions())) {
        return FileRole::ExampleCode;
    }
    if (in_api_dir && (has_extension(lower_name, header_extensions()) ||
                       lower_name.find("api") != std::string::npos)) {
        return FileRole::CoreApi;
    }
    return FileRole::Other;
}

ClassifiedRepo classify_files(const RepoSnapshot& snapshot, llm::Gateway* gateway,
                              const ClassifyOptions& options) {
    if (snapshot.files.empty()) {
        throw Error("cannot classify an empty snapshot");
    }
    ClassifiedRepo classified;
    classified.snapshot = snapshot;

    std::size_t batch_size = options.batch_size == 0 ? 200 : options.batch_size;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < snapshot.files.size(); begin += batch_size) {
        ++batch_index;
        std::size_t end = std::min(begin + batch_size, snapshot.files.size());

        nlohmann::json reply = nlohmann::json::object();
        if (gateway != nullptr) {
            std::string listing = std::string(llm::markers::kFilesHeader) + "\n";
            for (std::size_t i = begin; i < end; ++i) {
                listing += "- " + snapshot.files[i].path + "\n";
            }
            llm::ChatRequest request;
            request.model_id = options.model_id;
            request.system_text =
                std::string(llm::markers::kClassifyFiles) +
                "\nYou label repository files for a documentation survey. Assign exactly one "
                "role to every listed path. Valid roles: readme, core_api, example_code, "
                "other. Reply with a single fenced JSON object mapping each listed path to "
                "its role.";
            request.user_text = listing;
            request.temperature = options.temperature;
            request.max_tokens = options.max_tokens;
            llm::ChatResponse response = gateway->chat(request);

            auto block = first_fenced_block(response.text);
            bool parsed_ok = false;
            if (block.has_value()) {
                nlohmann::json parsed = nlohmann::json::parse(block->body, nullptr, false);
                if (parsed.is_object()) {
                    reply = std::move(parsed);
                    parsed_ok = true;
                }
            }
            if (!parsed_ok) {
                classified.warnings.push_back(
                    "classification batch " + std::to_string(batch_index) +
                    ": reply carried no parseable role block; heuristics used");
            }
        }

        for (std::size_t i = begin; i < end; ++i) {
            const std::string& path = snapshot.files[i].path;
            FileRole role = heuristic_role(path);
            auto it = reply.find(path);
            if (it != reply.end() && it->is_string()) {
                if (auto named = role_from_name(it->get<std::string>())) {
                    role = *named;
                }
            }
            classified.roles[path] = role;
        }
    }
    return classified;
}

// ===== Document extraction =====

DocumentSet extract_documents(const ClassifiedRepo& classified) {
    DocumentSet documents;
    bool any_readme = false;
    for (const auto& [path, role] : classified.roles) {
        const RepoFile* file = classified.snapshot.find(path);
        if (file == nullptr) {
            throw Error("classified path is missing from the snapshot: " + path);
        }
        switch (role) {
        case FileRole::Readme:
            documents.readme_text += file->content;
            any_readme = true;
            break;
        case FileRole::CoreApi:
            documents.api_documents.push_back(Document{path, file->content});
            break;
        case FileRole::ExampleCode:
            documents.example_documents.push_back(Document{path, file->content});
            break;
        case FileRole::Other:
            break;
        }
    }
    if (!any_readme) {
        documents.warnings.push_back("no readme file was identified");
    }
    if (documents.api_documents.empty()) {
        documents.warnings.push_back("no core API files were identified");
    }
    if (documents.example_documents.empty()) {
        documents.warnings.push_back("no example code files were identified");
    }
    return documents;
}

// ===== Serialization =====

nlohmann::json snapshot_to_json(const RepoSnapshot& snapshot) {
    nlohmann::json files = nlohmann::json::array();
    for (const RepoFile& file : snapshot.files) {
        files.push_back(nlohmann::json{{"path", file.path},
                                       {"content", file.content},
                                       {"content_digest", file.content_digest}});
    }
    return nlohmann::json{
        {"source",
         nlohmann::json{{"kind", snapshot.source.kind == RepoSource::Kind::RemoteUrl
                                     ? "remote_url"
                                     : "local_path"},
                        {"locator", snapshot.source.locator}}},
        {"fetched_at", snapshot.fetched_at},
        {"files", files},
        {"warnings", snapshot.warnings},
    };
}

RepoSnapshot snapshot_from_json(const nlohmann::json& value) {
    if (!value.is_object() || !value.contains("files") || !value["files"].is_array()) {
        throw ParseError("malformed snapshot document");
    }
    RepoSnapshot snapshot;
    const nlohmann::json& source = value.value("source", nlohmann::json::object());
    snapshot.source.locator = source.value("locator", "");
    snapshot.source.kind = source.value("kind", "local_path") == "remote_url"
                               ? RepoSource::Kind::RemoteUrl
                               : RepoSource::Kind::LocalPath;
    snapshot.fetched_at = value.value("fetched_at", "");
    snapshot.warnings = value.value("warnings", std::vector<std::string>{});

    std::string previous;
    for (const nlohmann::json& item : value["files"]) {
        RepoFile file;
        file.path = item.value("path", "");
        file.content = item.value("content", "");
        file.content_digest = item.value("content_digest", "");
        if (file.path.empty()) {
            throw ParseError("snapshot file entry lacks a path");
        }
        if (!previous.empty() && !(previous < file.path)) {
            throw ParseError("snapshot files are not sorted by path");
        }
        if (file.content_digest != sha256_hex(file.content)) {
            throw ParseError("snapshot digest mismatch for " + file.path);
        }
        previous = file.path;
        snapshot.files.push_back(std::move(file));
    }
    return snapshot;
}

nlohmann::json roles_to_json(const ClassifiedRepo& classified) {
    nlohmann::json roles = nlohmann::json::object();
    for (const auto& [path, role] : classified.roles) {
        roles[path] = role_name(role);
    }
    return nlohmann::json{{"roles", roles}, {"warnings", classified.warnings}};
}

ClassifiedRepo roles_from_json(const nlohmann::json& value, RepoSnapshot snapshot) {
    if (!value.is_object() || !value.contains("roles") || !value["roles"].is_object()) {
        throw ParseError("malformed classification document");
    }
    ClassifiedRepo classified;
    classified.warnings = value.value("warnings", std::vector<std::string>{});
    for (const auto& [path, name] : value["roles"].items()) {
        if (!name.is_string()) {
            throw ParseError("classification role is not a string for " + path);
        }
        auto role = role_from_name(name.get<std::string>());
        if (!role.has_value()) {
            throw ParseError("unknown role '" + name.get<std::string>() + "' for " + path);
        }
        if (snapshot.find(path) == nullptr) {
            throw ParseError("classified path is missing from the snapshot: " + path);
        }
        classified.roles[path] = *role;
    }
    if (classified.roles.size() != snapshot.files.size()) {
        throw ParseError("classification does not cover every snapshot path");
    }
    classified.snapshot = std::move(snapshot);
    return classified;
}

nlohmann::json documents_to_json(const DocumentSet& documents) {
    auto doc_list = [](const std::vector<Document>& docs) {
        nlohmann::json list = nlohmann::json::array();
        for (const Document& doc : docs) {
            list.push_back(nlohmann::json{{"path", doc.path}, {"text", doc.text}});
        }
        return list;
    };
    return nlohmann::json{
        {"readme_text", documents.readme_text},
        {"api_documents", doc_list(documents.api_documents)},
        {"example_documents", doc_list(documents.example_documents)},
        {"warnings", documents.warnings},
    };
}

DocumentSet documents_from_json(const nlohmann::json& value) {
    if (!value.is_object() || !value.contains("readme_text")) {
        throw ParseError("malformed document set");
    }
    DocumentSet documents;
    documents.readme_text = value.value("readme_text", "");
    documents.warnings = value.value("warnings", std::vector<std::string>{});
    auto read_list = [](const nlohmann::json& list, std::vector<Document>& out) {
        if (!list.is_array()) {
            throw ParseError("malformed document list");
        }
        for (const nlohmann::json& item : list) {
            out.push_back(Document{item.value("path", ""), item.value("text", "")});
        }
    };
    read_list(value.value("api_documents", nlohmann::json::array()), documents.api_documents);
    read_list(value.value("example_documents", nlohmann::json::array()),
              documents.example_documents);
    return documents;
}

} // namespace uagent::ingest
