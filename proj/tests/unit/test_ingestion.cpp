#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "uagent/archive.hpp"
#include "uagent/errors.hpp"
#include "uagent/ingestion.hpp"
#include "uagent/jsonio.hpp"

using namespace uagent;
using namespace uagent::ingest;

namespace {

const std::filesystem::path kFixtures = UAGENT_FIXTURE_DIR;

RepoSnapshot fixture_snapshot() {
    return fetch_repo(source_from_locator((kFixtures / "repo").string()));
}

struct TempTree {
    std::filesystem::path root;
    TempTree() {
        root = std::filesystem::temp_directory_path() /
               ("uagent-ingest-" + std::to_string(::getpid()) + "-" + std::to_string(seq()++));
        std::filesystem::create_directories(root);
    }
    ~TempTree() {
        std::error_code ec;
        std::filesystem::remove_all(root, ec);
    }
    void put(const std::string& rel, const std::string& content) const {
        std::filesystem::path p = root / rel;
        std::filesystem::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    static int& seq() {
        static int value = 0;
        return value;
    }
};

} // namespace

TEST_CASE("heuristic roles follow the fallback table") {
    CHECK(heuristic_role("README.md") == FileRole::Readme);
    CHECK(heuristic_role("readme.rst") == FileRole::Readme);
    CHECK(heuristic_role("docs/README.md") == FileRole::Readme);
    CHECK(heuristic_role("examples/pagerank_demo.cc") == FileRole::ExampleCode);
    CHECK(heuristic_role("demo/run.py") == FileRole::ExampleCode);
    CHECK(heuristic_role("tutorials/quickstart.md") == FileRole::Other);
    CHECK(heuristic_role("include/graphflow/api.hpp") == FileRole::CoreApi);
    CHECK(heuristic_role("include/graphflow/types.hpp") == FileRole::CoreApi);
    CHECK(heuristic_role("src/api_bindings.py") == FileRole::CoreApi);
    CHECK(heuristic_role("src/engine.cpp") == FileRole::Other);
    CHECK(heuristic_role("docs/api.md") == FileRole::Other);
    CHECK(heuristic_role("LICENSE.txt") == FileRole::Other);
    CHECK(heuristic_role("examples/data.bin") == FileRole::Other);
}

TEST_CASE("local fetch walks the tree, excludes vendored dirs and binaries") {
    RepoSnapshot snapshot = fixture_snapshot();
    CHECK(snapshot.files.size() == 18);
    CHECK(snapshot.find("README.md") != nullptr);
    CHECK(snapshot.find("include/graphflow/api.hpp") != nullptr);
    CHECK(snapshot.find(".git/config") == nullptr);
    CHECK(snapshot.find("node_modules/dummy/index.js") == nullptr);
    CHECK(snapshot.find("build/objects.txt") == nullptr);
    CHECK(snapshot.find("data/blob.bin") == nullptr);
    REQUIRE(snapshot.warnings.size() == 1);
    CHECK(snapshot.warnings[0] == "excluded binary file: data/blob.bin");

    for (std::size_t i = 1; i < snapshot.files.size(); ++i) {
        CHECK(snapshot.files[i - 1].path < snapshot.files[i].path);
    }
    for (const RepoFile& file : snapshot.files) {
        CHECK(file.content_digest.size() == 64);
    }
}

TEST_CASE("fetching the same directory twice yields identical digests") {
    RepoSnapshot a = fixture_snapshot();
    RepoSnapshot b = fixture_snapshot();
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        CHECK(a.files[i].path == b.files[i].path);
        CHECK(a.files[i].content_digest == b.files[i].content_digest);
    }
}

TEST_CASE("oversized files are excluded with a note") {
    TempTree tree;
    tree.put("README.md", "hi\n");
    tree.put("big.txt", std::string(300 * 1024, 'x'));
    RepoSnapshot snapshot = fetch_repo(source_from_locator(tree.root.string()));
    CHECK(snapshot.files.size() == 1);
    REQUIRE(snapshot.warnings.size() == 1);
    CHECK(snapshot.warnings[0].find("excluded oversized file: big.txt") == 0);
}

TEST_CASE("non-UTF-8 files are excluded with a note") {
    TempTree tree;
    tree.put("README.md", "hi\n");
    tree.put("latin1.txt", "caf\xe9\n");
    RepoSnapshot snapshot = fetch_repo(source_from_locator(tree.root.string()));
    CHECK(snapshot.files.size() == 1);
    REQUIRE(snapshot.warnings.size() == 1);
    CHECK(snapshot.warnings[0].find("excluded non-text file: latin1.txt") == 0);
}

TEST_CASE("empty and missing repositories are errors") {
    TempTree tree;
    CHECK_THROWS_AS(fetch_repo(source_from_locator(tree.root.string())), Error);
    CHECK_THROWS_AS(fetch_repo(source_from_locator((tree.root / "absent").string())), Error);
}

TEST_CASE("snapshot JSON round-trips and verifies digests") {
    RepoSnapshot snapshot = fixture_snapshot();
    nlohmann::json encoded = snapshot_to_json(snapshot);
    RepoSnapshot decoded = snapshot_from_json(encoded);
    REQUIRE(decoded.files.size() == snapshot.files.size());
    CHECK(decoded.source.locator == snapshot.source.locator);
    CHECK(decoded.files[0].content == snapshot.files[0].content);

    encoded["files"][0]["content"] = "tampered";
    CHECK_THROWS_AS(snapshot_from_json(encoded), ParseError);
}

TEST_CASE("mock classification matches the frozen fixture manifest") {
    RepoSnapshot snapshot = fixture_snapshot();
    llm::MockGateway gateway(7);
    ClassifiedRepo classified = classify_files(snapshot, &gateway);

    nlohmann::json expected = read_json_file(kFixtures / "expected_roles.json");
    REQUIRE(classified.roles.size() == snapshot.files.size());
    REQUIRE(expected["roles"].size() == classified.roles.size());
    for (const auto& [path, role] : classified.roles) {
        INFO("path: ", path);
        REQUIRE(expected["roles"].contains(path));
        CHECK(expected["roles"][path].get<std::string>() == role_name(role));
    }
    CHECK(classified.warnings.empty());
}

TEST_CASE("classification without a gateway equals pure heuristics") {
    RepoSnapshot snapshot = fixture_snapshot();
    ClassifiedRepo classified = classify_files(snapshot, nullptr);
    REQUIRE(classified.roles.size() == snapshot.files.size());
    for (const auto& [path, role] : classified.roles) {
        CHECK(role == heuristic_role(path));
    }
    ClassifiedRepo again = classify_files(snapshot, nullptr);
    CHECK(again.roles == classified.roles);
}

TEST_CASE("unparseable classification replies fall back to heuristics with a warning") {
    struct NoBlockGateway final : llm::Gateway {
        llm::ChatResponse chat(const llm::ChatRequest&) override {
            return llm::ChatResponse{"no structured content here", 1, 1};
        }
        std::vector<llm::EmbeddingVector> embed(const std::vector<std::string>&) override {
            return {};
        }
        std::size_t embedding_dimension() const override { return 0; }
        std::string embed_model_id() const override { return "none"; }
    };
    RepoSnapshot snapshot = fixture_snapshot();
    NoBlockGateway gateway;
    ClassifiedRepo classified = classify_files(snapshot, &gateway);
    REQUIRE(classified.warnings.size() == 1);
    CHECK(classified.warnings[0].find("heuristics used") != std::string::npos);
    for (const auto& [path, role] : classified.roles) {
        CHECK(role == heuristic_role(path));
    }
}

TEST_CASE("document extraction orders by path and flags empty categories") {
    RepoSnapshot snapshot = fixture_snapshot();
    llm::MockGateway gateway(7);
    DocumentSet documents = extract_documents(classify_files(snapshot, &gateway));

    std::string readme1 = snapshot.find("README.md")->content;
    std::string readme2 = snapshot.find("docs/README.md")->content;
    CHECK(documents.readme_text == readme1 + readme2);

    REQUIRE(documents.api_documents.size() == 3);
    CHECK(documents.api_documents[0].path == "docs/api.md");
    CHECK(documents.api_documents[1].path == "include/graphflow/api.hpp");
    CHECK(documents.api_documents[2].path == "include/graphflow/types.hpp");

    REQUIRE(documents.example_documents.size() == 4);
    CHECK(documents.example_documents[0].path == "examples/pagerank_demo.cpp");
    CHECK(documents.example_documents[3].path == "tutorials/quickstart.md");
    CHECK(documents.warnings.empty());

    nlohmann::json encoded = documents_to_json(documents);
    DocumentSet decoded = documents_from_json(encoded);
    CHECK(decoded.readme_text == documents.readme_text);
    CHECK(decoded.api_documents.size() == documents.api_documents.size());
}

TEST_CASE("a repo without examples records a warning") {
    TempTree tree;
    tree.put("README.md", "# tool\n");
    tree.put("include/api.h", "int f();\n");
    RepoSnapshot snapshot = fetch_repo(source_from_locator(tree.root.string()));
    DocumentSet documents = extract_documents(classify_files(snapshot, nullptr));
    CHECK(documents.example_documents.empty());
    REQUIRE(documents.warnings.size() == 1);
    CHECK(documents.warnings[0] == "no example code files were identified");
}

TEST_CASE("gunzip inflates tar archives and extract_tar handles gnu and pax") {
    for (const char* name : {"mini_gnu.tar.gz", "mini_pax.tar.gz"}) {
        INFO("archive: ", name);
        std::string bytes = read_file(kFixtures / "archives" / name);
        std::vector<TarFile> files = extract_tar(gunzip(bytes), true);
        REQUIRE(files.size() == 3);
        bool found_long = false;
        for (const TarFile& file : files) {
            if (file.path == "README.md") {
                CHECK(file.content == "hello archive\n");
            } else if (file.path == "src/app.py") {
                CHECK(file.content == "print(\"app\")\n");
            } else {
                CHECK(file.path.size() > 100);
                CHECK(file.content == "deep file\n");
                found_long = true;
            }
        }
        CHECK(found_long);
    }
}

TEST_CASE("gunzip rejects corrupt streams") {
    CHECK_THROWS_AS(gunzip("definitely not gzip"), ParseError);
}

TEST_CASE("archive_url_for maps repository URLs") {
    CHECK(archive_url_for("https://github.com/owner/repo") ==
          "https://codeload.github.com/owner/repo/tar.gz/HEAD");
    CHECK(archive_url_for("https://github.com/owner/repo/") ==
          "https://codeload.github.com/owner/repo/tar.gz/HEAD");
    CHECK(archive_url_for("https://github.com/owner/repo.git") ==
          "https://codeload.github.com/owner/repo/tar.gz/HEAD");
    CHECK(archive_url_for("https://example.com/x/y/archive.tar.gz") ==
          "https://example.com/x/y/archive.tar.gz");
    CHECK_THROWS_AS(archive_url_for("https://example.com/owner/repo"), Error);
    CHECK_THROWS_AS(archive_url_for("https://github.com/owner"), Error);
}
