#include "uagent/knowledge.hpp"

#include <algorithm>
#include <cmath>

#include "uagent/errors.hpp"
#include "uagent/jsonio.hpp"

namespace uagent::kb {

// ===== Chunking =====

namespace {

void chunk_one(const std::string& text,
               const std::string& source_path,
               ingest::FileRole role,
               std::size_t chunk_size,
               std::size_t overlap,
               std::vector<Chunk>& out) {
    if (text.empty()) {
        return;
    }
    const std::size_t stride = chunk_size - overlap;
    std::size_t offset = 0;
    for (;;) {
        Chunk chunk;
        chunk.chunk_id = out.size();
        chunk.source_path = source_path;
        chunk.byte_offset = offset;
        chunk.text = text.substr(offset, chunk_size);
        chunk.role = role;
        out.push_back(std::move(chunk));
        if (offset + chunk_size >= text.size()) {
            break; // this window reached the end of the document
        }
        offset += stride;
    }
}

} // namespace

std::vector<Chunk> chunk_documents(const ingest::DocumentSet& documents,
                                   std::size_t chunk_size,
                                   std::size_t overlap) {
    if (chunk_size == 0) {
        throw ConfigError("chunk_size must be positive");
    }
    if (overlap >= chunk_size) {
        throw ConfigError("overlap must be smaller than chunk_size");
    }
    std::vector<Chunk> chunks;
    chunk_one(documents.readme_text, "README", ingest::FileRole::Readme, chunk_size, overlap,
              chunks);
    for (const ingest::Document& doc : documents.api_documents) {
        chunk_one(doc.text, doc.path, ingest::FileRole::CoreApi, chunk_size, overlap, chunks);
    }
    for (const ingest::Document& doc : documents.example_documents) {
        chunk_one(doc.text, doc.path, ingest::FileRole::ExampleCode, chunk_size, overlap, chunks);
    }
    return chunks;
}

// ===== Index construction =====

VectorIndex build_index(const std::vector<Chunk>& chunks,
                        llm::Gateway& gateway,
                        std::size_t parallelism) {
    if (chunks.empty()) {
        throw Error("cannot build an index from zero chunks");
    }
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const Chunk& chunk : chunks) {
        texts.push_back(chunk.text);
    }
    std::vector<llm::EmbeddingVector> vectors = llm::embed_bounded(gateway, texts, parallelism);

    VectorIndex index;
    index.dimension = vectors.front().size();
    if (index.dimension == 0) {
        throw Error("embedding gateway returned zero-dimensional vectors");
    }
    index.entries.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (vectors[i].size() != index.dimension) {
            throw Error("inconsistent embedding dimensions in index build");
        }
        index.entries.push_back(IndexEntry{chunks[i], std::move(vectors[i])});
    }
    return index;
}

// ===== Retrieval =====

double cosine_similarity(const llm::EmbeddingVector& a, const llm::EmbeddingVector& b) {
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        norm_a += a[i] * a[i];
        norm_b += b[i] * b[i];
    }
    for (std::size_t i = n; i < a.size(); ++i) {
        norm_a += a[i] * a[i];
    }
    for (std::size_t i = n; i < b.size(); ++i) {
        norm_b += b[i] * b[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

std::vector<ScoredChunk> retrieve(const VectorIndex& index,
                                  const std::string& query_text,
                                  std::size_t k,
                                  llm::Gateway& gateway,
                                  std::optional<ingest::FileRole> role) {
    if (index.entries.empty()) {
        throw Error("cannot retrieve from an empty index");
    }
    if (k == 0) {
        throw Error("retrieval requires k >= 1");
    }
    std::vector<llm::EmbeddingVector> embedded = gateway.embed({query_text});
    if (embedded.size() != 1) {
        throw GatewayError("embedding gateway returned a mis-sized batch for the query");
    }
    const llm::EmbeddingVector& query = embedded.front();
    if (query.size() != index.dimension) {
        throw GatewayError("query embedding dimension does not match the index dimension");
    }

    std::vector<ScoredChunk> scored;
    scored.reserve(index.entries.size());
    for (const IndexEntry& entry : index.entries) {
        if (role.has_value() && entry.chunk.role != *role) {
            continue;
        }
        scored.push_back(ScoredChunk{entry.chunk, cosine_similarity(query, entry.vector)});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.similarity != b.similarity) {
            return a.similarity > b.similarity;
        }
        return a.chunk.chunk_id < b.chunk.chunk_id;
    });
    if (scored.size() > k) {
        scored.resize(k);
    }
    return scored;
}

// ===== Persistence =====

namespace {

nlohmann::json chunk_to_json(const Chunk& chunk) {
    return nlohmann::json{
        {"chunk_id", chunk.chunk_id},
        {"source_path", chunk.source_path},
        {"byte_offset", chunk.byte_offset},
        {"text", chunk.text},
        {"role", ingest::role_name(chunk.role)},
    };
}

Chunk chunk_from_json(const nlohmann::json& encoded) {
    Chunk chunk;
    chunk.chunk_id = encoded.at("chunk_id").get<std::size_t>();
    chunk.source_path = encoded.at("source_path").get<std::string>();
    chunk.byte_offset = encoded.at("byte_offset").get<std::size_t>();
    chunk.text = encoded.at("text").get<std::string>();
    std::optional<ingest::FileRole> role =
        ingest::role_from_name(encoded.at("role").get<std::string>());
    if (!role.has_value()) {
        throw ParseError("index chunk " + std::to_string(chunk.chunk_id) +
                         " names an unknown role");
    }
    chunk.role = *role;
    if (chunk.text.empty()) {
        throw ParseError("index chunk " + std::to_string(chunk.chunk_id) + " has empty text");
    }
    return chunk;
}

} // namespace

nlohmann::json index_to_json(const VectorIndex& index) {
    nlohmann::json entries = nlohmann::json::array();
    for (const IndexEntry& entry : index.entries) {
        entries.push_back(nlohmann::json{
            {"chunk", chunk_to_json(entry.chunk)},
            {"vector", entry.vector},
        });
    }
    return nlohmann::json{{"dimension", index.dimension}, {"entries", std::move(entries)}};
}

VectorIndex index_from_json(const nlohmann::json& encoded) {
    VectorIndex index;
    try {
        index.dimension = encoded.at("dimension").get<std::size_t>();
        for (const nlohmann::json& item : encoded.at("entries")) {
            IndexEntry entry;
            entry.chunk = chunk_from_json(item.at("chunk"));
            entry.vector = item.at("vector").get<llm::EmbeddingVector>();
            index.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed index file: ") + e.what());
    }
    if (index.dimension == 0) {
        throw ParseError("index file declares a zero dimension");
    }
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        if (index.entries[i].chunk.chunk_id != i) {
            throw ParseError("index chunk ids are not dense in order");
        }
        if (index.entries[i].vector.size() != index.dimension) {
            throw ParseError("index entry " + std::to_string(i) +
                             " does not match the declared dimension");
        }
    }
    return index;
}

} // namespace uagent::kb
