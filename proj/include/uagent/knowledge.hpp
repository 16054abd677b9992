#pragma once

// Chunking, embedding, and top-k similarity retrieval over anonymized
// documents. The index is an exact-scan, in-memory structure persisted
// as canonical JSON.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uagent/gateway.hpp"
#include "uagent/ingestion.hpp"

namespace uagent::kb {

// ===== Types =====

struct Chunk {
    std::size_t chunk_id = 0;   // dense, assignment order
    std::string source_path;    // "README" for the assembled readme document
    std::size_t byte_offset = 0;
    std::string text;           // non-empty, length <= chunk_size
    ingest::FileRole role = ingest::FileRole::Other;
};

struct IndexEntry {
    Chunk chunk;
    llm::EmbeddingVector vector;
};

struct VectorIndex {
    std::vector<IndexEntry> entries; // ordered by chunk_id
    std::size_t dimension = 0;
};

struct ScoredChunk {
    Chunk chunk;
    double similarity = 0.0;
};

// ===== Operations =====

// Fixed character windows of width chunk_size advancing by
// chunk_size - overlap per document; the last window may be shorter.
// Documents are visited readme first, then API docs, then example code,
// each in stored order. Requires overlap < chunk_size.
std::vector<Chunk> chunk_documents(const ingest::DocumentSet& documents,
                                   std::size_t chunk_size,
                                   std::size_t overlap);

// One embedding per chunk; entry order is chunk order regardless of
// completion order. Requires a non-empty chunk list.
VectorIndex build_index(const std::vector<Chunk>& chunks,
                        llm::Gateway& gateway,
                        std::size_t parallelism = 4);

// Cosine similarity; either vector with zero norm yields 0.
double cosine_similarity(const llm::EmbeddingVector& a, const llm::EmbeddingVector& b);

// Top min(k, candidates) entries by cosine similarity, nonincreasing,
// ties broken by ascending chunk_id. An engaged role restricts the
// candidate set to chunks of that role.
std::vector<ScoredChunk> retrieve(const VectorIndex& index,
                                  const std::string& query_text,
                                  std::size_t k,
                                  llm::Gateway& gateway,
                                  std::optional<ingest::FileRole> role = std::nullopt);

// ===== Persistence =====

nlohmann::json index_to_json(const VectorIndex& index);
VectorIndex index_from_json(const nlohmann::json& encoded); // validates invariants

} // namespace uagent::kb
