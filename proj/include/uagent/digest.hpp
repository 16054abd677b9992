#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace uagent {

/// SHA-256 of the input bytes as 64 lowercase hex characters.
std::string sha256_hex(std::string_view bytes);

/// FNV-1a 64-bit. Stable across platforms; used for mock-response derivation,
/// never for anything security sensitive.
std::uint64_t fnv1a64(std::string_view bytes);

} // namespace uagent
