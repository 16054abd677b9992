#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uagent {

struct FencedBlock {
    std::string tag;  // language tag on the opening fence, possibly empty
    std::string body; // content between the fences, trailing newline stripped
};

/// First three-backtick fenced block in `text`, or nullopt if none.
std::optional<FencedBlock> first_fenced_block(std::string_view text);

/// True for [A-Za-z0-9_], the identifier-boundary character class.
bool is_ident_char(char c);

/// Lowercased alphanumeric tokens; any non-alphanumeric byte is a delimiter.
std::vector<std::string> alnum_tokens(std::string_view text);

/// Identifier-shaped tokens ([A-Za-z_][A-Za-z0-9_]*) in order of appearance.
std::vector<std::string> ident_tokens(std::string_view text);

std::string trim(std::string_view text);
std::string lower_ascii(std::string_view text);

/// True when `bytes` is well-formed UTF-8.
bool is_valid_utf8(std::string_view bytes);

} // namespace uagent
