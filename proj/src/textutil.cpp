#include "uagent/textutil.hpp"

#include <cctype>

namespace uagent {

std::optional<FencedBlock> first_fenced_block(std::string_view text) {
    const std::string_view fence = "```";
    std::size_t open = text.find(fence);
    if (open == std::string_view::npos) {
        return std::nullopt;
    }

    std::size_t tag_start = open + fence.size();
    std::size_t line_end = text.find('\n', tag_start);
    if (line_end == std::string_view::npos) {
        return std::nullopt; // opening fence with no body
    }

    FencedBlock block;
    block.tag = trim(text.substr(tag_start, line_end - tag_start));

    std::size_t body_start = line_end + 1;
    std::size_t close = text.find(fence, body_start);
    if (close == std::string_view::npos) {
        return std::nullopt; // unterminated fence
    }

    std::string_view body = text.substr(body_start, close - body_start);
    if (!body.empty() && body.back() == '\n') {
        body.remove_suffix(1);
    }
    block.body = std::string(body);
    return block;
}

bool is_ident_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

std::vector<std::string> alnum_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::vector<std::string> ident_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        if (is_ident_char(text[i]) && !(text[i] >= '0' && text[i] <= '9')) {
            std::size_t j = i;
            while (j < text.size() && is_ident_char(text[j])) {
                ++j;
            }
            tokens.emplace_back(text.substr(i, j - i));
            i = j;
        } else {
            ++i;
        }
    }
    return tokens;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
        --end;
    }
    return std::string(text.substr(begin, end - begin));
}

std::string lower_ascii(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

bool is_valid_utf8(std::string_view bytes) {
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(bytes[i]);
        std::size_t len = 0;
        std::uint32_t code = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xe0) == 0xc0) {
            len = 2;
            code = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
            code = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            len = 4;
            code = c & 0x07;
        } else {
            return false;
        }
        if (i + len > n) {
            return false;
        }
        for (std::size_t k = 1; k < len; ++k) {
            unsigned char cc = static_cast<unsigned char>(bytes[i + k]);
            if ((cc & 0xc0) != 0x80) {
                return false;
            }
            code = (code << 6) | (cc & 0x3f);
        }
        // Reject overlong encodings, surrogates, and out-of-range points.
        if ((len == 2 && code < 0x80) || (len == 3 && code < 0x800) ||
            (len == 4 && code < 0x10000) || code > 0x10ffff ||
            (code >= 0xd800 && code <= 0xdfff)) {
            return false;
        }
        i += len;
    }
    return true;
}

} // namespace uagent
