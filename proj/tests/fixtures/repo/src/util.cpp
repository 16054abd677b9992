// Shared helpers kept out of the public headers.
#include <cstdint>
#include <utility>
#include <vector>

namespace graphflow::detail {

std::vector<std::uint32_t> out_degree(std::uint32_t vertex_count,
                                      const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
    std::vector<std::uint32_t> degree(vertex_count, 0);
    for (const auto& [from, to] : edges) {
        if (from < vertex_count) {
            ++degree[from];
        }
    }
    return degree;
}

} // namespace graphflow::detail
