#include "graphflow/api.hpp"

#include <stdexcept>

namespace graphflow {

void vertexMap(Graph& graph, VertexUpdate update) {
    graph.update = std::move(update);
}

void aggregateMessages(Graph& graph, MessageCombine combine) {
    graph.combine = std::move(combine);
}

std::uint32_t runIterations(Graph& graph, std::uint32_t max_iters) {
    if (!graph.update || !graph.combine) {
        throw std::logic_error("register callbacks before iterating");
    }
    std::uint32_t sweep = 0;
    for (; sweep < max_iters; ++sweep) {
        std::vector<double> incoming(graph.vertex_count, 0.0);
        std::vector<bool> touched(graph.vertex_count, false);
        for (const Edge& edge : graph.edges) {
            double message = graph.values[edge.from] + edge.weight;
            if (!touched[edge.to]) {
                incoming[edge.to] = message;
                touched[edge.to] = true;
            } else {
                incoming[edge.to] = graph.combine(incoming[edge.to], message);
            }
        }
        bool changed = false;
        for (std::uint32_t v = 0; v < graph.vertex_count; ++v) {
            if (!touched[v]) {
                continue;
            }
            double next = graph.update(v, incoming[v]);
            if (next != graph.values[v]) {
                graph.values[v] = next;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }
    return sweep;
}

} // namespace graphflow
