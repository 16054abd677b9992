#include "graphflow/api.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

namespace graphflow {

Graph loadEdgeList(const std::string& graph_path, std::uint32_t num_vertices) {
    std::ifstream in(graph_path);
    if (!in) {
        throw std::runtime_error("cannot open edge list: " + graph_path);
    }
    Graph graph;
    graph.vertex_count = num_vertices;
    graph.values.assign(num_vertices, 0.0);
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    double weight = 1.0;
    while (in >> from >> to >> weight) {
        if (from >= num_vertices || to >= num_vertices) {
            throw std::out_of_range("edge endpoint outside [0, num_vertices)");
        }
        graph.edges.push_back(Edge{from, to, weight});
    }
    return graph;
}

double getVertexValue(const Graph& graph, std::uint32_t vertex) {
    if (vertex >= graph.vertex_count) {
        throw std::out_of_range("vertex id out of range");
    }
    return graph.values[vertex];
}

void setVertexValue(Graph& graph, std::uint32_t vertex, double value) {
    if (vertex >= graph.vertex_count) {
        throw std::out_of_range("vertex id out of range");
    }
    graph.values[vertex] = value;
}

} // namespace graphflow
