#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mmrec/error.hpp"
#include "mmrec/linalg.hpp"
#include "mmrec/parallel.hpp"

namespace mmrec {

/// Undirected user-item interaction graph in CSR form. Nodes are indexed
/// users first: user u is node u, item i is node n_users + i. Each edge is
/// stored in both directions with its symmetric normalization coefficient
/// 1/sqrt(deg(v) * deg(u)) precomputed at build time.
struct BipartiteGraph {
    std::int32_t n_users = 0;
    std::int32_t n_items = 0;
    std::vector<std::int64_t> offsets;    // n_nodes + 1
    std::vector<std::int32_t> neighbors;  // node ids, sorted within each row
    std::vector<double> norm_coeff;       // aligned with neighbors
    std::vector<std::int32_t> degree;     // per node

    std::int32_t n_nodes() const { return n_users + n_items; }
    std::int32_t item_node(std::int32_t item) const { return n_users + item; }
};

/// Per-layer node embeddings from graph propagation; layers[0] is the input.
struct LayerEmbeddings {
    std::vector<DenseMatrix> layers;

    const DenseMatrix& final_layer() const { return layers.back(); }
};

/// Build the bipartite CSR adjacency from (user, item) pairs. Pairs must be
/// unique and index-valid; both edge directions are materialized.
template <class PairRange>
BipartiteGraph build_graph(const PairRange& interactions, std::int32_t n_users,
                           std::int32_t n_items) {
    BipartiteGraph g;
    g.n_users = n_users;
    g.n_items = n_items;
    const std::int32_t n = g.n_nodes();
    g.degree.assign(static_cast<std::size_t>(n), 0);

    for (const auto& e : interactions) {
        if (e.user < 0 || e.user >= n_users || e.item < 0 || e.item >= n_items) {
            throw ShapeError("build_graph: interaction (" + std::to_string(e.user) + ", " +
                             std::to_string(e.item) + ") out of range");
        }
        ++g.degree[static_cast<std::size_t>(e.user)];
        ++g.degree[static_cast<std::size_t>(g.item_node(e.item))];
    }

    g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (std::int32_t v = 0; v < n; ++v) {
        g.offsets[static_cast<std::size_t>(v) + 1] =
            g.offsets[static_cast<std::size_t>(v)] + g.degree[static_cast<std::size_t>(v)];
    }
    g.neighbors.assign(static_cast<std::size_t>(g.offsets.back()), 0);

    std::vector<std::int64_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
    for (const auto& e : interactions) {
        const std::int32_t u = e.user;
        const std::int32_t v = g.item_node(e.item);
        g.neighbors[static_cast<std::size_t>(cursor[static_cast<std::size_t>(u)]++)] = v;
        g.neighbors[static_cast<std::size_t>(cursor[static_cast<std::size_t>(v)]++)] = u;
    }
    // Fixed neighbor order makes row sums independent of input ordering.
    for (std::int32_t v = 0; v < n; ++v) {
        std::sort(g.neighbors.begin() + g.offsets[static_cast<std::size_t>(v)],
                  g.neighbors.begin() + g.offsets[static_cast<std::size_t>(v) + 1]);
    }

    g.norm_coeff.assign(g.neighbors.size(), 0.0);
    for (std::int32_t v = 0; v < n; ++v) {
        const double dv = static_cast<double>(g.degree[static_cast<std::size_t>(v)]);
        for (std::int64_t e = g.offsets[static_cast<std::size_t>(v)];
             e < g.offsets[static_cast<std::size_t>(v) + 1]; ++e) {
            const double du =
                static_cast<double>(g.degree[static_cast<std::size_t>(g.neighbors[static_cast<std::size_t>(e)])]);
            g.norm_coeff[static_cast<std::size_t>(e)] = 1.0 / std::sqrt(dv * du);
        }
    }
    return g;
}

/// One symmetric-normalized aggregation step:
/// out[v] = sum over neighbors u of X[u] / sqrt(deg(v) deg(u)).
/// Rows of degree-0 nodes come out all-zero.
inline DenseMatrix spmm_normalized(const BipartiteGraph& g, const DenseMatrix& x,
                                   int threads = 1) {
    if (x.rows != g.n_nodes()) {
        throw ShapeError("spmm_normalized: X has " + std::to_string(x.rows) +
                         " rows, graph has " + std::to_string(g.n_nodes()) + " nodes");
    }
    DenseMatrix out(x.rows, x.cols);
    parallel_for(x.rows, threads, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t v = begin; v < end; ++v) {
            double* dst = out.data.data() + v * out.cols;
            for (std::int64_t e = g.offsets[static_cast<std::size_t>(v)];
                 e < g.offsets[static_cast<std::size_t>(v) + 1]; ++e) {
                const double c = g.norm_coeff[static_cast<std::size_t>(e)];
                const double* src =
                    x.data.data() + static_cast<std::int64_t>(g.neighbors[static_cast<std::size_t>(e)]) * x.cols;
                for (std::int64_t k = 0; k < x.cols; ++k) dst[k] += c * src[k];
            }
        }
    });
    return out;
}

/// Stacked propagation. Returns every layer 0..n_layers; callers read the
/// last layer as the node representation (no cross-layer averaging).
inline LayerEmbeddings propagate(const BipartiteGraph& g, const DenseMatrix& layer0,
                                 int n_layers = 2, int threads = 1) {
    LayerEmbeddings out;
    out.layers.reserve(static_cast<std::size_t>(n_layers) + 1);
    out.layers.push_back(layer0);
    for (int l = 0; l < n_layers; ++l) {
        out.layers.push_back(spmm_normalized(g, out.layers.back(), threads));
    }
    return out;
}

/// Pull a gradient at the final layer back to layer 0. The normalized
/// adjacency is symmetric, so the adjoint of L applications is L more
/// applications of the same operator.
inline DenseMatrix propagate_adjoint(const BipartiteGraph& g, const DenseMatrix& grad_out,
                                     int n_layers, int threads = 1) {
    if (grad_out.rows != g.n_nodes()) {
        throw ShapeError("propagate_adjoint: gradient has " + std::to_string(grad_out.rows) +
                         " rows, graph has " + std::to_string(g.n_nodes()) + " nodes");
    }
    DenseMatrix grad = grad_out;
    for (int l = 0; l < n_layers; ++l) grad = spmm_normalized(g, grad, threads);
    return grad;
}

}  // namespace mmrec
