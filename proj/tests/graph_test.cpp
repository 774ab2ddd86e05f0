#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mmrec/error.hpp"
#include "mmrec/graph.hpp"
#include "oracles.hpp"

namespace {

using mmrec::BipartiteGraph;
using mmrec::DenseMatrix;

struct Edge {
    std::int32_t user;
    std::int32_t item;
};

BipartiteGraph graph_of(const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs,
                        std::int32_t n_users, std::int32_t n_items) {
    std::vector<Edge> edges;
    for (const auto& [u, i] : pairs) edges.push_back({u, i});
    return mmrec::build_graph(edges, n_users, n_items);
}

DenseMatrix random_matrix(std::mt19937& gen, std::int64_t rows, std::int64_t cols) {
    DenseMatrix m(rows, cols);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& v : m.data) v = nd(gen);
    return m;
}

TEST(BuildGraph, CsrStructureOnHandExample) {
    // u0-i0, u0-i1, u1-i1; nodes are users then items: u0=0, u1=1, i0=2, i1=3.
    const auto g = graph_of({{0, 0}, {0, 1}, {1, 1}}, 2, 2);
    ASSERT_EQ(g.n_nodes(), 4);
    EXPECT_EQ(g.degree, (std::vector<std::int32_t>{2, 1, 1, 2}));
    EXPECT_EQ(g.offsets, (std::vector<std::int64_t>{0, 2, 3, 4, 6}));
    EXPECT_EQ(g.neighbors, (std::vector<std::int32_t>{2, 3, 3, 0, 0, 1}));
    // Coefficients pair with the sorted neighbor list: 1/sqrt(d_v * d_u).
    const double s2 = 1.0 / std::sqrt(2.0);
    ASSERT_EQ(g.norm_coeff.size(), 6u);
    EXPECT_NEAR(g.norm_coeff[0], s2, 1e-15);        // u0-i0: 1/sqrt(2*1)
    EXPECT_NEAR(g.norm_coeff[1], 0.5, 1e-15);       // u0-i1: 1/sqrt(2*2)
    EXPECT_NEAR(g.norm_coeff[2], s2, 1e-15);        // u1-i1: 1/sqrt(1*2)
    EXPECT_NEAR(g.norm_coeff[3], s2, 1e-15);        // i0-u0
    EXPECT_NEAR(g.norm_coeff[4], 0.5, 1e-15);       // i1-u0
    EXPECT_NEAR(g.norm_coeff[5], s2, 1e-15);        // i1-u1
}

TEST(BuildGraph, RejectsOutOfRangeInteraction) {
    std::vector<Edge> edges = {{0, 5}};
    EXPECT_THROW(mmrec::build_graph(edges, 2, 2), mmrec::ShapeError);
    edges = {{-1, 0}};
    EXPECT_THROW(mmrec::build_graph(edges, 2, 2), mmrec::ShapeError);
}

TEST(Spmm, SingleEdgePairPassesEmbeddingAcross) {
    const auto g = graph_of({{0, 0}}, 1, 1);
    DenseMatrix x(2, 2);
    x.at(1, 0) = 1.0;  // item i0 = (1, 0)
    const DenseMatrix y = mmrec::spmm_normalized(g, x);
    EXPECT_DOUBLE_EQ(y.at(0, 0), 1.0);  // coefficient 1/sqrt(1*1) = 1
    EXPECT_DOUBLE_EQ(y.at(0, 1), 0.0);
}

TEST(Spmm, IsolatedNodeRowIsZero) {
    const auto g = graph_of({{0, 0}}, 2, 1);  // u1 isolated
    std::mt19937 gen(3);
    const DenseMatrix x = random_matrix(gen, 3, 4);
    const DenseMatrix y = mmrec::spmm_normalized(g, x);
    for (std::int64_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.at(1, c), 0.0);
}

TEST(Spmm, HandGraphMatchesWeightedSum) {
    // {u0-i0, u0-i1, u1-i1}: out[u0] = X[i0]/sqrt(2) + X[i1]/2.
    const auto g = graph_of({{0, 0}, {0, 1}, {1, 1}}, 2, 2);
    std::mt19937 gen(4);
    const DenseMatrix x = random_matrix(gen, 4, 3);
    const DenseMatrix y = mmrec::spmm_normalized(g, x);
    for (std::int64_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(y.at(0, c), x.at(2, c) / std::sqrt(2.0) + x.at(3, c) / 2.0, 1e-12);
    }
}

TEST(Spmm, RowCountMismatchThrows) {
    const auto g = graph_of({{0, 0}}, 1, 1);
    const DenseMatrix x(3, 2);
    EXPECT_THROW(mmrec::spmm_normalized(g, x), mmrec::ShapeError);
}

TEST(Spmm, MatchesDenseOracleOnRandomGraphs) {
    std::mt19937 gen(77);
    for (int rep = 0; rep < 40; ++rep) {
        std::uniform_int_distribution<std::int32_t> dn(1, 25);
        const std::int32_t nu = dn(gen);
        const std::int32_t ni = dn(gen);
        std::uniform_int_distribution<std::int32_t> de(0, nu * ni / 2);
        const auto edges = oracles::random_edges(gen, nu, ni, de(gen));
        const auto g = graph_of(edges, nu, ni);
        const DenseMatrix x = random_matrix(gen, nu + ni, 5);
        const DenseMatrix fast = mmrec::spmm_normalized(g, x);
        const DenseMatrix dense = oracles::dense_propagate(nu, ni, edges, x, 1);
        for (std::size_t k = 0; k < fast.data.size(); ++k) {
            ASSERT_NEAR(fast.data[k], dense.data[k], 1e-10) << "rep " << rep;
        }
    }
}

TEST(Spmm, IsLinearInX) {
    std::mt19937 gen(9);
    const auto edges = oracles::random_edges(gen, 10, 12, 40);
    const auto g = graph_of(edges, 10, 12);
    const DenseMatrix x = random_matrix(gen, 22, 4);
    const DenseMatrix y = random_matrix(gen, 22, 4);
    DenseMatrix mix(22, 4);
    for (std::size_t k = 0; k < mix.data.size(); ++k) {
        mix.data[k] = 1.75 * x.data[k] - 0.5 * y.data[k];
    }
    const DenseMatrix lhs = mmrec::spmm_normalized(g, mix);
    const DenseMatrix ax = mmrec::spmm_normalized(g, x);
    const DenseMatrix ay = mmrec::spmm_normalized(g, y);
    for (std::size_t k = 0; k < lhs.data.size(); ++k) {
        EXPECT_NEAR(lhs.data[k], 1.75 * ax.data[k] - 0.5 * ay.data[k], 1e-10);
    }
}

TEST(Spmm, ThreadCountDoesNotChangeBytes) {
    std::mt19937 gen(21);
    const auto edges = oracles::random_edges(gen, 30, 35, 300);
    const auto g = graph_of(edges, 30, 35);
    const DenseMatrix x = random_matrix(gen, 65, 8);
    const DenseMatrix serial = mmrec::spmm_normalized(g, x, 1);
    const DenseMatrix threaded = mmrec::spmm_normalized(g, x, 4);
    for (std::size_t k = 0; k < serial.data.size(); ++k) {
        EXPECT_EQ(serial.data[k], threaded.data[k]);
    }
}

TEST(Propagate, TwoLayersMatchDenseSquaredOracle) {
    std::mt19937 gen(101);
    for (int rep = 0; rep < 30; ++rep) {
        std::uniform_int_distribution<std::int32_t> dn(1, 25);
        const std::int32_t nu = dn(gen);
        const std::int32_t ni = dn(gen);
        std::uniform_int_distribution<std::int32_t> de(0, nu * ni / 2);
        const auto edges = oracles::random_edges(gen, nu, ni, de(gen));
        const auto g = graph_of(edges, nu, ni);
        const DenseMatrix x = random_matrix(gen, nu + ni, 6);
        const auto layers = mmrec::propagate(g, x, 2);
        const DenseMatrix dense = oracles::dense_propagate(nu, ni, edges, x, 2);
        ASSERT_EQ(layers.layers.size(), 3u);  // input plus two hops
        for (std::size_t k = 0; k < dense.data.size(); ++k) {
            ASSERT_NEAR(layers.final_layer().data[k], dense.data[k], 1e-10) << "rep " << rep;
        }
    }
}

TEST(Propagate, LayerZeroIsInputAndLayerOneIsSingleHop) {
    std::mt19937 gen(5);
    const auto edges = oracles::random_edges(gen, 8, 9, 30);
    const auto g = graph_of(edges, 8, 9);
    const DenseMatrix x = random_matrix(gen, 17, 3);
    const auto layers = mmrec::propagate(g, x, 2);
    const DenseMatrix one_hop = mmrec::spmm_normalized(g, x);
    for (std::size_t k = 0; k < x.data.size(); ++k) {
        EXPECT_DOUBLE_EQ(layers.layers[0].data[k], x.data[k]);
        EXPECT_DOUBLE_EQ(layers.layers[1].data[k], one_hop.data[k]);
    }
}

TEST(Propagate, SingleUserItemPairRoundTripsToItself) {
    // One edge, both degrees 1: two hops return each node to its own
    // layer-0 embedding.
    const auto g = graph_of({{0, 0}}, 1, 1);
    std::mt19937 gen(6);
    const DenseMatrix x = random_matrix(gen, 2, 4);
    const auto layers = mmrec::propagate(g, x, 2);
    for (std::size_t k = 0; k < x.data.size(); ++k) {
        EXPECT_NEAR(layers.final_layer().data[k], x.data[k], 1e-14);
    }
}

TEST(Propagate, SpectralContraction) {
    // The symmetric normalized adjacency has spectral radius <= 1:
    // propagation must not blow up the Frobenius norm.
    std::mt19937 gen(13);
    const auto edges = oracles::random_edges(gen, 20, 20, 150);
    const auto g = graph_of(edges, 20, 20);
    const DenseMatrix x = random_matrix(gen, 40, 5);
    const auto layers = mmrec::propagate(g, x, 2);
    auto frob = [](const DenseMatrix& m) {
        double s = 0.0;
        for (double v : m.data) s += v * v;
        return std::sqrt(s);
    };
    EXPECT_LE(frob(layers.layers[1]), frob(layers.layers[0]) * (1.0 + 1e-12));
    EXPECT_LE(frob(layers.layers[2]), frob(layers.layers[1]) * (1.0 + 1e-12));
}

TEST(PropagateAdjoint, IsAdjointOfForwardOperator) {
    // <P x, y> == <x, P* y> for the n-layer propagation map P.
    std::mt19937 gen(55);
    for (int rep = 0; rep < 10; ++rep) {
        const auto edges = oracles::random_edges(gen, 12, 14, 60);
        const auto g = graph_of(edges, 12, 14);
        const DenseMatrix x = random_matrix(gen, 26, 4);
        const DenseMatrix y = random_matrix(gen, 26, 4);
        const auto forward = mmrec::propagate(g, x, 2);
        const DenseMatrix back = mmrec::propagate_adjoint(g, y, 2);
        double lhs = 0.0;
        double rhs = 0.0;
        for (std::size_t k = 0; k < x.data.size(); ++k) {
            lhs += forward.final_layer().data[k] * y.data[k];
            rhs += x.data[k] * back.data[k];
        }
        EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
    }
}

TEST(PropagateAdjoint, MatchesFiniteDifferenceOfQuadraticLoss) {
    // L(X) = 0.5 * ||P X - T||^2 has dL/dX = P*(P X - T); checked entrywise
    // against central differences through the real propagate call.
    std::mt19937 gen(66);
    const auto edges = oracles::random_edges(gen, 6, 7, 20);
    const auto g = graph_of(edges, 6, 7);
    DenseMatrix x = random_matrix(gen, 13, 3);
    const DenseMatrix target = random_matrix(gen, 13, 3);

    auto loss = [&]() {
        const auto layers = mmrec::propagate(g, x, 2);
        double s = 0.0;
        for (std::size_t k = 0; k < x.data.size(); ++k) {
            const double d = layers.final_layer().data[k] - target.data[k];
            s += 0.5 * d * d;
        }
        return s;
    };

    const auto layers = mmrec::propagate(g, x, 2);
    DenseMatrix residual(13, 3);
    for (std::size_t k = 0; k < x.data.size(); ++k) {
        residual.data[k] = layers.final_layer().data[k] - target.data[k];
    }
    const DenseMatrix analytic = mmrec::propagate_adjoint(g, residual, 2);

    const double eps = 1e-6;
    for (std::size_t k = 0; k < x.data.size(); k += 7) {
        const double saved = x.data[k];
        x.data[k] = saved + eps;
        const double lp = loss();
        x.data[k] = saved - eps;
        const double lm = loss();
        x.data[k] = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        EXPECT_NEAR(analytic.data[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(PropagateAdjoint, EvenLayerCountsKeepPartitionsSeparate) {
    // Bipartite parity: an even number of hops maps user rows back onto user
    // rows only, so a gradient that lives on user rows has zero item rows
    // after the adjoint, and vice versa.
    std::mt19937 gen(88);
    const auto edges = oracles::random_edges(gen, 10, 11, 50);
    const auto g = graph_of(edges, 10, 11);
    DenseMatrix user_grad(21, 3);
    for (std::int64_t r = 0; r < 10; ++r) {
        for (std::int64_t c = 0; c < 3; ++c) {
            user_grad.at(r, c) = std::normal_distribution<double>(0.0, 1.0)(gen);
        }
    }
    const DenseMatrix back = mmrec::propagate_adjoint(g, user_grad, 2);
    for (std::int64_t r = 10; r < 21; ++r) {
        for (std::int64_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(back.at(r, c), 0.0);
    }
}

TEST(Propagate, ZeroLayersReturnsInput) {
    const auto g = graph_of({{0, 0}}, 1, 1);
    std::mt19937 gen(7);
    const DenseMatrix x = random_matrix(gen, 2, 3);
    const auto layers = mmrec::propagate(g, x, 0);
    ASSERT_EQ(layers.layers.size(), 1u);
    for (std::size_t k = 0; k < x.data.size(); ++k) {
        EXPECT_DOUBLE_EQ(layers.final_layer().data[k], x.data[k]);
    }
}

}  // namespace
