#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "contrastad/dgcl.hpp"
#include "contrastad/gradcheck.hpp"
#include "contrastad/rng.hpp"
#include "doctest.h"

using namespace contrastad;
using namespace contrastad::dgcl;
using diff::Graph;
using diff::NodeId;
using diff::Tensor;

namespace {

// direct-summation oracle for the truncated Zipf expectation
double expected_degree_oracle(double gamma, std::size_t n) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        num += static_cast<double>(k) * std::pow(static_cast<double>(k), -gamma);
        den += std::pow(static_cast<double>(k), -gamma);
    }
    return num / den;
}

std::vector<double> random_window(Rng& rng, std::size_t n, std::size_t w) {
    std::vector<double> v(n * w);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

SnapshotGraph graph_from_adjacency(std::size_t n, const std::vector<std::uint8_t>& adj,
                                   std::size_t index) {
    SnapshotGraph g;
    g.snapshot_index = index;
    g.n_nodes = n;
    g.adjacency = adj;
    g.degree_distribution = degree_distribution(adj, n);
    return g;
}

SnapshotGraph empty_graph(std::size_t n, std::size_t index) {
    return graph_from_adjacency(n, std::vector<std::uint8_t>(n * n, 0), index);
}

SnapshotGraph complete_graph(std::size_t n, std::size_t index) {
    std::vector<std::uint8_t> adj(n * n, 1);
    for (std::size_t i = 0; i < n; ++i) adj[i * n + i] = 0;
    return graph_from_adjacency(n, adj, index);
}

}  // namespace

TEST_CASE("edge_budget: worked example gamma=3, N=5") {
    double e = expected_degree(3.0, 5);
    CHECK(e == doctest::Approx(1.4636111111 / 1.1856620370).epsilon(1e-9));
    CHECK(e == doctest::Approx(1.23442).epsilon(1e-4));
    CHECK(edge_budget(3.0, 5) == 3);
}

TEST_CASE("edge_budget: override wins verbatim") {
    CHECK(edge_budget(3.0, 51, 16) == 16);
    CHECK_THROWS_AS(edge_budget(3.0, 51, 0), std::invalid_argument);
    CHECK_THROWS_AS(edge_budget(3.0, 5, 11), std::invalid_argument);  // > N(N-1)/2
}

TEST_CASE("edge_budget: large gamma collapses the prior to degree one") {
    CHECK(edge_budget(50.0, 10) == 5);
}

TEST_CASE("edge_budget: gamma <= 1 rejected") {
    CHECK_THROWS_AS(edge_budget(1.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(edge_budget(0.5, 10), std::invalid_argument);
}

TEST_CASE("edge_budget: matches direct summation and stays in bounds") {
    for (double gamma : {2.0, 2.5, 3.0}) {
        for (std::size_t n : {5u, 10u, 25u, 38u, 51u, 55u}) {
            double e = expected_degree_oracle(gamma, n);
            auto expected = static_cast<std::size_t>(std::floor(static_cast<double>(n) * e / 2.0));
            expected = std::clamp<std::size_t>(expected, 1, n * (n - 1) / 2);
            CHECK(edge_budget(gamma, n) == expected);
            CHECK(edge_budget(gamma, n) >= 1);
            CHECK(edge_budget(gamma, n) <= n * (n - 1) / 2);
        }
    }
}

TEST_CASE("edge_budget: non-increasing in gamma") {
    for (std::size_t n : {5u, 13u, 40u}) {
        std::size_t prev = edge_budget(1.5, n);
        for (double gamma = 2.0; gamma <= 6.0; gamma += 0.5) {
            std::size_t k = edge_budget(gamma, n);
            CHECK(k <= prev);
            prev = k;
        }
    }
}

TEST_CASE("build_snapshot_graph: tie broken toward the lexicographic pair") {
    // nodes: constant 0, constant 0, ramp; both constant-vs-ramp distances tie
    std::size_t n = 3, w = 4;
    std::vector<double> window(n * w, 0.0);
    for (std::size_t t = 0; t < w; ++t) window[2 * w + t] = static_cast<double>(t);
    SnapshotGraph g = build_snapshot_graph(window, n, w, 1, 1, 1);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.edges[0].i == 0);
    CHECK(g.edges[0].j == 2);
    CHECK(g.has_edge(0, 2));
    CHECK(g.has_edge(2, 0));
    CHECK(!g.has_edge(0, 1));
}

TEST_CASE("build_snapshot_graph: budget equal to all pairs gives the complete graph") {
    Rng rng(5);
    std::vector<double> window = random_window(rng, 4, 8);
    SnapshotGraph g = build_snapshot_graph(window, 4, 8, 1, 1, 6);
    CHECK(g.degree_distribution[3] == doctest::Approx(1.0));
    for (std::size_t d = 0; d < 3; ++d) CHECK(g.degree_distribution[d] == 0.0);
}

TEST_CASE("build_snapshot_graph: identical snapshots give identical graphs") {
    Rng rng(6);
    std::size_t n = 5, w = 20, s_count = 2;
    std::vector<double> window(n * w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < w / 2; ++t) {
            double v = rng.uniform(-1.0, 1.0);
            window[i * w + t] = v;
            window[i * w + w / 2 + t] = v;  // snapshot 2 repeats snapshot 1
        }
    SnapshotGraph g1 = build_snapshot_graph(window, n, w, 1, s_count, 4);
    SnapshotGraph g2 = build_snapshot_graph(window, n, w, 2, s_count, 4);
    CHECK(g1.adjacency == g2.adjacency);
    CHECK(g1.degree_distribution == g2.degree_distribution);
}

TEST_CASE("snapshot graphs keep the budget, symmetry and zero diagonal") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 4 + static_cast<std::size_t>(rng.next_u64() % 5);
        std::size_t delta = 5;
        std::size_t s_count = 4;
        std::size_t w = delta * s_count;
        std::size_t max_edges = n * (n - 1) / 2;
        std::size_t budget = 1 + static_cast<std::size_t>(rng.next_u64() % max_edges);
        std::vector<double> window = random_window(rng, n, w);
        std::size_t s = 1 + static_cast<std::size_t>(rng.next_u64() % s_count);
        SnapshotGraph g = build_snapshot_graph(window, n, w, s, s_count, budget);

        std::size_t edge_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(g.adjacency[i * n + i] == 0);
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(g.adjacency[i * n + j] == g.adjacency[j * n + i]);
                if (j > i) edge_count += g.adjacency[i * n + j];
            }
        }
        CHECK(edge_count == budget);
        double mass = 0.0;
        for (double d : g.degree_distribution) mass += d;
        CHECK(std::abs(mass - 1.0) <= 1e-12);
    }
}

TEST_CASE("degree_distribution: empty, complete, path") {
    CHECK(empty_graph(4, 1).degree_distribution == std::vector<double>{1, 0, 0, 0});
    CHECK(complete_graph(4, 1).degree_distribution == std::vector<double>{0, 0, 0, 1});
    // path 0-1-2
    std::vector<std::uint8_t> adj{0, 1, 0, 1, 0, 1, 0, 1, 0};
    std::vector<double> dist = degree_distribution(adj, 3);
    CHECK(dist[0] == 0.0);
    CHECK(dist[1] == doctest::Approx(2.0 / 3.0));
    CHECK(dist[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("sym_kl: identity, worked example, exact symmetry") {
    std::vector<double> a{0.5, 0.5}, b{0.9, 0.1};
    CHECK(sym_kl(a, a) <= 1e-12);
    // direct summation: ln(5/3) + 0.9 ln(1.8) + 0.1 ln(0.2)
    double oracle = std::log(5.0 / 3.0) + 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
    CHECK(sym_kl(a, b) == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(sym_kl(a, b) == doctest::Approx(0.8789).epsilon(1e-3));
    CHECK(sym_kl(a, b) == sym_kl(b, a));  // exact
    CHECK(sym_kl(a, b) >= 0.0);
    CHECK_THROWS_AS(sym_kl({0.5, 0.5}, {1.0}), std::invalid_argument);
}

TEST_CASE("sym_kl: smoothing handles empty degree bins") {
    std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
    double d = sym_kl(a, b, 1e-8);
    CHECK(std::isfinite(d));
    CHECK(d > 0.0);
}

TEST_CASE("select_divergent_pair: worked S=3 tie-break") {
    std::vector<SnapshotGraph> graphs{empty_graph(4, 1), empty_graph(4, 2), complete_graph(4, 3)};
    DivergentPair pair = select_divergent_pair(graphs);
    CHECK(pair.p == 1);
    CHECK(pair.q == 3);
    CHECK(pair.divergence > 0.0);
    CHECK_THROWS_AS(select_divergent_pair({empty_graph(4, 1), empty_graph(4, 2)}),
                    std::invalid_argument);
}

TEST_CASE("select_divergent_pair: identical graphs fall back to (1, 2)") {
    std::vector<SnapshotGraph> graphs{complete_graph(4, 1), complete_graph(4, 2),
                                      complete_graph(4, 3), complete_graph(4, 4)};
    DivergentPair pair = select_divergent_pair(graphs);
    CHECK(pair.p == 1);
    CHECK(pair.q == 2);
    CHECK(pair.divergence <= 1e-12);
}

TEST_CASE("select_divergent_pair: matches exhaustive search, S <= 10") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t s_count = 3 + static_cast<std::size_t>(rng.next_u64() % 8);
        std::size_t n = 5;
        std::vector<SnapshotGraph> graphs;
        for (std::size_t s = 1; s <= s_count; ++s) {
            std::vector<std::uint8_t> adj(n * n, 0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                    if (rng.uniform() < 0.4) adj[i * n + j] = adj[j * n + i] = 1;
            graphs.push_back(graph_from_adjacency(n, adj, s));
        }
        DivergentPair pair = select_divergent_pair(graphs);
        double best = -1.0;
        std::size_t bp = 0, bq = 0;
        for (std::size_t p = 0; p < s_count; ++p)
            for (std::size_t q = p + 1; q < s_count; ++q) {
                double d =
                    sym_kl(graphs[p].degree_distribution, graphs[q].degree_distribution, 1e-8);
                CHECK(pair.divergence >= d - 1e-15);  // argmax contract
                if (d > best) {
                    best = d;
                    bp = p + 1;
                    bq = q + 1;
                }
            }
        CHECK(pair.p == bp);
        CHECK(pair.q == bq);
        CHECK(pair.divergence == doctest::Approx(best));
    }
}

TEST_CASE("anchor_graph: mean of the remaining snapshots") {
    SUBCASE("S=3 leaves a single graph") {
        std::vector<SnapshotGraph> graphs{complete_graph(4, 1), empty_graph(4, 2),
                                          complete_graph(4, 3)};
        std::vector<double> anchor = anchor_graph(graphs, 1, 3);
        for (double v : anchor) CHECK(v == 0.0);  // the one remaining graph is empty
    }
    SUBCASE("edge in half of the remaining graphs weighs 0.5") {
        std::vector<SnapshotGraph> graphs{empty_graph(3, 1), empty_graph(3, 2),
                                          complete_graph(3, 3), empty_graph(3, 4)};
        // exclude snapshots 1 and 4; remaining: one empty + one complete
        std::vector<double> anchor = anchor_graph(graphs, 1, 4);
        CHECK(anchor[0 * 3 + 1] == doctest::Approx(0.5));
        CHECK(anchor[0 * 3 + 0] == 0.0);
    }
}

TEST_CASE("gcn_encode: zero weights, empty graph, unit rows") {
    std::size_t n = 4;
    GcnConfig cfg{3, 5, 4};
    Rng rng(13);

    model::ParamSet ps;
    add_gcn_params(ps, cfg);
    Tensor features = Tensor::zeros({n, 3});
    for (double& v : features.values) v = rng.uniform(-1.0, 1.0);

    SUBCASE("zero weights give zero rows, normalization keeps them zero") {
        Graph g;
        model::BoundParams bound = bind_params(g, ps);
        NodeId f = g.leaf(features);
        NodeId z = gcn_encode(g, bound, cfg, std::vector<double>(n * n, 0.0), n, f);
        for (double v : g.value(z).values) CHECK(v == 0.0);
    }

    ps.init(rng);

    SUBCASE("empty graph reduces each layer to a plain affine map") {
        Graph g;
        model::BoundParams bound = bind_params(g, ps);
        NodeId f = g.leaf(features);
        NodeId z = gcn_encode(g, bound, cfg, std::vector<double>(n * n, 0.0), n, f);
        // oracle: rows of relu(X W1) W2, L2-normalized
        Graph o;
        NodeId of = o.leaf(features);
        NodeId oz = o.row_l2_normalize(
            o.matmul(o.relu(o.matmul(of, o.leaf(ps.at("gcn.w1")))), o.leaf(ps.at("gcn.w2"))));
        for (std::size_t k = 0; k < g.value(z).numel(); ++k)
            CHECK(g.value(z).values[k] == doctest::Approx(o.value(oz).values[k]).epsilon(1e-12));
    }

    SUBCASE("output row norms are zero or one") {
        Rng wrng(17);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> adj(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                    if (wrng.uniform() < 0.5) adj[i * n + j] = adj[j * n + i] = 1.0;
            Graph g;
            model::BoundParams bound = bind_params(g, ps);
            NodeId f = g.leaf(features);
            NodeId z = gcn_encode(g, bound, cfg, adj, n, f);
            const Tensor& t = g.value(z);
            for (std::size_t i = 0; i < n; ++i) {
                double norm = 0.0;
                for (std::size_t j = 0; j < t.cols(); ++j) norm += t.at(i, j) * t.at(i, j);
                norm = std::sqrt(norm);
                CHECK((std::abs(norm - 1.0) <= 1e-12 || norm == 0.0));
            }
        }
    }
}

namespace {
// independent oracle for one diagonal log-softmax term
double term_oracle(const Tensor& lhs, const Tensor& rhs, double tau) {
    std::size_t b = lhs.rows(), d = lhs.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double denom = 0.0, diag = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            double sim = 0.0;
            for (std::size_t k = 0; k < d; ++k) sim += lhs.at(i, k) * rhs.at(j, k);
            double e = std::exp(sim / tau);
            denom += e;
            if (i == j) diag = e;
        }
        total += std::log(diag / denom);
    }
    return total / static_cast<double>(b);
}

double score_values(const Tensor& za, const Tensor& zp, const Tensor& zq, double tau) {
    Graph g;
    NodeId a = g.leaf(za), p = g.leaf(zp), q = g.leaf(zq);
    return g.value(graph_contrastive_score(g, a, p, q, tau)).values[0];
}
}  // namespace

TEST_CASE("graph_contrastive_score: singleton batch scores zero") {
    Tensor za = Tensor::matrix(1, 4, {0.1, 0.2, 0.3, 0.4});
    Tensor zp = Tensor::matrix(1, 4, {0.5, 0.1, -0.2, 0.3});
    Tensor zq = Tensor::matrix(1, 4, {-0.3, 0.2, 0.1, 0.6});
    CHECK(score_values(za, zp, zq, 0.1) == 0.0);
}

TEST_CASE("graph_contrastive_score: identical rows give ln(1/B)") {
    std::size_t b = 6;
    Tensor z = Tensor::zeros({b, 3});
    for (std::size_t i = 0; i < b; ++i) {
        z.at(i, 0) = 0.6;
        z.at(i, 1) = -0.8;
    }
    double expected = std::log(1.0 / static_cast<double>(b));
    CHECK(score_values(z, z, z, 0.1) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("graph_contrastive_score: log-softmax terms never exceed zero") {
    Rng rng(19);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t b = 2 + static_cast<std::size_t>(rng.next_u64() % 6);
        std::size_t d = 3;
        auto make = [&] {
            Tensor t = Tensor::zeros({b, d});
            for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
            return t;
        };
        Tensor za = make(), zp = make(), zq = make();
        double t1 = term_oracle(zp, za, 0.1);
        double t2 = term_oracle(zq, za, 0.1);
        double t3 = term_oracle(zp, zq, 0.1);
        CHECK(t1 <= 0.0);
        CHECK(t2 <= 0.0);
        CHECK(t3 <= 0.0);
        CHECK(score_values(za, zp, zq, 0.1) == doctest::Approx(t1 + t2 - t3).epsilon(1e-9));
    }
}

TEST_CASE("dgcl_loss: deterministic, degenerate window, frozen-topology gradients") {
    std::size_t n = 4, w = 16;
    GcnConfig gcn_cfg{6, 8, 4};
    DgclConfig cfg;
    cfg.snapshots = 4;
    Rng rng(23);
    model::ParamSet ps;
    add_gcn_params(ps, gcn_cfg);
    ps.init(rng);

    SUBCASE("two calls agree bitwise") {
        std::vector<double> window = random_window(rng, n, w);
        auto run = [&] {
            Graph g;
            model::BoundParams bound = bind_params(g, ps);
            DgclResult r = dgcl_loss(g, bound, gcn_cfg, cfg, window, n, w);
            return g.value(r.score).values[0];
        };
        CHECK(run() == run());
    }

    SUBCASE("identical snapshots select (1,2) at zero divergence") {
        std::vector<double> window(n * w);
        std::size_t delta = w / cfg.snapshots;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < w; ++t)
                window[i * w + t] =
                    std::sin(0.7 * static_cast<double>(i) + static_cast<double>(t % delta));
        Graph g;
        model::BoundParams bound = bind_params(g, ps);
        DgclResult r = dgcl_loss(g, bound, gcn_cfg, cfg, window, n, w);
        CHECK(r.diagnostics.pair.p == 1);
        CHECK(r.diagnostics.pair.q == 2);
        CHECK(r.diagnostics.pair.divergence <= 1e-12);
        CHECK(std::isfinite(g.value(r.score).values[0]));
    }

    SUBCASE("gradients flow through the GCN weights only, topology fixed") {
        std::vector<double> window = random_window(rng, n, w);
        Graph g;
        model::BoundParams bound = bind_params(g, ps);
        DgclResult r = dgcl_loss(g, bound, gcn_cfg, cfg, window, n, w);
        CHECK(g.last() == r.score);
        auto report = diff::check_gradients(g, 1e-5, 1e-4, 1e-6);
        for (const auto& f : report.failures)
            MESSAGE(f.label << "[" << f.index << "] analytic " << f.analytic << " ref "
                            << f.reference);
        CHECK(report.ok());
        CHECK(report.entries_checked == ps.total_size());
    }
}

TEST_CASE("write_graph_inspection emits the documented sections") {
    std::size_t n = 4, w = 16;
    GcnConfig gcn_cfg{6, 8, 4};
    DgclConfig cfg;
    cfg.snapshots = 4;
    Rng rng(29);
    model::ParamSet ps;
    add_gcn_params(ps, gcn_cfg);
    ps.init(rng);
    std::vector<double> window = random_window(rng, n, w);
    Graph g;
    model::BoundParams bound = bind_params(g, ps);
    DgclResult r = dgcl_loss(g, bound, gcn_cfg, cfg, window, n, w);
    write_graph_inspection("test_dgcl_inspect.csv", 17, r.diagnostics);
    std::ifstream in("test_dgcl_inspect.csv");
    REQUIRE(in.good());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("window_start=17") != std::string::npos);
    CHECK(text.find("section=edges") != std::string::npos);
    CHECK(text.find("section=degree_distribution") != std::string::npos);
    CHECK(text.find("selected_pair=") != std::string::npos);
    std::remove("test_dgcl_inspect.csv");
}
