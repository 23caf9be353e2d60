#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "contrastad/data.hpp"
#include "contrastad/dtw.hpp"
#include "contrastad/graph.hpp"
#include "contrastad/params.hpp"

namespace contrastad::dgcl {

struct Edge {
    std::size_t i = 0;
    std::size_t j = 0;
    double distance = 0.0;
};

// binary symmetric adjacency over the feature nodes of one snapshot
struct SnapshotGraph {
    std::size_t snapshot_index = 1;  // 1-based, matching the inspection export
    std::size_t n_nodes = 0;
    std::vector<std::uint8_t> adjacency;       // n x n, zero diagonal
    std::vector<Edge> edges;                   // exactly the budget, sorted by selection order
    std::vector<double> degree_distribution;   // over degrees 0..n-1, sums to 1

    bool has_edge(std::size_t i, std::size_t j) const { return adjacency[i * n_nodes + j] != 0; }
};

// K = floor(N * E(X) / 2) under a truncated Zipf degree prior with exponent
// gamma, clamped to [1, N(N-1)/2]; an explicit override wins verbatim
std::size_t edge_budget(double gamma, std::size_t n_nodes,
                        std::optional<std::size_t> override_edges = std::nullopt);
// expected degree E(X) = sum n * n^-gamma / sum i^-gamma over 1..N
double expected_degree(double gamma, std::size_t n_nodes);

struct DgclConfig {
    double temperature = 0.1;
    std::size_t snapshots = 10;             // S; delta = W / S
    double gamma = 3.0;
    std::optional<std::size_t> override_edges;
    std::optional<std::size_t> band_width;  // Sakoe-Chiba radius for the DTW calls
    double epsilon = 1e-8;                  // degree-distribution smoothing
};

// snapshot s (1-based) of a (features x window) slice: all pairwise DTW
// distances on the per-node segments, edges on the K largest (ties broken by
// lexicographic (i, j))
SnapshotGraph build_snapshot_graph(const std::vector<double>& window_values, std::size_t n_features,
                                   std::size_t window, std::size_t s, std::size_t snapshots,
                                   std::size_t budget, std::optional<std::size_t> band = std::nullopt);

std::vector<double> degree_distribution(const std::vector<std::uint8_t>& adjacency,
                                        std::size_t n_nodes);

// smoothed symmetric KL between two normalized degree distributions, in nats
double sym_kl(const std::vector<double>& d_a, const std::vector<double>& d_b, double epsilon = 1e-8);

struct DivergentPair {
    std::size_t p = 1;  // 1-based snapshot indices, p < q
    std::size_t q = 2;
    double divergence = 0.0;
};

DivergentPair select_divergent_pair(const std::vector<SnapshotGraph>& graphs, double epsilon = 1e-8);

// entrywise mean adjacency of the S-2 snapshots outside the divergent pair
std::vector<double> anchor_graph(const std::vector<SnapshotGraph>& graphs, std::size_t p,
                                 std::size_t q);

struct GcnConfig {
    std::size_t feature_dim = 6;  // per-node segment stats
    std::size_t hidden = 16;
    std::size_t out_dim = 8;      // d_z
};

void add_gcn_params(model::ParamSet& ps, const GcnConfig& cfg);

// two propagation layers over Dhat^-1/2 (A + I) Dhat^-1/2 with ReLU between,
// rows normalized to unit L2 (zero rows stay zero)
diff::NodeId gcn_encode(diff::Graph& g, const model::BoundParams& params, const GcnConfig& cfg,
                        const std::vector<double>& adjacency, std::size_t n_nodes,
                        diff::NodeId node_features);

// the three-term contrastive score: anchor alignment of both divergent
// snapshots minus their mutual similarity, each term a diagonal log-softmax
// over the node batch at temperature tau
diff::NodeId graph_contrastive_score(diff::Graph& g, diff::NodeId z_a, diff::NodeId z_p,
                                     diff::NodeId z_q, double tau);

// per-node stats (mean, std, min, max, first, last) of one snapshot segment
std::vector<double> snapshot_node_features(const std::vector<double>& window_values,
                                           std::size_t n_features, std::size_t window,
                                           std::size_t s, std::size_t snapshots);

struct DgclDiagnostics {
    std::vector<SnapshotGraph> graphs;
    std::vector<std::vector<double>> divergences;  // S x S symmetric, zero diagonal
    DivergentPair pair;
};

struct DgclResult {
    diff::NodeId score;
    DgclDiagnostics diagnostics;
};

// full pipeline for one window: S snapshot graphs, divergent pair, anchor,
// three GCN encodings, contrastive score. Graph construction is discrete and
// sits outside the gradient path; only the GCN weights receive gradients.
DgclResult dgcl_loss(diff::Graph& g, const model::BoundParams& params, const GcnConfig& gcn,
                     const DgclConfig& cfg, const std::vector<double>& window_values,
                     std::size_t n_features, std::size_t window);

// delimiter-separated inspection export (see the file header for the schema)
void write_graph_inspection(const std::string& path, std::size_t window_start,
                            const DgclDiagnostics& diag);

}  // namespace contrastad::dgcl
