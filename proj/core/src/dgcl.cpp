#include "contrastad/dgcl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace contrastad::dgcl {

using diff::Graph;
using diff::NodeId;
using diff::Tensor;
using model::BoundParams;
using model::ParamSet;

double expected_degree(double gamma, std::size_t n_nodes) {
    if (gamma <= 1.0) throw std::invalid_argument("edge_budget: gamma must be > 1");
    if (n_nodes < 2) throw std::invalid_argument("edge_budget: need at least 2 nodes");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 1; k <= n_nodes; ++k) {
        double p = std::pow(static_cast<double>(k), -gamma);
        den += p;
        num += static_cast<double>(k) * p;
    }
    return num / den;
}

std::size_t edge_budget(double gamma, std::size_t n_nodes,
                        std::optional<std::size_t> override_edges) {
    std::size_t max_edges = n_nodes * (n_nodes - 1) / 2;
    if (override_edges) {
        if (*override_edges < 1 || *override_edges > max_edges)
            throw std::invalid_argument("edge_budget: override " + std::to_string(*override_edges) +
                                        " outside [1, " + std::to_string(max_edges) + "]");
        return *override_edges;
    }
    double e = expected_degree(gamma, n_nodes);
    auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n_nodes) * e / 2.0));
    return std::clamp<std::size_t>(k, 1, max_edges);
}

std::vector<double> degree_distribution(const std::vector<std::uint8_t>& adjacency,
                                        std::size_t n_nodes) {
    std::vector<double> dist(n_nodes, 0.0);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        std::size_t deg = 0;
        for (std::size_t j = 0; j < n_nodes; ++j) deg += adjacency[i * n_nodes + j] ? 1 : 0;
        dist[deg] += 1.0;
    }
    for (double& d : dist) d /= static_cast<double>(n_nodes);
    return dist;
}

SnapshotGraph build_snapshot_graph(const std::vector<double>& window_values, std::size_t n_features,
                                   std::size_t window, std::size_t s, std::size_t snapshots,
                                   std::size_t budget,
                                   std::optional<std::size_t> band) {
    if (snapshots == 0 || window % snapshots != 0)
        throw std::invalid_argument("build_snapshot_graph: snapshot count must divide the window");
    if (s < 1 || s > snapshots)
        throw std::invalid_argument("build_snapshot_graph: snapshot index out of range");
    std::size_t delta = window / snapshots;
    std::size_t offset = (s - 1) * delta;

    auto segment = [&](std::size_t node) {
        const double* row = &window_values[node * window + offset];
        return std::vector<double>(row, row + delta);
    };

    std::vector<Edge> candidates;
    candidates.reserve(n_features * (n_features - 1) / 2);
    for (std::size_t i = 0; i < n_features; ++i) {
        std::vector<double> a = segment(i);
        for (std::size_t j = i + 1; j < n_features; ++j)
            candidates.push_back({i, j, dtw_distance(a, segment(j), band)});
    }
    if (budget > candidates.size())
        throw std::invalid_argument("build_snapshot_graph: budget exceeds node pairs");

    // largest distance first, ties by lexicographic (i, j)
    std::sort(candidates.begin(), candidates.end(), [](const Edge& a, const Edge& b) {
        if (a.distance != b.distance) return a.distance > b.distance;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });

    SnapshotGraph graph;
    graph.snapshot_index = s;
    graph.n_nodes = n_features;
    graph.adjacency.assign(n_features * n_features, 0);
    graph.edges.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(budget));
    for (const Edge& e : graph.edges) {
        graph.adjacency[e.i * n_features + e.j] = 1;
        graph.adjacency[e.j * n_features + e.i] = 1;
    }
    graph.degree_distribution = degree_distribution(graph.adjacency, n_features);
    return graph;
}

double sym_kl(const std::vector<double>& d_a, const std::vector<double>& d_b, double epsilon) {
    if (d_a.size() != d_b.size())
        throw std::invalid_argument("sym_kl: lengths " + std::to_string(d_a.size()) + " and " +
                                    std::to_string(d_b.size()) + " differ");
    std::vector<double> a(d_a), b(d_b);
    double sa = 0.0, sb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] += epsilon;
        b[k] += epsilon;
        sa += a[k];
        sb += b[k];
    }
    double kl = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double pa = a[k] / sa, pb = b[k] / sb;
        kl += pa * std::log(pa / pb) + pb * std::log(pb / pa);
    }
    return kl;
}

DivergentPair select_divergent_pair(const std::vector<SnapshotGraph>& graphs, double epsilon) {
    if (graphs.size() < 3)
        throw std::invalid_argument("select_divergent_pair: need at least 3 snapshots");
    DivergentPair best;
    best.divergence = -1.0;
    for (std::size_t p = 0; p < graphs.size(); ++p)
        for (std::size_t q = p + 1; q < graphs.size(); ++q) {
            double d = sym_kl(graphs[p].degree_distribution, graphs[q].degree_distribution, epsilon);
            if (d > best.divergence) best = {p + 1, q + 1, d};  // ties keep the first (lexicographic) pair
        }
    return best;
}

std::vector<double> anchor_graph(const std::vector<SnapshotGraph>& graphs, std::size_t p,
                                 std::size_t q) {
    if (graphs.size() < 3) throw std::invalid_argument("anchor_graph: need at least 3 snapshots");
    std::size_t n = graphs[0].n_nodes;
    std::vector<double> anchor(n * n, 0.0);
    double count = static_cast<double>(graphs.size() - 2);
    for (std::size_t s = 0; s < graphs.size(); ++s) {
        if (s + 1 == p || s + 1 == q) continue;
        for (std::size_t k = 0; k < anchor.size(); ++k)
            anchor[k] += static_cast<double>(graphs[s].adjacency[k]) / count;
    }
    return anchor;
}

void add_gcn_params(ParamSet& ps, const GcnConfig& cfg) {
    ps.add("gcn.w1", {cfg.feature_dim, cfg.hidden}, cfg.feature_dim);
    ps.add("gcn.w2", {cfg.hidden, cfg.out_dim}, cfg.hidden);
}

namespace {
// Dhat^-1/2 (A + I) Dhat^-1/2 as a dense constant; the self-loop keeps every
// degree strictly positive
Tensor normalized_adjacency(const std::vector<double>& adjacency, std::size_t n) {
    std::vector<double> with_loops(adjacency);
    for (std::size_t i = 0; i < n; ++i) with_loops[i * n + i] += 1.0;
    std::vector<double> inv_sqrt_deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += with_loops[i * n + j];
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    Tensor a = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a.at(i, j) = inv_sqrt_deg[i] * with_loops[i * n + j] * inv_sqrt_deg[j];
    return a;
}
}  // namespace

NodeId gcn_encode(Graph& g, const BoundParams& params, const GcnConfig& cfg,
                  const std::vector<double>& adjacency, std::size_t n_nodes,
                  NodeId node_features) {
    NodeId a_hat = g.leaf(normalized_adjacency(adjacency, n_nodes));
    NodeId h = g.relu(g.matmul(g.matmul(a_hat, node_features), params.at("gcn.w1")));
    NodeId z = g.matmul(g.matmul(a_hat, h), params.at("gcn.w2"));
    return g.row_l2_normalize(z);
}

namespace {
// (1/B) sum_i log softmax_j(lhs_i . rhs_j / tau) at j = i
NodeId diagonal_log_softmax_mean(Graph& g, NodeId lhs, NodeId rhs, double tau) {
    std::size_t b = g.value(lhs).rows();
    NodeId sim = g.scale(g.matmul(lhs, g.transpose(rhs)), 1.0 / tau);
    NodeId logsoft = g.log(g.softmax(sim, 1));
    Tensor eye = Tensor::zeros({b, b});
    for (std::size_t i = 0; i < b; ++i) eye.at(i, i) = 1.0;
    NodeId diag = g.mul(logsoft, g.leaf(std::move(eye)));
    // mean over all B^2 entries picks up the diagonal sum / B^2; rescale to 1/B
    return g.scale(g.mean_all(diag), static_cast<double>(b));
}
}  // namespace

NodeId graph_contrastive_score(Graph& g, NodeId z_a, NodeId z_p, NodeId z_q, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("graph_contrastive_score: tau must be > 0");
    const Tensor& ta = g.value(z_a);
    if (!ta.same_shape(g.value(z_p)) || !ta.same_shape(g.value(z_q)))
        throw std::invalid_argument("graph_contrastive_score: embedding shapes differ");
    NodeId align_p = diagonal_log_softmax_mean(g, z_p, z_a, tau);
    NodeId align_q = diagonal_log_softmax_mean(g, z_q, z_a, tau);
    NodeId separate = diagonal_log_softmax_mean(g, z_p, z_q, tau);
    return g.sub(g.add(align_p, align_q), separate);
}

std::vector<double> snapshot_node_features(const std::vector<double>& window_values,
                                           std::size_t n_features, std::size_t window,
                                           std::size_t s, std::size_t snapshots) {
    std::size_t delta = window / snapshots;
    std::size_t offset = (s - 1) * delta;
    std::vector<double> features(n_features * 6, 0.0);
    for (std::size_t i = 0; i < n_features; ++i) {
        const double* seg = &window_values[i * window + offset];
        double mean = 0.0, lo = seg[0], hi = seg[0];
        for (std::size_t t = 0; t < delta; ++t) {
            mean += seg[t];
            lo = std::min(lo, seg[t]);
            hi = std::max(hi, seg[t]);
        }
        mean /= static_cast<double>(delta);
        double var = 0.0;
        for (std::size_t t = 0; t < delta; ++t) var += (seg[t] - mean) * (seg[t] - mean);
        var /= static_cast<double>(delta);
        double* f = &features[i * 6];
        f[0] = mean;
        f[1] = std::sqrt(var);
        f[2] = lo;
        f[3] = hi;
        f[4] = seg[0];
        f[5] = seg[delta - 1];
    }
    return features;
}

DgclResult dgcl_loss(Graph& g, const BoundParams& params, const GcnConfig& gcn,
                     const DgclConfig& cfg, const std::vector<double>& window_values,
                     std::size_t n_features, std::size_t window) {
    if (cfg.snapshots < 3)
        throw std::invalid_argument("dgcl_loss: need at least 3 snapshots");
    if (window % cfg.snapshots != 0)
        throw std::invalid_argument("dgcl_loss: snapshot count must divide the window");

    std::size_t budget = edge_budget(cfg.gamma, n_features, cfg.override_edges);
    DgclResult result;
    DgclDiagnostics& diag = result.diagnostics;
    diag.graphs.reserve(cfg.snapshots);
    for (std::size_t s = 1; s <= cfg.snapshots; ++s)
        diag.graphs.push_back(build_snapshot_graph(window_values, n_features, window, s,
                                                   cfg.snapshots, budget, cfg.band_width));

    diag.divergences.assign(cfg.snapshots, std::vector<double>(cfg.snapshots, 0.0));
    for (std::size_t a = 0; a < cfg.snapshots; ++a)
        for (std::size_t b = a + 1; b < cfg.snapshots; ++b) {
            double d = sym_kl(diag.graphs[a].degree_distribution,
                              diag.graphs[b].degree_distribution, cfg.epsilon);
            diag.divergences[a][b] = diag.divergences[b][a] = d;
        }
    diag.pair = select_divergent_pair(diag.graphs, cfg.epsilon);

    std::vector<double> anchor = anchor_graph(diag.graphs, diag.pair.p, diag.pair.q);

    // node features: per-snapshot stats for p and q, mean of the remaining
    // snapshots' stats for the anchor
    std::vector<double> feat_p =
        snapshot_node_features(window_values, n_features, window, diag.pair.p, cfg.snapshots);
    std::vector<double> feat_q =
        snapshot_node_features(window_values, n_features, window, diag.pair.q, cfg.snapshots);
    std::vector<double> feat_a(n_features * 6, 0.0);
    double rest = static_cast<double>(cfg.snapshots - 2);
    for (std::size_t s = 1; s <= cfg.snapshots; ++s) {
        if (s == diag.pair.p || s == diag.pair.q) continue;
        std::vector<double> f = snapshot_node_features(window_values, n_features, window, s,
                                                       cfg.snapshots);
        for (std::size_t k = 0; k < feat_a.size(); ++k) feat_a[k] += f[k] / rest;
    }

    NodeId fa = g.leaf(Tensor::matrix(n_features, 6, std::move(feat_a)));
    NodeId fp = g.leaf(Tensor::matrix(n_features, 6, std::move(feat_p)));
    NodeId fq = g.leaf(Tensor::matrix(n_features, 6, std::move(feat_q)));

    auto binary_to_double = [](const std::vector<std::uint8_t>& a) {
        return std::vector<double>(a.begin(), a.end());
    };
    NodeId z_a = gcn_encode(g, params, gcn, anchor, n_features, fa);
    NodeId z_p = gcn_encode(g, params, gcn, binary_to_double(diag.graphs[diag.pair.p - 1].adjacency),
                            n_features, fp);
    NodeId z_q = gcn_encode(g, params, gcn, binary_to_double(diag.graphs[diag.pair.q - 1].adjacency),
                            n_features, fq);
    result.score = graph_contrastive_score(g, z_a, z_p, z_q, cfg.temperature);
    return result;
}

void write_graph_inspection(const std::string& path, std::size_t window_start,
                            const DgclDiagnostics& diag) {
    std::ofstream out(path);
    if (!out) throw data::DataError("cannot write file: " + path);
    std::size_t s_count = diag.graphs.size();
    std::size_t n = diag.graphs.empty() ? 0 : diag.graphs[0].n_nodes;
    out << "# graph inspection v1\n";
    out << "# window_start=" << window_start << " n_features=" << n << " snapshots=" << s_count
        << " edges_per_snapshot=" << (diag.graphs.empty() ? 0 : diag.graphs[0].edges.size()) << "\n";
    out << "# selected_pair=" << diag.pair.p << "," << diag.pair.q
        << " divergence=" << diag.pair.divergence << "\n";
    out << "# section=edges columns: snapshot,i,j,dtw_distance\n";
    for (const SnapshotGraph& g : diag.graphs)
        for (const Edge& e : g.edges)
            out << g.snapshot_index << "," << e.i << "," << e.j << "," << e.distance << "\n";
    out << "# section=degree_distribution columns: snapshot,degree,fraction\n";
    for (const SnapshotGraph& g : diag.graphs)
        for (std::size_t d = 0; d < g.degree_distribution.size(); ++d)
            out << g.snapshot_index << "," << d << "," << g.degree_distribution[d] << "\n";
    out << "# section=divergences columns: p,q,sym_kl\n";
    for (std::size_t a = 0; a < s_count; ++a)
        for (std::size_t b = a + 1; b < s_count; ++b)
            out << (a + 1) << "," << (b + 1) << "," << diag.divergences[a][b] << "\n";
    if (!out) throw data::DataError("write failed: " + path);
}

}  // namespace contrastad::dgcl
