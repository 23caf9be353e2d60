#include "contrastad/mpe.hpp"

namespace contrastad::mpe {

using diff::Graph;
using diff::NodeId;
using diff::Tensor;
using model::BoundParams;
using model::ParamSet;

void add_dcn_params(ParamSet& ps, const std::string& prefix, const DcnConfig& cfg) {
    ps.add(prefix + ".proj.w", {cfg.channels, cfg.in_channels, 1}, cfg.in_channels);
    ps.add(prefix + ".proj.b", {cfg.channels}, 0);
    for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        std::size_t fan = cfg.channels * cfg.kernel;
        ps.add(lp + ".filter.w", {cfg.channels, cfg.channels, cfg.kernel}, fan);
        ps.add(lp + ".filter.b", {cfg.channels}, 0);
        ps.add(lp + ".gate.w", {cfg.channels, cfg.channels, cfg.kernel}, fan);
        ps.add(lp + ".gate.b", {cfg.channels}, 0);
        ps.add(lp + ".res.w", {cfg.channels, cfg.channels, 1}, cfg.channels);
        ps.add(lp + ".res.b", {cfg.channels}, 0);
    }
}

void add_mpe_params(ParamSet& ps, const MpeConfig& cfg) {
    add_dcn_params(ps, "mpe.temporal", cfg.temporal_stack());
    add_dcn_params(ps, "mpe.attribute", cfg.attribute_stack());
    ps.add("mpe.gat.proj", {cfg.window, cfg.gat_dim}, cfg.window);
    ps.add("mpe.gat.a_src", {cfg.gat_dim, 1}, cfg.gat_dim);
    ps.add("mpe.gat.a_dst", {cfg.gat_dim, 1}, cfg.gat_dim);
    ps.add("mpe.gat.conv.w", {cfg.gat_channels, cfg.gat_dim, cfg.gat_kernel},
           cfg.gat_dim * cfg.gat_kernel);
    ps.add("mpe.gat.conv.b", {cfg.gat_channels}, 0);
}

NodeId dcn_forward(Graph& g, const BoundParams& params, const std::string& prefix,
                   const DcnConfig& cfg, NodeId input) {
    NodeId z = g.conv1d(input, params.at(prefix + ".proj.w"), params.at(prefix + ".proj.b"), 1);
    for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        NodeId filt = g.tanh(
            g.conv1d(z, params.at(lp + ".filter.w"), params.at(lp + ".filter.b"), cfg.dilations[l]));
        NodeId gate = g.sigmoid(
            g.conv1d(z, params.at(lp + ".gate.w"), params.at(lp + ".gate.b"), cfg.dilations[l]));
        NodeId gated = g.mul(filt, gate);
        NodeId res = g.conv1d(gated, params.at(lp + ".res.w"), params.at(lp + ".res.b"), 1);
        z = g.add(z, res);
    }
    return z;
}

NodeId mpe_temporal(Graph& g, const BoundParams& params, const MpeConfig& cfg, NodeId window) {
    const Tensor w = g.value(window);  // copy: appending nodes may reallocate the trace
    std::size_t n = w.rows();
    DcnConfig stack = cfg.temporal_stack();
    std::vector<NodeId> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // each node's series runs through the shared stack as a 1-channel input
        Tensor series = Tensor::matrix(1, w.cols(), std::vector<double>(
                                                        w.values.begin() + i * w.cols(),
                                                        w.values.begin() + (i + 1) * w.cols()));
        NodeId row = g.leaf(std::move(series));
        NodeId z = dcn_forward(g, params, "mpe.temporal", stack, row);
        rows.push_back(g.transpose(g.mean_axis(z, 1)));  // pool over time -> 1 x channels
    }
    return g.concat(rows, 0);
}

NodeId mpe_attribute(Graph& g, const BoundParams& params, const MpeConfig& cfg, NodeId window) {
    NodeId transposed = g.transpose(window);  // W x N: time steps become channels
    NodeId z = dcn_forward(g, params, "mpe.attribute", cfg.attribute_stack(), transposed);
    return g.transpose(z);  // back to N x channels
}

GatResult gat_forward(Graph& g, const BoundParams& params, const MpeConfig& cfg, NodeId window,
                      bool train) {
    std::size_t n = g.value(window).rows();
    NodeId h = g.matmul(window, params.at("mpe.gat.proj"));  // N x gat_dim
    NodeId src = g.matmul(h, params.at("mpe.gat.a_src"));    // N x 1
    NodeId dst = g.matmul(h, params.at("mpe.gat.a_dst"));    // N x 1
    NodeId ones = g.leaf(Tensor::full({1, n}, 1.0));
    // logits[i][j] = a_src.h_i + a_dst.h_j
    NodeId logits = g.add(g.matmul(src, ones), g.transpose(g.matmul(dst, ones)));
    NodeId attention = g.softmax(g.leaky_relu(logits, 0.01), 1);
    NodeId mixed = g.matmul(attention, h);  // N x gat_dim
    NodeId conv = g.conv1d(g.transpose(mixed), params.at("mpe.gat.conv.w"),
                           params.at("mpe.gat.conv.b"), 1);
    NodeId out = g.dropout(g.transpose(conv), cfg.gat_dropout, train);
    return {attention, out};
}

MpeOutput mpe_embed(Graph& g, const BoundParams& params, const MpeConfig& cfg, NodeId window,
                    bool train) {
    MpeOutput out;
    out.z_seq = mpe_temporal(g, params, cfg, window);
    out.z_fea = mpe_attribute(g, params, cfg, window);
    out.z_gat = gat_forward(g, params, cfg, window, train).output;
    out.z_unified = g.concat({out.z_seq, out.z_fea, out.z_gat}, 1);
    return out;
}

}  // namespace contrastad::mpe
