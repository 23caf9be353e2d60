#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "contrastad/graph.hpp"
#include "contrastad/params.hpp"

namespace contrastad::mpe {

// Gated residual dilated causal convolution stack. Each layer computes
//   Z_k = Z_{k-1} + W_res (tanh(conv(Z_{k-1})) * sigmoid(conv(Z_{k-1})))
// with causal left padding, so the output at time t never sees inputs past t.
struct DcnConfig {
    std::size_t in_channels = 1;
    std::size_t channels = 32;  // hidden width, kept constant for the residual sum
    std::size_t kernel = 2;
    std::vector<std::size_t> dilations = {1, 2, 4, 8};
};

struct MpeConfig {
    std::size_t n_features = 8;   // N, the node axis
    std::size_t window = 100;     // W
    std::size_t channels = 32;    // per-view embedding width
    std::size_t kernel = 2;
    std::vector<std::size_t> dilations = {1, 2, 4, 8};
    std::size_t gat_dim = 32;       // width of the projected node embedding h
    std::size_t gat_channels = 32;  // post-attention conv output channels
    std::size_t gat_kernel = 3;
    double gat_dropout = 0.1;

    DcnConfig temporal_stack() const { return {1, channels, kernel, dilations}; }
    DcnConfig attribute_stack() const { return {window, channels, kernel, dilations}; }
    std::size_t unified_width() const { return channels + channels + gat_channels; }
};

void add_dcn_params(model::ParamSet& ps, const std::string& prefix, const DcnConfig& cfg);
void add_mpe_params(model::ParamSet& ps, const MpeConfig& cfg);

// input (channels x length) -> projected + gated residual stack, same length
diff::NodeId dcn_forward(diff::Graph& g, const model::BoundParams& params,
                         const std::string& prefix, const DcnConfig& cfg, diff::NodeId input);

// per-node temporal stack (weights shared across nodes), mean-pooled over
// time: (N x W) window -> (N x channels)
diff::NodeId mpe_temporal(diff::Graph& g, const model::BoundParams& params, const MpeConfig& cfg,
                          diff::NodeId window);

// the same stack shape applied to the transposed window (time steps act as
// channels, convolution runs along the node axis), transposed back to
// (N x channels)
diff::NodeId mpe_attribute(diff::Graph& g, const model::BoundParams& params, const MpeConfig& cfg,
                           diff::NodeId window);

struct GatResult {
    diff::NodeId attention;  // N x N, row-stochastic
    diff::NodeId output;     // N x gat_channels
};

GatResult gat_forward(diff::Graph& g, const model::BoundParams& params, const MpeConfig& cfg,
                      diff::NodeId window, bool train);

struct MpeOutput {
    diff::NodeId z_seq;
    diff::NodeId z_fea;
    diff::NodeId z_gat;
    diff::NodeId z_unified;  // N x unified_width
};

MpeOutput mpe_embed(diff::Graph& g, const model::BoundParams& params, const MpeConfig& cfg,
                    diff::NodeId window, bool train);

}  // namespace contrastad::mpe
