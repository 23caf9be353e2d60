#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "contrastad/graph.hpp"
#include "contrastad/params.hpp"

namespace contrastad::fam {

struct FamConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t spectral_k = 6;
    std::size_t ffn_hidden = 128;
    std::size_t d_in = 96;    // width of the embedding entering the mixer
    std::size_t seq_len = 8;  // L, the node axis under the pooled layout

    std::size_t head_dim() const { return d_model / n_heads; }
    std::size_t fft_bins() const { return seq_len / 2 + 1; }
};

void add_fam_params(model::ParamSet& ps, const FamConfig& cfg);

// fixed sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)),
// PE(pos, 2i+1) = cos(pos / 10000^(2i/d))
diff::Tensor positional_encoding_table(std::size_t length, std::size_t d_model);
diff::NodeId positional_encode(diff::Graph& g, diff::NodeId z);

// Hard spectral mask: per channel, real FFT along the sequence axis, keep the
// k highest-magnitude bins (DC included; ties broken toward lower bin index),
// zero the rest, inverse FFT. The mask is frozen at build time, so gradients
// flow only through retained bins.
diff::NodeId spectral_topk_filter(diff::Graph& g, diff::NodeId z, std::size_t k);
// value-level convenience for tests and inspection
diff::Tensor spectral_topk_filter_values(const diff::Tensor& z, std::size_t k);

struct AttentionResult {
    diff::NodeId output;                  // L x d_model
    std::vector<diff::NodeId> scores;     // per head, L x L rows summing to one
};

AttentionResult multi_head_attention(diff::Graph& g, const model::BoundParams& params,
                                     const FamConfig& cfg, const std::string& prefix,
                                     diff::NodeId input);

struct GatedFfnResult {
    diff::NodeId gate;       // sigmoid output
    diff::NodeId gated_sum;  // convex FFN mix plus residual, before normalization
    diff::NodeId output;     // layer-normalized
};

GatedFfnResult gated_ffn_combine(diff::Graph& g, const model::BoundParams& params,
                                 const FamConfig& cfg, const std::string& prefix,
                                 diff::NodeId attn_out);

struct FamForward {
    diff::NodeId output;  // L x d_model
    std::vector<diff::NodeId> filtered;              // per layer, post spectral filter
    std::vector<std::vector<diff::NodeId>> scores;   // per layer, per head
};

// input projection -> positional encoding (first layer only) -> n_layers of
// [spectral filter -> attention with residual -> gated FFN block]. The
// spectral k is clamped to the available bin count.
FamForward fam_forward(diff::Graph& g, const model::BoundParams& params, const FamConfig& cfg,
                       diff::NodeId z);

}  // namespace contrastad::fam
