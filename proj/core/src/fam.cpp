#include "contrastad/fam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace contrastad::fam {

using diff::Graph;
using diff::NodeId;
using diff::Tensor;
using model::BoundParams;
using model::ParamSet;

void add_fam_params(ParamSet& ps, const FamConfig& cfg) {
    if (cfg.d_model % 2 != 0) throw std::invalid_argument("fam: d_model must be even");
    if (cfg.d_model % cfg.n_heads != 0)
        throw std::invalid_argument("fam: d_model must be divisible by n_heads");
    ps.add("fam.proj.w", {cfg.d_in, cfg.d_model}, cfg.d_in);
    ps.add("fam.proj.b", {1, cfg.d_model}, 0);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        std::string lp = "fam.layer" + std::to_string(l);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            std::string hp = lp + ".head" + std::to_string(h);
            ps.add(hp + ".wq", {cfg.d_model, cfg.head_dim()}, cfg.d_model);
            ps.add(hp + ".wk", {cfg.d_model, cfg.head_dim()}, cfg.d_model);
            ps.add(hp + ".wv", {cfg.d_model, cfg.head_dim()}, cfg.d_model);
        }
        ps.add(lp + ".wo", {cfg.d_model, cfg.d_model}, cfg.d_model);
        for (int i = 1; i <= 2; ++i) {
            std::string fp = lp + ".ffn" + std::to_string(i);
            ps.add(fp + ".w1", {cfg.d_model, cfg.ffn_hidden}, cfg.d_model);
            ps.add(fp + ".b1", {1, cfg.ffn_hidden}, 0);
            ps.add(fp + ".w2", {cfg.ffn_hidden, cfg.d_model}, cfg.ffn_hidden);
            ps.add(fp + ".b2", {1, cfg.d_model}, 0);
        }
        ps.add(lp + ".wg", {cfg.d_model, cfg.d_model}, cfg.d_model);
    }
}

Tensor positional_encoding_table(std::size_t length, std::size_t d_model) {
    if (d_model % 2 != 0) throw std::invalid_argument("positional encoding: d must be even");
    Tensor pe = Tensor::zeros({length, d_model});
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < d_model / 2; ++i) {
            double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                 static_cast<double>(d_model));
            pe.at(pos, 2 * i) = std::sin(static_cast<double>(pos) / rate);
            pe.at(pos, 2 * i + 1) = std::cos(static_cast<double>(pos) / rate);
        }
    return pe;
}

NodeId positional_encode(Graph& g, NodeId z) {
    const Tensor& t = g.value(z);
    NodeId pe = g.leaf(positional_encoding_table(t.rows(), t.cols()));
    return g.add(z, pe);
}

namespace {
// per-channel top-k mask over bin magnitudes; ties go to the lower bin index
std::vector<std::uint8_t> topk_mask(const Tensor& spectrum, std::size_t k) {
    std::size_t ch = spectrum.rows(), bins = spectrum.cols() / 2;
    std::vector<std::uint8_t> mask(ch * bins, 0);
    std::vector<std::size_t> order(bins);
    for (std::size_t c = 0; c < ch; ++c) {
        const double* row = &spectrum.values[c * 2 * bins];
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double ma = std::hypot(row[2 * a], row[2 * a + 1]);
            double mb = std::hypot(row[2 * b], row[2 * b + 1]);
            if (ma != mb) return ma > mb;
            return a < b;
        });
        for (std::size_t i = 0; i < k; ++i) mask[c * bins + order[i]] = 1;
    }
    return mask;
}
}  // namespace

NodeId spectral_topk_filter(Graph& g, NodeId z, std::size_t k) {
    const Tensor& t = g.value(z);
    std::size_t len = t.rows();  // sequence axis
    std::size_t bins = len / 2 + 1;
    if (k < 1 || k > bins)
        throw std::invalid_argument("spectral_topk_filter: k " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(bins) + "]");
    NodeId channels_major = g.transpose(z);  // d x L
    NodeId spectrum = g.rfft(channels_major);
    NodeId masked = g.bin_mask(spectrum, topk_mask(g.value(spectrum), k));
    NodeId back = g.irfft(masked, len);
    return g.transpose(back);
}

Tensor spectral_topk_filter_values(const Tensor& z, std::size_t k) {
    Graph g;
    NodeId in = g.leaf(z);
    NodeId out = spectral_topk_filter(g, in, k);
    return g.value(out);
}

AttentionResult multi_head_attention(Graph& g, const BoundParams& params, const FamConfig& cfg,
                                     const std::string& prefix, NodeId input) {
    AttentionResult result;
    std::vector<NodeId> heads;
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        std::string hp = prefix + ".head" + std::to_string(h);
        NodeId q = g.matmul(input, params.at(hp + ".wq"));
        NodeId k = g.matmul(input, params.at(hp + ".wk"));
        NodeId v = g.matmul(input, params.at(hp + ".wv"));
        NodeId scores = g.softmax(g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_dk), 1);
        result.scores.push_back(scores);
        heads.push_back(g.matmul(scores, v));
    }
    NodeId merged = heads.size() == 1 ? heads[0] : g.concat(heads, 1);
    result.output = g.matmul(merged, params.at(prefix + ".wo"));
    return result;
}

namespace {
NodeId ffn(Graph& g, const BoundParams& params, const std::string& prefix, NodeId x) {
    NodeId hidden = g.relu(g.add_rowvec(g.matmul(x, params.at(prefix + ".w1")),
                                        params.at(prefix + ".b1")));
    return g.add_rowvec(g.matmul(hidden, params.at(prefix + ".w2")), params.at(prefix + ".b2"));
}
}  // namespace

GatedFfnResult gated_ffn_combine(Graph& g, const BoundParams& params, const FamConfig& cfg,
                                 const std::string& prefix, NodeId attn_out) {
    (void)cfg;
    GatedFfnResult result;
    NodeId f1 = ffn(g, params, prefix + ".ffn1", attn_out);
    NodeId f2 = ffn(g, params, prefix + ".ffn2", attn_out);
    result.gate = g.sigmoid(g.matmul(g.add(f1, f2), params.at(prefix + ".wg")));
    // g*f1 + (1-g)*f2 written as f2 + g*(f1 - f2), so the mix stays convex
    NodeId mix = g.add(f2, g.mul(result.gate, g.sub(f1, f2)));
    result.gated_sum = g.add(mix, attn_out);
    result.output = g.layer_norm(result.gated_sum);
    return result;
}

FamForward fam_forward(Graph& g, const BoundParams& params, const FamConfig& cfg, NodeId z) {
    FamForward fwd;
    NodeId x = g.add_rowvec(g.matmul(z, params.at("fam.proj.w")), params.at("fam.proj.b"));
    x = positional_encode(g, x);
    std::size_t k = std::min(cfg.spectral_k, cfg.fft_bins());
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        std::string lp = "fam.layer" + std::to_string(l);
        NodeId filtered = spectral_topk_filter(g, x, k);
        fwd.filtered.push_back(filtered);
        AttentionResult attn = multi_head_attention(g, params, cfg, lp, filtered);
        fwd.scores.push_back(attn.scores);
        NodeId attn_res = g.add(attn.output, filtered);
        x = gated_ffn_combine(g, params, cfg, lp, attn_res).output;
    }
    fwd.output = x;
    return fwd;
}

}  // namespace contrastad::fam
