#include "contrastad/model.hpp"

#include <cmath>
#include <stdexcept>

namespace contrastad::model {

using diff::Graph;
using diff::NodeId;
using diff::Tensor;

Model init_model(ModelConfig cfg, std::uint64_t seed) {
    cfg.resolve();
    Model m;
    m.cfg = cfg;
    mpe::add_mpe_params(m.params, cfg.mpe);
    fam::add_fam_params(m.params, cfg.fam);
    // heads: one shared affine map per task, applied to every node row
    m.params.add("head.forecast.w", {cfg.fam.d_model, 1}, cfg.fam.d_model);
    m.params.add("head.forecast.b", {1, 1}, 0);
    m.params.add("head.recon.w", {cfg.fam.d_model, cfg.window}, cfg.fam.d_model);
    m.params.add("head.recon.b", {1, cfg.window}, 0);
    // GCN weights are always registered so the RNG stream (and with it every
    // other init) does not depend on whether DGCL is enabled
    dgcl::add_gcn_params(m.params, cfg.gcn);
    Rng rng(seed);
    m.params.init(rng);
    return m;
}

NodeId rmse_node(Graph& g, NodeId a, NodeId b) {
    NodeId diff = g.sub(a, b);
    return g.sqrt(g.mean_all(g.mul(diff, diff)));
}

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("rmse: sizes " + std::to_string(pred.size()) + " and " +
                                    std::to_string(target.size()) + " differ");
    double ss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.size()));
}

namespace {
WindowGraph build_common(const Model& model, const data::Window& window, bool train,
                         std::uint64_t dropout_seed) {
    const ModelConfig& cfg = model.cfg;
    if (window.n_features != cfg.n_features || window.length != cfg.window)
        throw std::invalid_argument("window " + std::to_string(window.n_features) + "x" +
                                    std::to_string(window.length) + " does not match model " +
                                    std::to_string(cfg.n_features) + "x" +
                                    std::to_string(cfg.window));
    WindowGraph wg{Graph(dropout_seed)};
    wg.bound = bind_params(wg.graph, model.params);
    wg.input = wg.graph.leaf(
        Tensor::matrix(window.n_features, window.length, window.values));
    mpe::MpeOutput embed = mpe::mpe_embed(wg.graph, wg.bound, cfg.mpe, wg.input, train);
    fam::FamForward mixed = fam::fam_forward(wg.graph, wg.bound, cfg.fam, embed.z_unified);
    wg.fam_out = mixed.output;
    wg.forecast = wg.graph.add_rowvec(
        wg.graph.matmul(wg.fam_out, wg.bound.at("head.forecast.w")),
        wg.bound.at("head.forecast.b"));
    wg.recon = wg.graph.add_rowvec(wg.graph.matmul(wg.fam_out, wg.bound.at("head.recon.w")),
                                   wg.bound.at("head.recon.b"));
    return wg;
}
}  // namespace

WindowGraph build_forward_graph(const Model& model, const data::Window& window, bool train,
                                std::uint64_t dropout_seed) {
    return build_common(model, window, train, dropout_seed);
}

WindowGraph build_loss_graph(const Model& model, const data::Window& window, double lambda,
                             double beta, bool train, std::uint64_t dropout_seed,
                             bool dgcl_enabled) {
    WindowGraph wg = build_common(model, window, train, dropout_seed);
    Graph& g = wg.graph;
    NodeId target = g.leaf(Tensor::matrix(window.n_features, 1, window.forecast_target));
    wg.loss_forecast = rmse_node(g, wg.forecast, target);
    wg.loss_recon = rmse_node(g, wg.recon, wg.input);
    NodeId partial = g.add(wg.loss_forecast, g.scale(wg.loss_recon, beta));
    if (dgcl_enabled && lambda != 0.0) {
        dgcl::DgclResult dg = dgcl::dgcl_loss(g, wg.bound, model.cfg.gcn, model.cfg.dgcl,
                                              window.values, window.n_features, window.length);
        wg.loss_graph = dg.score;
        wg.dgcl_diagnostics = std::move(dg.diagnostics);
        wg.with_dgcl = true;
        wg.loss_total = g.add(partial, g.scale(wg.loss_graph, lambda));
    } else {
        wg.loss_total = partial;
    }
    return wg;
}

}  // namespace contrastad::model
