#pragma once

#include <cstdint>
#include <optional>

#include "contrastad/data.hpp"
#include "contrastad/dgcl.hpp"
#include "contrastad/fam.hpp"
#include "contrastad/graph.hpp"
#include "contrastad/mpe.hpp"
#include "contrastad/params.hpp"

namespace contrastad::model {

struct ModelConfig {
    std::size_t n_features = 8;
    std::size_t window = 100;
    mpe::MpeConfig mpe;
    fam::FamConfig fam;
    dgcl::GcnConfig gcn;
    dgcl::DgclConfig dgcl;

    // keeps the nested dimensions consistent with n_features / window
    void resolve() {
        mpe.n_features = n_features;
        mpe.window = window;
        fam.d_in = mpe.unified_width();
        fam.seq_len = n_features;
        dgcl.gamma = dgcl.gamma;  // already user-set
    }
};

struct Model {
    ModelConfig cfg;
    ParamSet params;
};

// all parameters registered and initialized in a fixed order from the seed
Model init_model(ModelConfig cfg, std::uint64_t seed);

// per-window forward trace: embeddings, mixer, heads (and losses when built
// through build_loss_graph)
struct WindowGraph {
    diff::Graph graph;
    BoundParams bound;
    diff::NodeId input = 0;       // N x W window leaf
    diff::NodeId fam_out = 0;     // N x d_model
    diff::NodeId forecast = 0;    // N x 1
    diff::NodeId recon = 0;       // N x W
    diff::NodeId loss_forecast = 0;
    diff::NodeId loss_recon = 0;
    diff::NodeId loss_graph = 0;  // only valid when with_dgcl
    diff::NodeId loss_total = 0;
    bool with_dgcl = false;
    std::optional<dgcl::DgclDiagnostics> dgcl_diagnostics;
};

// forecasting / reconstruction only (scoring path)
WindowGraph build_forward_graph(const Model& model, const data::Window& window, bool train,
                                std::uint64_t dropout_seed);

// full objective: rmse forecast + beta * rmse reconstruction + lambda * graph
// score; lambda == 0 skips the DGCL computation entirely
WindowGraph build_loss_graph(const Model& model, const data::Window& window, double lambda,
                             double beta, bool train, std::uint64_t dropout_seed,
                             bool dgcl_enabled = true);

// sqrt(mean((a - b)^2)) as a graph node
diff::NodeId rmse_node(diff::Graph& g, diff::NodeId a, diff::NodeId b);
double rmse(const std::vector<double>& pred, const std::vector<double>& target);

}  // namespace contrastad::model
