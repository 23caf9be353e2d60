#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "contrastad/data.hpp"
#include "contrastad/model.hpp"

namespace contrastad::training {

// thrown when the objective turns non-finite; the CLI maps it to exit 3
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lambda = -0.1;
    double beta = 0.1;
    double learning_rate = 1e-4;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    std::size_t window = 100;
    std::size_t stride = 1;
    double split_ratio = 0.8;
    double clip_norm = 5.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool dgcl_enabled = true;
    std::string normalization = "minmax";  // or "zscore"

    // module dimensions
    std::size_t mpe_channels = 32;
    std::size_t mpe_kernel = 2;
    std::vector<std::size_t> dilations = {1, 2, 4, 8};
    std::size_t gat_dim = 32;
    std::size_t gat_channels = 32;
    std::size_t gat_kernel = 3;
    double gat_dropout = 0.1;
    std::size_t fam_layers = 2;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t spectral_k = 6;
    std::size_t ffn_hidden = 128;
    std::size_t snapshots = 10;
    double temperature = 0.1;
    double gamma = 3.0;
    std::int64_t override_edges = -1;  // -1: use the power-law budget
    std::int64_t band_width = -1;      // -1: full DTW
    std::size_t gcn_hidden = 16;
    std::size_t gcn_dim = 8;

    model::ModelConfig model_config(std::size_t n_features) const;
    data::NormMode norm_mode() const;
    void validate() const;
};

// flat key-value JSON document; unknown keys are rejected
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& json_text);
TrainConfig load_config_file(const std::string& path);

struct LossBreakdown {
    double forecast = 0.0;
    double reconstruction = 0.0;
    double graph = 0.0;
    double total = 0.0;
};

struct TrainResult {
    model::Model model;
    std::vector<LossBreakdown> trace;  // one mean breakdown per epoch
};

// mini-batch Adam on the normalized, already-split training matrix; gradient
// accumulation order is fixed (window index within chunk, chunks in order) so
// results are bitwise reproducible for a given seed
TrainResult train(const data::Matrix& train_matrix, const TrainConfig& cfg);

// one full-dataset loss evaluation at the current parameters (no updates, no
// dropout); used by smoke tests comparing against the initial loss
LossBreakdown mean_loss(const model::Model& m, const std::vector<data::Window>& windows,
                        double lambda, double beta, bool dgcl_enabled);

struct SweepRow {
    double lambda = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
};

// trains and evaluates once per lambda with the same seed; reporting only
std::vector<SweepRow> lambda_sweep(const data::Dataset& normalized, const TrainConfig& base,
                                   const std::vector<double>& lambdas);

}  // namespace contrastad::training
