#include "contrastad/training.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include "contrastad/metrics.hpp"
#include "json.hpp"

namespace contrastad::training {

using data::Matrix;
using data::Window;
using model::Model;
using model::WindowGraph;

model::ModelConfig TrainConfig::model_config(std::size_t n_features) const {
    model::ModelConfig mc;
    mc.n_features = n_features;
    mc.window = window;
    mc.mpe.channels = mpe_channels;
    mc.mpe.kernel = mpe_kernel;
    mc.mpe.dilations = dilations;
    mc.mpe.gat_dim = gat_dim;
    mc.mpe.gat_channels = gat_channels;
    mc.mpe.gat_kernel = gat_kernel;
    mc.mpe.gat_dropout = gat_dropout;
    mc.fam.n_layers = fam_layers;
    mc.fam.d_model = d_model;
    mc.fam.n_heads = n_heads;
    mc.fam.spectral_k = spectral_k;
    mc.fam.ffn_hidden = ffn_hidden;
    mc.gcn.hidden = gcn_hidden;
    mc.gcn.out_dim = gcn_dim;
    mc.dgcl.temperature = temperature;
    mc.dgcl.snapshots = snapshots;
    mc.dgcl.gamma = gamma;
    if (override_edges >= 0) mc.dgcl.override_edges = static_cast<std::size_t>(override_edges);
    if (band_width >= 0) mc.dgcl.band_width = static_cast<std::size_t>(band_width);
    mc.resolve();
    return mc;
}

data::NormMode TrainConfig::norm_mode() const {
    if (normalization == "minmax") return data::NormMode::MinMax;
    if (normalization == "zscore") return data::NormMode::ZScore;
    throw std::invalid_argument("config: normalization must be minmax or zscore");
}

void TrainConfig::validate() const {
    if (beta < 0.0) throw std::invalid_argument("config: beta must be >= 0");
    if (lambda < -1.0 || lambda > 1.0)
        throw std::invalid_argument("config: lambda must lie in [-1, 1]");
    if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
    if (window < 2) throw std::invalid_argument("config: window must be >= 2");
    if (stride < 1) throw std::invalid_argument("config: stride must be >= 1");
    if (snapshots < 3) throw std::invalid_argument("config: snapshots must be >= 3");
    if (window % snapshots != 0)
        throw std::invalid_argument("config: snapshots must divide the window");
    if (temperature <= 0.0) throw std::invalid_argument("config: temperature must be > 0");
    if (gamma <= 1.0) throw std::invalid_argument("config: gamma must be > 1");
    if (split_ratio <= 0.0 || split_ratio >= 1.0)
        throw std::invalid_argument("config: split_ratio must be in (0, 1)");
    norm_mode();
}

namespace {

using nlohmann::json;

json config_json(const TrainConfig& c) {
    // flat key set; dilations as a comma list to keep the document flat
    std::string dils;
    for (std::size_t i = 0; i < c.dilations.size(); ++i)
        dils += (i ? "," : "") + std::to_string(c.dilations[i]);
    return json{{"lambda", c.lambda},
                {"beta", c.beta},
                {"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"window", c.window},
                {"stride", c.stride},
                {"split_ratio", c.split_ratio},
                {"clip_norm", c.clip_norm},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"dgcl_enabled", c.dgcl_enabled},
                {"normalization", c.normalization},
                {"mpe_channels", c.mpe_channels},
                {"mpe_kernel", c.mpe_kernel},
                {"dilations", dils},
                {"gat_dim", c.gat_dim},
                {"gat_channels", c.gat_channels},
                {"gat_kernel", c.gat_kernel},
                {"gat_dropout", c.gat_dropout},
                {"fam_layers", c.fam_layers},
                {"d_model", c.d_model},
                {"n_heads", c.n_heads},
                {"spectral_k", c.spectral_k},
                {"ffn_hidden", c.ffn_hidden},
                {"snapshots", c.snapshots},
                {"temperature", c.temperature},
                {"gamma", c.gamma},
                {"override_edges", c.override_edges},
                {"band_width", c.band_width},
                {"gcn_hidden", c.gcn_hidden},
                {"gcn_dim", c.gcn_dim}};
}

std::vector<std::size_t> parse_dilations(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoul(tok));
    if (out.empty()) throw std::invalid_argument("config: dilations list is empty");
    return out;
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig config_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    TrainConfig c;
    json known = config_json(c);
    for (auto& [key, value] : j.items())
        if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lambda", c.lambda);
    get("beta", c.beta);
    get("learning_rate", c.learning_rate);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("window", c.window);
    get("stride", c.stride);
    get("split_ratio", c.split_ratio);
    get("clip_norm", c.clip_norm);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_eps", c.adam_eps);
    get("dgcl_enabled", c.dgcl_enabled);
    get("normalization", c.normalization);
    get("mpe_channels", c.mpe_channels);
    get("mpe_kernel", c.mpe_kernel);
    if (j.contains("dilations")) c.dilations = parse_dilations(j.at("dilations").get<std::string>());
    get("gat_dim", c.gat_dim);
    get("gat_channels", c.gat_channels);
    get("gat_kernel", c.gat_kernel);
    get("gat_dropout", c.gat_dropout);
    get("fam_layers", c.fam_layers);
    get("d_model", c.d_model);
    get("n_heads", c.n_heads);
    get("spectral_k", c.spectral_k);
    get("ffn_hidden", c.ffn_hidden);
    get("snapshots", c.snapshots);
    get("temperature", c.temperature);
    get("gamma", c.gamma);
    get("override_edges", c.override_edges);
    get("band_width", c.band_width);
    get("gcn_hidden", c.gcn_hidden);
    get("gcn_dim", c.gcn_dim);
    return c;
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data::DataError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return config_from_json(ss.str());
    } catch (const json::exception& e) {
        throw data::DataError("config file " + path + ": " + e.what());
    }
}

namespace {

struct FlatParams {
    std::vector<std::string> names;
    std::vector<std::size_t> offsets;  // into the flat vector, one per tensor
    std::size_t total = 0;
};

FlatParams flatten_layout(const Model& m) {
    FlatParams fp;
    for (const auto& item : m.params.items()) {
        fp.names.push_back(item.name);
        fp.offsets.push_back(fp.total);
        fp.total += item.tensor.numel();
    }
    return fp;
}

struct ChunkResult {
    double forecast = 0.0, recon = 0.0, graph = 0.0, total = 0.0;
    std::size_t count = 0;
    bool finite = true;
    std::size_t bad_window = 0;
};

// windows [begin, end) of one batch, accumulated in index order into a
// caller-owned scratch buffer (cleared here, reused across batches)
ChunkResult run_chunk(const Model& m, const FlatParams& fp, const std::vector<Window>& windows,
                      std::size_t begin, std::size_t end, const TrainConfig& cfg,
                      std::size_t epoch, std::vector<double>& grad) {
    ChunkResult r;
    std::fill(grad.begin(), grad.end(), 0.0);
    bool use_dgcl = cfg.dgcl_enabled && cfg.lambda != 0.0;
    for (std::size_t wi = begin; wi < end; ++wi) {
        std::uint64_t dropout_seed = mix_seed(cfg.seed, epoch * 1000003ULL + windows[wi].start);
        WindowGraph wg = model::build_loss_graph(m, windows[wi], cfg.lambda, cfg.beta, true,
                                                 dropout_seed, use_dgcl);
        double total = wg.graph.value(wg.loss_total).values[0];
        if (!std::isfinite(total)) {
            r.finite = false;
            r.bad_window = wi;
            return r;
        }
        r.forecast += wg.graph.value(wg.loss_forecast).values[0];
        r.recon += wg.graph.value(wg.loss_recon).values[0];
        if (wg.with_dgcl) r.graph += wg.graph.value(wg.loss_graph).values[0];
        r.total += total;
        ++r.count;
        wg.graph.backward();
        for (std::size_t pi = 0; pi < fp.names.size(); ++pi) {
            const auto& grads = wg.graph.grad(wg.bound.at(fp.names[pi]));
            double* dst = &grad[fp.offsets[pi]];
            for (std::size_t k = 0; k < grads.size(); ++k) dst[k] += grads[k];
        }
    }
    return r;
}

constexpr std::size_t kGradChunks = 8;  // fixed so summation order never depends on core count

}  // namespace

LossBreakdown mean_loss(const Model& m, const std::vector<Window>& windows, double lambda,
                        double beta, bool dgcl_enabled) {
    LossBreakdown sum;
    bool use_dgcl = dgcl_enabled && lambda != 0.0;
    for (const Window& w : windows) {
        WindowGraph wg = model::build_loss_graph(m, w, lambda, beta, false, 0, use_dgcl);
        sum.forecast += wg.graph.value(wg.loss_forecast).values[0];
        sum.reconstruction += wg.graph.value(wg.loss_recon).values[0];
        if (wg.with_dgcl) sum.graph += wg.graph.value(wg.loss_graph).values[0];
        sum.total += wg.graph.value(wg.loss_total).values[0];
    }
    double n = static_cast<double>(windows.size());
    return {sum.forecast / n, sum.reconstruction / n, sum.graph / n, sum.total / n};
}

TrainResult train(const Matrix& train_matrix, const TrainConfig& cfg) {
    cfg.validate();
    std::vector<Window> windows = data::make_windows(train_matrix, cfg.window, cfg.stride);

    TrainResult result{model::init_model(cfg.model_config(train_matrix.cols), cfg.seed), {}};
    Model& m = result.model;
    FlatParams fp = flatten_layout(m);

    std::vector<double> grad(fp.total, 0.0);
    std::vector<double> adam_m(fp.total, 0.0), adam_v(fp.total, 0.0);
    std::vector<std::vector<double>> chunk_grads(kGradChunks,
                                                 std::vector<double>(fp.total, 0.0));
    // flat view over the parameter entries, in item order
    std::vector<double*> flat_values(fp.total);
    {
        std::size_t off = 0;
        for (auto& item : m.params.items())
            for (std::size_t k = 0; k < item.tensor.numel(); ++k, ++off)
                flat_values[off] = &item.tensor.values[k];
    }
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        LossBreakdown epoch_sum;
        std::size_t epoch_count = 0;
        for (std::size_t batch_start = 0; batch_start < windows.size();
             batch_start += cfg.batch_size) {
            std::size_t batch_end = std::min(windows.size(), batch_start + cfg.batch_size);
            std::size_t batch_n = batch_end - batch_start;

            // fixed chunk split; chunks run concurrently but merge in order
            std::size_t per_chunk = (batch_n + kGradChunks - 1) / kGradChunks;
            std::vector<std::future<ChunkResult>> futures;
            std::size_t n_chunks = 0;
            for (std::size_t c = 0; c < kGradChunks; ++c) {
                std::size_t lo = batch_start + c * per_chunk;
                std::size_t hi = std::min(batch_end, lo + per_chunk);
                if (lo >= hi) break;
                futures.push_back(std::async(std::launch::async, run_chunk, std::cref(m),
                                             std::cref(fp), std::cref(windows), lo, hi,
                                             std::cref(cfg), epoch, std::ref(chunk_grads[c])));
                ++n_chunks;
            }
            for (std::size_t c = 0; c < n_chunks; ++c) {
                ChunkResult r = futures[c].get();
                if (!r.finite)
                    throw NumericError("non-finite loss at step " + std::to_string(step) +
                                       " (window " + std::to_string(windows[r.bad_window].start) +
                                       ")");
                epoch_sum.forecast += r.forecast;
                epoch_sum.reconstruction += r.recon;
                epoch_sum.graph += r.graph;
                epoch_sum.total += r.total;
                epoch_count += r.count;
            }

            // merge, clip and update over two fixed parameter ranges; each
            // lane works in index order, so results stay machine-independent
            double inv_n = 1.0 / static_cast<double>(batch_n);
            std::size_t half = fp.total / 2;
            auto merge_range = [&](std::size_t lo, std::size_t hi) {
                double sumsq = 0.0;
                for (std::size_t k = lo; k < hi; ++k) {
                    double gv = chunk_grads[0][k];
                    for (std::size_t c = 1; c < n_chunks; ++c) gv += chunk_grads[c][k];
                    gv *= inv_n;
                    grad[k] = gv;
                    sumsq += gv * gv;
                }
                return sumsq;
            };
            auto upper = std::async(std::launch::async, merge_range, half, fp.total);
            double norm = std::sqrt(merge_range(0, half) + upper.get());
            double clip_scale =
                cfg.clip_norm > 0.0 && norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

            ++step;
            double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            auto update_range = [&](std::size_t lo, std::size_t hi) {
                for (std::size_t k = lo; k < hi; ++k) {
                    double gv = grad[k] * clip_scale;
                    adam_m[k] = cfg.adam_beta1 * adam_m[k] + (1.0 - cfg.adam_beta1) * gv;
                    adam_v[k] = cfg.adam_beta2 * adam_v[k] + (1.0 - cfg.adam_beta2) * gv * gv;
                    *flat_values[k] -=
                        cfg.learning_rate * (adam_m[k] / bias1) /
                        (std::sqrt(adam_v[k] / bias2) + cfg.adam_eps);
                }
            };
            auto upper_update = std::async(std::launch::async, update_range, half, fp.total);
            update_range(0, half);
            upper_update.get();
        }
        double n = static_cast<double>(epoch_count);
        result.trace.push_back({epoch_sum.forecast / n, epoch_sum.reconstruction / n,
                                epoch_sum.graph / n, epoch_sum.total / n});
    }
    return result;
}

std::vector<SweepRow> lambda_sweep(const data::Dataset& normalized, const TrainConfig& base,
                                   const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: empty lambda list");
    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        TrainConfig cfg = base;
        cfg.lambda = lambda;
        auto [train_part, val_part] =
            data::split_train_val(normalized.train, cfg.split_ratio, cfg.window);
        TrainResult tr = train(train_part, cfg);
        metrics::EvalReport report = metrics::evaluate_run(tr.model, normalized, cfg);
        rows.push_back({lambda, report.f1, report.auc});
    }
    return rows;
}

}  // namespace contrastad::training
