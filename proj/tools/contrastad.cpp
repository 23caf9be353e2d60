// Batch front end: synthesize data, train, score, evaluate, sweep the
// contrastive weight, and inspect snapshot graphs. Exit codes: 0 success,
// 1 usage error, 2 data/format error, 3 numerical failure.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "contrastad/checkpoint.hpp"
#include "contrastad/dgcl.hpp"
#include "contrastad/manifest.hpp"
#include "contrastad/metrics.hpp"
#include "contrastad/synthetic.hpp"
#include "contrastad/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace contrastad;
using training::TrainConfig;

namespace {

bool verbose() {
    const char* v = std::getenv("CONTRASTAD_VERBOSE");
    return v != nullptr && std::string(v) != "0";
}

void vlog(const std::string& msg) {
    if (verbose()) std::cerr << "[contrastad] " << msg << "\n";
}

struct ConfigFlags {
    std::string config_path;
    TrainConfig& cfg;
    explicit ConfigFlags(TrainConfig& c) : cfg(c) {}

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat JSON config file; flags override its values");
        cmd->add_option("--lambda", cfg.lambda, "graph contrastive weight");
        cmd->add_option("--beta", cfg.beta, "reconstruction loss weight");
        cmd->add_option("--lr", cfg.learning_rate, "learning rate");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
        cmd->add_option("--batch", cfg.batch_size, "windows per optimizer step");
        cmd->add_option("--seed", cfg.seed, "run seed");
        cmd->add_option("--window", cfg.window, "sliding window length");
        cmd->add_option("--stride", cfg.stride, "training window stride");
        cmd->add_option("--snapshots", cfg.snapshots, "snapshots per window");
        cmd->add_option("--temperature", cfg.temperature, "contrastive temperature");
        cmd->add_option("--gamma", cfg.gamma, "power-law degree exponent");
        cmd->add_option("--edges", cfg.override_edges, "explicit per-snapshot edge budget");
        cmd->add_option("--band", cfg.band_width, "Sakoe-Chiba radius for DTW");
        cmd->add_option("--spectral-k", cfg.spectral_k, "retained frequency bins");
        cmd->add_option("--d-model", cfg.d_model, "attention width");
        cmd->add_option("--heads", cfg.n_heads, "attention heads");
        cmd->add_option("--normalization", cfg.normalization, "minmax or zscore");
        cmd->add_option("--split-ratio", cfg.split_ratio, "train/validation split ratio");
        cmd->add_flag_callback("--no-dgcl", [this] { cfg.dgcl_enabled = false; },
                               "disable the graph contrastive term");
    }

    // file values first, then explicit flags on top
    void finalize(CLI::App* cmd) {
        if (config_path.empty()) return;
        TrainConfig from_file = training::load_config_file(config_path);
        TrainConfig flag_values = cfg;
        cfg = from_file;
        for (const CLI::Option* opt : cmd->get_options()) {
            if (opt->count() == 0) continue;
            std::string name = opt->get_name();
            if (name == "--lambda") cfg.lambda = flag_values.lambda;
            else if (name == "--beta") cfg.beta = flag_values.beta;
            else if (name == "--lr") cfg.learning_rate = flag_values.learning_rate;
            else if (name == "--epochs") cfg.epochs = flag_values.epochs;
            else if (name == "--batch") cfg.batch_size = flag_values.batch_size;
            else if (name == "--seed") cfg.seed = flag_values.seed;
            else if (name == "--window") cfg.window = flag_values.window;
            else if (name == "--stride") cfg.stride = flag_values.stride;
            else if (name == "--snapshots") cfg.snapshots = flag_values.snapshots;
            else if (name == "--temperature") cfg.temperature = flag_values.temperature;
            else if (name == "--gamma") cfg.gamma = flag_values.gamma;
            else if (name == "--edges") cfg.override_edges = flag_values.override_edges;
            else if (name == "--band") cfg.band_width = flag_values.band_width;
            else if (name == "--spectral-k") cfg.spectral_k = flag_values.spectral_k;
            else if (name == "--d-model") cfg.d_model = flag_values.d_model;
            else if (name == "--heads") cfg.n_heads = flag_values.n_heads;
            else if (name == "--normalization") cfg.normalization = flag_values.normalization;
            else if (name == "--split-ratio") cfg.split_ratio = flag_values.split_ratio;
            else if (name == "--no-dgcl") cfg.dgcl_enabled = false;
        }
    }
};

std::vector<data::AnomalySegment> parse_segments(const std::string& spec) {
    std::vector<data::AnomalySegment> segs;
    if (spec.empty()) return segs;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto colon = tok.find(':');
        if (colon == std::string::npos)
            throw CLI::ValidationError("--anomalies", "expected start:length pairs");
        segs.push_back({std::stoul(tok.substr(0, colon)), std::stoul(tok.substr(colon + 1))});
    }
    return segs;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
    return seeds;
}

std::vector<double> parse_lambdas(const std::string& spec) {
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {  // lo:hi:step
        std::stringstream ss(spec);
        std::string lo_s, hi_s, step_s;
        std::getline(ss, lo_s, ':');
        std::getline(ss, hi_s, ':');
        std::getline(ss, step_s, ':');
        double lo = std::stod(lo_s), hi = std::stod(hi_s), step = std::stod(step_s);
        if (step <= 0.0) throw CLI::ValidationError("--lambdas", "step must be > 0");
        // walk an integer grid so accumulated float error cannot drop the endpoint
        auto count = static_cast<long>(std::llround((hi - lo) / step));
        for (long i = 0; i <= count; ++i) {
            double v = lo + step * static_cast<double>(i);
            out.push_back(std::abs(v) < 1e-12 ? 0.0 : v);
        }
    } else {
        std::stringstream ss(spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    }
    if (out.empty()) throw CLI::ValidationError("--lambdas", "no values given");
    return out;
}

// train.csv + test.csv convention; labels from the test file when present
data::Dataset load_dataset(const std::string& dir, const std::string& label_column,
                           const TrainConfig& cfg) {
    std::string train_path = dir + "/train.csv";
    std::string test_path = dir + "/test.csv";
    data::CsvTable train = data::load_csv(train_path);
    std::optional<std::string> label =
        label_column.empty() ? std::nullopt : std::optional<std::string>(label_column);
    data::CsvTable test = data::load_csv(test_path, label);

    data::Dataset ds;
    ds.feature_names = train.feature_names;
    ds.norm_stats = data::fit_normalizer(train.values, cfg.norm_mode());
    ds.train = data::apply_normalizer(train.values, ds.norm_stats);
    ds.test = data::apply_normalizer(test.values, ds.norm_stats);
    ds.test_labels = test.labels;
    return ds;
}

manifest::Manifest base_manifest(const std::string& command, const TrainConfig& cfg) {
    manifest::Manifest m;
    m.command = command;
    m.config_json = training::config_to_json(cfg);
    m.seed = cfg.seed;
    return m;
}

int cmd_synth(std::size_t features, std::size_t length, const std::string& anomalies,
              std::uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    data::Dataset ds = data::generate_synthetic(features, length, parse_segments(anomalies), seed);
    std::string train_path = out_dir + "/train.csv";
    std::string test_path = out_dir + "/test.csv";
    data::write_csv(train_path, ds.feature_names, ds.train);
    data::write_csv(test_path, ds.feature_names, ds.test, &*ds.test_labels, "label");

    manifest::Manifest m;
    m.command = "synth";
    m.seed = seed;
    nlohmann::json cfg{{"features", features}, {"length", length}, {"anomalies", anomalies}};
    m.config_json = cfg.dump();
    m.outputs = {train_path, test_path};
    m.inputs = {{train_path, manifest::file_digest(train_path)},
                {test_path, manifest::file_digest(test_path)}};
    manifest::write_manifest(out_dir + "/manifest.json", m);
    std::cout << "wrote " << train_path << " (" << ds.train.rows << " rows), " << test_path << " ("
              << ds.test.rows << " rows)\n";
    return 0;
}

void write_loss_trace(const std::string& path, const std::vector<training::LossBreakdown>& trace) {
    std::ofstream out(path);
    if (!out) throw data::DataError("cannot write file: " + path);
    out << "epoch,forecast,reconstruction,graph,total\n";
    out.precision(17);
    for (std::size_t e = 0; e < trace.size(); ++e)
        out << e << ',' << trace[e].forecast << ',' << trace[e].reconstruction << ','
            << trace[e].graph << ',' << trace[e].total << '\n';
}

int cmd_train(const std::string& data_dir, const std::string& label_column, TrainConfig cfg,
              const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    data::Dataset ds = load_dataset(data_dir, label_column, cfg);
    auto [train_part, val_part] = data::split_train_val(ds.train, cfg.split_ratio, cfg.window);
    vlog("training on " + std::to_string(train_part.rows) + " rows");
    training::TrainResult result = training::train(train_part, cfg);
    for (std::size_t e = 0; e < result.trace.size(); ++e)
        vlog("epoch " + std::to_string(e) + " total " + std::to_string(result.trace[e].total));

    std::string ckpt_path = out_dir + "/checkpoint.bin";
    std::string trace_path = out_dir + "/loss_trace.csv";
    training::save_checkpoint(ckpt_path, result.model, cfg,
                              static_cast<std::uint32_t>(cfg.epochs));
    write_loss_trace(trace_path, result.trace);

    manifest::Manifest m = base_manifest("train", cfg);
    m.inputs = {{data_dir + "/train.csv", manifest::file_digest(data_dir + "/train.csv")},
                {data_dir + "/test.csv", manifest::file_digest(data_dir + "/test.csv")}};
    m.outputs = {ckpt_path, trace_path};
    manifest::write_manifest(out_dir + "/manifest.json", m);
    std::cout << "checkpoint: " << ckpt_path << "\nfinal total loss: "
              << result.trace.back().total << "\n";
    return 0;
}

int cmd_score(const std::string& checkpoint_path, const std::string& data_dir,
              const std::string& label_column, const std::string& out_path) {
    training::LoadedCheckpoint loaded = training::load_checkpoint(checkpoint_path);
    data::Dataset ds = load_dataset(data_dir, label_column, loaded.config);
    metrics::ScoreTrace trace =
        metrics::score_series(loaded.model, ds.test, loaded.config.beta);
    const std::vector<int>* labels = ds.test_labels ? &*ds.test_labels : nullptr;
    metrics::emit_plot_data(trace.scores, labels, out_path);

    manifest::Manifest m = base_manifest("score", loaded.config);
    m.inputs = {{checkpoint_path, manifest::file_digest(checkpoint_path)},
                {data_dir + "/test.csv", manifest::file_digest(data_dir + "/test.csv")}};
    m.outputs = {out_path};
    manifest::write_manifest(out_path + ".manifest.json", m);
    std::cout << "wrote " << out_path << " (" << trace.scores.size() << " steps)\n";
    return 0;
}

nlohmann::json report_json(const metrics::EvalReport& r, std::uint64_t seed) {
    return nlohmann::json{{"seed", seed},         {"threshold", r.threshold},
                          {"precision", r.precision}, {"recall", r.recall},
                          {"f1", r.f1},           {"auc", r.auc}};
}

int cmd_eval(const std::string& data_dir, const std::string& label_column,
             const std::string& checkpoint_path, const std::string& seeds_spec, TrainConfig cfg,
             const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    nlohmann::json out;
    manifest::Manifest m = base_manifest("eval", cfg);
    m.inputs = {{data_dir + "/train.csv", manifest::file_digest(data_dir + "/train.csv")},
                {data_dir + "/test.csv", manifest::file_digest(data_dir + "/test.csv")}};

    if (!checkpoint_path.empty()) {
        training::LoadedCheckpoint loaded = training::load_checkpoint(checkpoint_path);
        data::Dataset ds = load_dataset(data_dir, label_column, loaded.config);
        metrics::EvalReport r = metrics::evaluate_run(loaded.model, ds, loaded.config);
        out["runs"] = {report_json(r, loaded.config.seed)};
        std::cout << "f1 " << r.f1 << "  auc " << r.auc << "  precision " << r.precision
                  << "  recall " << r.recall << "\n";
        m.inputs.push_back({checkpoint_path, manifest::file_digest(checkpoint_path)});
    } else {
        std::vector<std::uint64_t> seeds = parse_seeds(seeds_spec);
        m.seeds = seeds;
        data::Dataset ds = load_dataset(data_dir, label_column, cfg);
        auto [train_part, val_part] = data::split_train_val(ds.train, cfg.split_ratio, cfg.window);
        std::vector<metrics::EvalReport> reports;
        nlohmann::json runs = nlohmann::json::array();
        for (std::uint64_t seed : seeds) {
            TrainConfig run_cfg = cfg;
            run_cfg.seed = seed;
            vlog("seed " + std::to_string(seed));
            training::TrainResult tr = training::train(train_part, run_cfg);
            metrics::EvalReport r = metrics::evaluate_run(tr.model, ds, run_cfg);
            std::cout << "seed " << seed << ": f1 " << r.f1 << "  auc " << r.auc << "  precision "
                      << r.precision << "  recall " << r.recall << "\n";
            runs.push_back(report_json(r, seed));
            reports.push_back(std::move(r));
        }
        metrics::AggregateReport agg = metrics::aggregate_runs(reports);
        out["runs"] = runs;
        out["aggregate"] = {
            {"n", agg.n_runs},
            {"precision", {{"mean", agg.precision.mean}, {"std", agg.precision.stddev}}},
            {"recall", {{"mean", agg.recall.mean}, {"std", agg.recall.stddev}}},
            {"f1", {{"mean", agg.f1.mean}, {"std", agg.f1.stddev}}},
            {"auc", {{"mean", agg.auc.mean}, {"std", agg.auc.stddev}}}};
        std::cout << "mean f1 " << agg.f1.mean << " +- " << agg.f1.stddev << "  mean auc "
                  << agg.auc.mean << " +- " << agg.auc.stddev << "\n";
    }
    out["config"] = nlohmann::json::parse(training::config_to_json(cfg));

    std::string report_path = out_dir + "/report.json";
    std::ofstream rep(report_path);
    rep << out.dump(2) << "\n";
    if (!rep) throw data::DataError("cannot write " + report_path);

    m.outputs = {report_path};
    manifest::write_manifest(out_dir + "/manifest.json", m);
    return 0;
}

int cmd_sweep(const std::string& data_dir, const std::string& label_column,
              const std::string& lambdas_spec, TrainConfig cfg, const std::string& out_path) {
    cfg.validate();
    std::vector<double> lambdas = parse_lambdas(lambdas_spec);
    data::Dataset ds = load_dataset(data_dir, label_column, cfg);
    std::vector<training::SweepRow> rows = training::lambda_sweep(ds, cfg, lambdas);

    std::ofstream out(out_path);
    if (!out) throw data::DataError("cannot write " + out_path);
    out << "lambda,f1,auc\n";
    out.precision(17);
    for (const auto& row : rows) out << row.lambda << ',' << row.f1 << ',' << row.auc << '\n';
    for (const auto& row : rows)
        std::cout << "lambda " << row.lambda << ": f1 " << row.f1 << "  auc " << row.auc << "\n";

    manifest::Manifest m = base_manifest("sweep", cfg);
    m.inputs = {{data_dir + "/train.csv", manifest::file_digest(data_dir + "/train.csv")},
                {data_dir + "/test.csv", manifest::file_digest(data_dir + "/test.csv")}};
    m.outputs = {out_path};
    manifest::write_manifest(out_path + ".manifest.json", m);
    return 0;
}

int cmd_inspect_graph(const std::string& data_dir, const std::string& label_column,
                      std::size_t window_index, const std::string& split, TrainConfig cfg,
                      const std::string& out_path) {
    cfg.validate();
    data::Dataset ds = load_dataset(data_dir, label_column, cfg);
    const data::Matrix& source = split == "train" ? ds.train : ds.test;
    std::vector<data::Window> windows = data::make_windows(source, cfg.window, cfg.stride);
    if (window_index >= windows.size())
        throw data::DataError("window index " + std::to_string(window_index) + " out of range (" +
                              std::to_string(windows.size()) + " windows)");
    const data::Window& w = windows[window_index];

    model::ModelConfig mc = cfg.model_config(w.n_features);
    std::size_t budget = dgcl::edge_budget(mc.dgcl.gamma, w.n_features, mc.dgcl.override_edges);
    dgcl::DgclDiagnostics diag;
    for (std::size_t s = 1; s <= mc.dgcl.snapshots; ++s)
        diag.graphs.push_back(dgcl::build_snapshot_graph(w.values, w.n_features, w.length, s,
                                                         mc.dgcl.snapshots, budget,
                                                         mc.dgcl.band_width));
    diag.divergences.assign(mc.dgcl.snapshots, std::vector<double>(mc.dgcl.snapshots, 0.0));
    for (std::size_t a = 0; a < mc.dgcl.snapshots; ++a)
        for (std::size_t b = a + 1; b < mc.dgcl.snapshots; ++b)
            diag.divergences[a][b] = diag.divergences[b][a] =
                dgcl::sym_kl(diag.graphs[a].degree_distribution,
                             diag.graphs[b].degree_distribution, mc.dgcl.epsilon);
    diag.pair = dgcl::select_divergent_pair(diag.graphs, mc.dgcl.epsilon);
    dgcl::write_graph_inspection(out_path, w.start, diag);

    manifest::Manifest m = base_manifest("inspect-graph", cfg);
    m.inputs = {{data_dir + "/" + split + ".csv",
                 manifest::file_digest(data_dir + "/" + split + ".csv")}};
    m.outputs = {out_path};
    manifest::write_manifest(out_path + ".manifest.json", m);
    std::cout << "wrote " << out_path << " (pair " << diag.pair.p << "," << diag.pair.q
              << " divergence " << diag.pair.divergence << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anomaly detection for multivariate time series with dynamic graph "
                 "contrastive regularization"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a coupled-sinusoid dataset");
    std::size_t features = 8, length = 4000;
    std::string anomalies;
    std::uint64_t synth_seed = 42;
    std::string synth_out;
    synth->add_option("--features", features, "feature count (>= 4)");
    synth->add_option("--length", length, "total series length; halves into train/test");
    synth->add_option("--anomalies", anomalies,
                      "start:length pairs (absolute indices in the test half), comma separated");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    // shared config-backed verbs
    TrainConfig train_cfg, eval_cfg, sweep_cfg, inspect_cfg;
    ConfigFlags train_flags(train_cfg), eval_flags(eval_cfg), sweep_flags(sweep_cfg),
        inspect_flags(inspect_cfg);

    auto* train = app.add_subcommand("train", "fit a model and write a checkpoint");
    std::string train_data, train_label = "label", train_out = ".";
    train->add_option("--data", train_data, "directory with train.csv/test.csv")->required();
    train->add_option("--label-column", train_label, "label column in test.csv ('' = none)");
    train->add_option("--out", train_out, "output directory");
    train_flags.attach(train);

    auto* score = app.add_subcommand("score", "write the anomaly score trace for the test split");
    std::string score_ckpt, score_data, score_label = "label", score_out = "scores.csv";
    score->add_option("--checkpoint", score_ckpt, "trained checkpoint")->required();
    score->add_option("--data", score_data, "directory with train.csv/test.csv")->required();
    score->add_option("--label-column", score_label, "label column in test.csv ('' = none)");
    score->add_option("--out", score_out, "trace output file");

    auto* eval = app.add_subcommand("eval", "train per seed and report P/R/F1/AUC");
    std::string eval_data, eval_label = "label", eval_ckpt, eval_seeds = "0,1,2,3,42",
                eval_out = ".";
    eval->add_option("--data", eval_data, "directory with train.csv/test.csv")->required();
    eval->add_option("--label-column", eval_label, "label column in test.csv");
    eval->add_option("--checkpoint", eval_ckpt, "evaluate this checkpoint instead of retraining");
    eval->add_option("--seeds", eval_seeds, "comma-separated seeds");
    eval->add_option("--out", eval_out, "output directory");
    eval_flags.attach(eval);

    auto* sweep = app.add_subcommand("sweep", "train/evaluate across contrastive weights");
    std::string sweep_data, sweep_label = "label", sweep_lambdas = "-1.0:1.0:0.1",
                sweep_out = "sweep.csv";
    sweep->add_option("--data", sweep_data, "directory with train.csv/test.csv")->required();
    sweep->add_option("--label-column", sweep_label, "label column in test.csv");
    sweep->add_option("--lambdas", sweep_lambdas, "lo:hi:step range or comma list");
    sweep->add_option("--out", sweep_out, "table output file");
    sweep_flags.attach(sweep);

    auto* inspect = app.add_subcommand("inspect-graph", "export snapshot graphs for one window");
    std::string ins_data, ins_label = "label", ins_split = "test", ins_out = "graphs.csv";
    std::size_t ins_window = 0;
    inspect->add_option("--data", ins_data, "directory with train.csv/test.csv")->required();
    inspect->add_option("--label-column", ins_label, "label column in test.csv ('' = none)");
    inspect->add_option("--window-index", ins_window, "which window to export");
    inspect->add_option("--split", ins_split, "train or test")->check(CLI::IsMember({"train", "test"}));
    inspect->add_option("--out", ins_out, "output file");
    inspect_flags.attach(inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) return cmd_synth(features, length, anomalies, synth_seed, synth_out);
        if (*train) {
            train_flags.finalize(train);
            return cmd_train(train_data, train_label, train_cfg, train_out);
        }
        if (*score) return cmd_score(score_ckpt, score_data, score_label, score_out);
        if (*eval) {
            eval_flags.finalize(eval);
            return cmd_eval(eval_data, eval_label, eval_ckpt, eval_seeds, eval_cfg, eval_out);
        }
        if (*sweep) {
            sweep_flags.finalize(sweep);
            return cmd_sweep(sweep_data, sweep_label, sweep_lambdas, sweep_cfg, sweep_out);
        }
        if (*inspect) {
            inspect_flags.finalize(inspect);
            return cmd_inspect_graph(ins_data, ins_label, ins_window, ins_split, inspect_cfg,
                                     ins_out);
        }
    } catch (const training::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const data::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
