#pragma once

#include <string>
#include <vector>

#include "contrastad/data.hpp"
#include "contrastad/model.hpp"
#include "contrastad/training.hpp"

namespace contrastad::metrics {

struct ScoreTrace {
    std::vector<double> scores;      // one per timestep, >= 0
    std::vector<double> normalized;  // min-max rescaled copy for export
};

// Residual scoring: each window contributes its forecast RMSE at the target
// step and beta times its reconstruction RMSE at the last window column; a
// timestep's score is the mean of the contributions attributed to it.
// Uncovered timesteps take the nearest earlier covered score (the leading run
// takes the first covered one).
ScoreTrace score_series(const model::Model& m, const data::Matrix& test_normalized, double beta,
                        std::size_t stride = 1);

std::vector<double> normalize_scores(const std::vector<double>& scores);

// exact 1-d two-cluster k-means via the sorted split scan; threshold is the
// midpoint of the two cluster means
double select_threshold(const std::vector<double>& validation_scores);

std::vector<int> point_adjust(const std::vector<int>& raw_predictions,
                              const std::vector<int>& labels);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Prf prf1(const std::vector<int>& predictions, const std::vector<int>& labels);

// Mann-Whitney form: fraction of (positive, negative) pairs ranked correctly,
// ties at half weight
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalReport {
    double threshold = 0.0;
    std::vector<int> raw_predictions;
    std::vector<int> adjusted_predictions;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
};

// scores the test series, picks the threshold from validation scores (tail of
// the normalized train split), point-adjusts, computes P/R/F1; AUC uses the
// raw scores against the labels
EvalReport evaluate_run(const model::Model& m, const data::Dataset& normalized,
                        const training::TrainConfig& cfg);

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    std::vector<double> values;
    double ci_low(std::size_t n) const;
    double ci_high(std::size_t n) const;
};

struct AggregateReport {
    MetricAggregate precision, recall, f1, auc;
    std::size_t n_runs = 0;
};

AggregateReport aggregate_runs(const std::vector<EvalReport>& reports);

// non-overlap of the two 95% confidence intervals
bool ci_disjoint(const MetricAggregate& a, std::size_t n_a, const MetricAggregate& b,
                 std::size_t n_b);

// two or three column trace export: timestep, normalized score[, label]
void emit_plot_data(const std::vector<double>& scores, const std::vector<int>* labels,
                    const std::string& path);

}  // namespace contrastad::metrics
