#include "contrastad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace contrastad::metrics {

using data::Matrix;
using data::Window;
using model::Model;

namespace {

struct Coverage {
    std::vector<double> sum;
    std::vector<std::size_t> count;
};

Coverage score_chunk(const Model& m, const std::vector<Window>& windows, std::size_t begin,
                     std::size_t end, double beta, std::size_t rows) {
    std::size_t w = m.cfg.window;
    Coverage cov{std::vector<double>(rows, 0.0), std::vector<std::size_t>(rows, 0)};
    for (std::size_t wi = begin; wi < end; ++wi) {
        const Window& win = windows[wi];
        model::WindowGraph wg = model::build_forward_graph(m, win, false, 0);
        const auto& forecast = wg.graph.value(wg.forecast).values;  // N x 1
        const auto& recon = wg.graph.value(wg.recon).values;        // N x W

        // forecast residual lands on the target step
        double f_err = 0.0;
        for (std::size_t i = 0; i < win.n_features; ++i) {
            double d = forecast[i] - win.forecast_target[i];
            f_err += d * d;
        }
        f_err = std::sqrt(f_err / static_cast<double>(win.n_features));
        cov.sum[win.start + w] += f_err;
        cov.count[win.start + w] += 1;

        // reconstruction residual of the last column lands on its own step
        double r_err = 0.0;
        for (std::size_t i = 0; i < win.n_features; ++i) {
            double d = recon[i * w + (w - 1)] - win.values[i * w + (w - 1)];
            r_err += d * d;
        }
        r_err = std::sqrt(r_err / static_cast<double>(win.n_features));
        cov.sum[win.start + w - 1] += beta * r_err;
        cov.count[win.start + w - 1] += 1;
    }
    return cov;
}

constexpr std::size_t kScoreChunks = 8;  // fixed split keeps the merge order machine-independent

}  // namespace

ScoreTrace score_series(const Model& m, const Matrix& test_normalized, double beta,
                        std::size_t stride) {
    std::size_t w = m.cfg.window;
    std::vector<Window> windows = data::make_windows(test_normalized, w, stride);

    std::vector<double> sum(test_normalized.rows, 0.0);
    std::vector<std::size_t> count(test_normalized.rows, 0);
    std::size_t per_chunk = (windows.size() + kScoreChunks - 1) / kScoreChunks;
    std::vector<std::future<Coverage>> futures;
    for (std::size_t c = 0; c < kScoreChunks; ++c) {
        std::size_t lo = c * per_chunk;
        std::size_t hi = std::min(windows.size(), lo + per_chunk);
        if (lo >= hi) break;
        futures.push_back(std::async(std::launch::async, score_chunk, std::cref(m),
                                     std::cref(windows), lo, hi, beta, test_normalized.rows));
    }
    for (auto& f : futures) {
        Coverage cov = f.get();
        for (std::size_t t = 0; t < sum.size(); ++t) {
            sum[t] += cov.sum[t];
            count[t] += cov.count[t];
        }
    }

    ScoreTrace trace;
    trace.scores.assign(test_normalized.rows, 0.0);
    double carry = 0.0;
    bool have_carry = false;
    // first covered value backfills the leading gap; later gaps carry forward
    for (std::size_t t = 0; t < test_normalized.rows; ++t)
        if (count[t]) {
            carry = sum[t] / static_cast<double>(count[t]);
            have_carry = true;
            break;
        }
    for (std::size_t t = 0; t < test_normalized.rows; ++t) {
        if (count[t]) {
            carry = sum[t] / static_cast<double>(count[t]);
            have_carry = true;
        }
        trace.scores[t] = have_carry ? carry : 0.0;
    }
    trace.normalized = normalize_scores(trace.scores);
    return trace;
}

std::vector<double> normalize_scores(const std::vector<double>& scores) {
    if (scores.empty()) return {};
    auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
    double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(scores.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - lo) / (hi - lo);
    return out;
}

double select_threshold(const std::vector<double>& validation_scores) {
    if (validation_scores.size() < 4)
        throw std::invalid_argument("select_threshold: need at least 4 scores");
    std::vector<double> s(validation_scores);
    std::sort(s.begin(), s.end());
    std::size_t n = s.size();
    if (s.front() == s.back()) return s.front();  // degenerate: all equal

    // prefix sums make the within-cluster sum of squares O(1) per split
    std::vector<double> ps(n + 1, 0.0), pss(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ps[i + 1] = ps[i] + s[i];
        pss[i + 1] = pss[i] + s[i] * s[i];
    }
    auto wcss = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
        double cnt = static_cast<double>(hi - lo);
        double sum = ps[hi] - ps[lo];
        return (pss[hi] - pss[lo]) - sum * sum / cnt;
    };

    std::size_t best_split = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t split = 1; split < n; ++split) {
        double total = wcss(0, split) + wcss(split, n);
        if (total < best) {
            best = total;
            best_split = split;
        }
    }
    // direct sums for the final means keep the threshold reproducible by a
    // plain left-to-right reference computation
    double sum_low = 0.0, sum_high = 0.0;
    for (std::size_t i = 0; i < best_split; ++i) sum_low += s[i];
    for (std::size_t i = best_split; i < n; ++i) sum_high += s[i];
    double mean_low = sum_low / static_cast<double>(best_split);
    double mean_high = sum_high / static_cast<double>(n - best_split);
    return 0.5 * (mean_low + mean_high);
}

std::vector<int> point_adjust(const std::vector<int>& raw_predictions,
                              const std::vector<int>& labels) {
    if (raw_predictions.size() != labels.size())
        throw std::invalid_argument("point_adjust: length mismatch");
    std::vector<int> adjusted(raw_predictions);
    std::size_t n = labels.size();
    std::size_t t = 0;
    while (t < n) {
        if (labels[t] != 1) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end < n && labels[end] == 1) ++end;
        bool hit = false;
        for (std::size_t k = t; k < end && !hit; ++k) hit = raw_predictions[k] == 1;
        if (hit)
            for (std::size_t k = t; k < end; ++k) adjusted[k] = 1;
        t = end;
    }
    return adjusted;
}

Prf prf1(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("prf1: length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] == 1 && labels[i] == 1) ++tp;
        if (predictions[i] == 1 && labels[i] == 0) ++fp;
        if (predictions[i] == 0 && labels[i] == 1) ++fn;
    }
    Prf out;
    out.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = out.precision + out.recall > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_roc: length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("auc_roc: labels must contain both classes");

    // rank-sum with midranks for ties
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    double p = static_cast<double>(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

EvalReport evaluate_run(const Model& m, const data::Dataset& normalized,
                        const training::TrainConfig& cfg) {
    if (!normalized.test_labels)
        throw std::invalid_argument("evaluate_run: test labels are required");

    auto [train_part, val_part] =
        data::split_train_val(normalized.train, cfg.split_ratio, cfg.window);
    ScoreTrace val_trace = score_series(m, val_part, cfg.beta);
    double threshold = select_threshold(val_trace.scores);

    ScoreTrace test_trace = score_series(m, normalized.test, cfg.beta);
    const std::vector<int>& labels = *normalized.test_labels;

    EvalReport report;
    report.threshold = threshold;
    report.raw_predictions.resize(test_trace.scores.size());
    for (std::size_t t = 0; t < test_trace.scores.size(); ++t)
        report.raw_predictions[t] = test_trace.scores[t] > threshold ? 1 : 0;
    report.adjusted_predictions = point_adjust(report.raw_predictions, labels);
    Prf prf = prf1(report.adjusted_predictions, labels);
    report.precision = prf.precision;
    report.recall = prf.recall;
    report.f1 = prf.f1;
    report.auc = auc_roc(test_trace.scores, labels);  // raw scores, threshold-free
    return report;
}

double MetricAggregate::ci_low(std::size_t n) const {
    return mean - 1.96 * stddev / std::sqrt(static_cast<double>(n));
}
double MetricAggregate::ci_high(std::size_t n) const {
    return mean + 1.96 * stddev / std::sqrt(static_cast<double>(n));
}

namespace {
MetricAggregate aggregate(std::vector<double> values) {
    MetricAggregate agg;
    agg.values = values;
    double n = static_cast<double>(values.size());
    for (double v : values) agg.mean += v;
    agg.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / (n - 1.0));
    }
    return agg;
}
}  // namespace

AggregateReport aggregate_runs(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate_runs: no reports");
    AggregateReport out;
    out.n_runs = reports.size();
    std::vector<double> p, r, f, a;
    for (const EvalReport& rep : reports) {
        p.push_back(rep.precision);
        r.push_back(rep.recall);
        f.push_back(rep.f1);
        a.push_back(rep.auc);
    }
    out.precision = aggregate(std::move(p));
    out.recall = aggregate(std::move(r));
    out.f1 = aggregate(std::move(f));
    out.auc = aggregate(std::move(a));
    return out;
}

bool ci_disjoint(const MetricAggregate& a, std::size_t n_a, const MetricAggregate& b,
                 std::size_t n_b) {
    return a.ci_high(n_a) < b.ci_low(n_b) || b.ci_high(n_b) < a.ci_low(n_a);
}

void emit_plot_data(const std::vector<double>& scores, const std::vector<int>* labels,
                    const std::string& path) {
    if (labels && labels->size() != scores.size())
        throw std::invalid_argument("emit_plot_data: label length mismatch");
    std::ofstream out(path);
    if (!out) throw data::DataError("cannot write file: " + path);
    std::vector<double> normalized = normalize_scores(scores);
    out << "timestep,score" << (labels ? ",label" : "") << "\n";
    for (std::size_t t = 0; t < normalized.size(); ++t) {
        out << t << ',' << normalized[t];
        if (labels) out << ',' << (*labels)[t];
        out << '\n';
    }
    if (!out) throw data::DataError("write failed: " + path);
}

}  // namespace contrastad::metrics
