#include "contrastad/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "contrastad/rng.hpp"

namespace contrastad::data {

namespace {
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
constexpr double kNoiseSigma = 0.03;
// heavy-tailed sensor noise: rare single-channel rail glitches (the reading
// briefly pegs near a signal extreme), matching telemetry where isolated
// spikes are normal; keeps the min-max range close to the clean signal's
constexpr double kGlitchRate = 0.015;
constexpr double kGlitchLevel = 1.2;
}  // namespace

Dataset generate_synthetic(std::size_t n_features, std::size_t length,
                           const std::vector<AnomalySegment>& anomaly_segments,
                           std::uint64_t seed) {
    if (n_features < 4) throw DataError("generate_synthetic: need at least 4 features");
    if (length < 8) throw DataError("generate_synthetic: series too short");

    const std::size_t t_train = length / 2;
    const std::size_t t_test = length - t_train;
    const std::size_t n_pairs = n_features / 2;

    // validate segments: inside the test half, non-overlapping
    std::vector<AnomalySegment> segs = anomaly_segments;
    std::sort(segs.begin(), segs.end(),
              [](const AnomalySegment& a, const AnomalySegment& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const AnomalySegment& s = segs[i];
        if (s.length == 0) throw DataError("generate_synthetic: empty anomaly segment");
        if (s.start < t_train)
            throw DataError("generate_synthetic: anomaly segment at " + std::to_string(s.start) +
                            " lies in the train half (test starts at " + std::to_string(t_train) + ")");
        if (s.start + s.length > length)
            throw DataError("generate_synthetic: anomaly segment at " + std::to_string(s.start) +
                            " extends past the series end");
        if (i > 0 && segs[i - 1].start + segs[i - 1].length > s.start)
            throw DataError("generate_synthetic: overlapping anomaly segments");
    }

    Rng rng(seed);
    std::vector<double> period(n_pairs), phase(n_pairs);
    for (std::size_t j = 0; j < n_pairs; ++j) {
        period[j] = rng.uniform(18.0, 42.0);
        phase[j] = rng.uniform(0.0, kTwoPi);
    }
    // odd feature count: the last feature rides its own independent wave
    double odd_period = rng.uniform(18.0, 42.0);
    double odd_phase = rng.uniform(0.0, kTwoPi);

    std::vector<int> labels(t_test, 0);
    std::vector<int> inverted_pair(length, -1);  // designated pair per timestep, -1 = normal
    for (std::size_t i = 0; i < segs.size(); ++i) {
        int pair = static_cast<int>(i % n_pairs);
        for (std::size_t t = segs[i].start; t < segs[i].start + segs[i].length; ++t) {
            inverted_pair[t] = pair;
            labels[t - t_train] = 1;
        }
    }

    Matrix full(length, n_features);
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t j = 0; j < n_pairs; ++j) {
            double base = std::sin(kTwoPi * static_cast<double>(t) / period[j] + phase[j]);
            double lead = base + kNoiseSigma * rng.normal();
            double follow_base = inverted_pair[t] == static_cast<int>(j) ? -base : base;
            double follow = follow_base + kNoiseSigma * rng.normal();
            full.at(t, 2 * j) = lead;
            full.at(t, 2 * j + 1) = follow;
        }
        if (n_features % 2 == 1) {
            double base = std::sin(kTwoPi * static_cast<double>(t) / odd_period + odd_phase);
            full.at(t, n_features - 1) = base + kNoiseSigma * rng.normal();
        }
        if (rng.uniform() < kGlitchRate) {
            std::size_t channel = rng.next_u64() % n_features;
            double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            full.at(t, channel) = sign * (kGlitchLevel + 0.05 * std::abs(rng.normal()));
        }
    }

    Dataset ds;
    for (std::size_t f = 0; f < n_features; ++f) ds.feature_names.push_back("f" + std::to_string(f));
    ds.train = Matrix(t_train, n_features);
    ds.test = Matrix(t_test, n_features);
    std::copy(full.v.begin(), full.v.begin() + static_cast<std::ptrdiff_t>(t_train * n_features),
              ds.train.v.begin());
    std::copy(full.v.begin() + static_cast<std::ptrdiff_t>(t_train * n_features), full.v.end(),
              ds.test.v.begin());
    ds.test_labels = std::move(labels);
    ds.norm_stats = fit_normalizer(ds.train);
    return ds;
}

}  // namespace contrastad::data
