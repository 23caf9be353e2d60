#pragma once

#include <cstdint>
#include <vector>

#include "contrastad/data.hpp"

namespace contrastad::data {

// [start, start + length) in absolute timestep coordinates; must lie entirely
// inside the test half of the series
struct AnomalySegment {
    std::size_t start = 0;
    std::size_t length = 0;
};

// Pairwise-coupled noisy sinusoids: features (2j, 2j+1) share one latent base
// wave plus independent noise. Inside each anomaly segment the coupling of one
// designated pair is sign-inverted, which preserves per-feature amplitude
// statistics while breaking the cross-feature relation. The first half of the
// series is the (anomaly-free) train split, the second half the labeled test
// split.
Dataset generate_synthetic(std::size_t n_features, std::size_t length,
                           const std::vector<AnomalySegment>& anomaly_segments,
                           std::uint64_t seed);

}  // namespace contrastad::data
