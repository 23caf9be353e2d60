#pragma once

#include <utility>
#include <vector>

#include "contrastad/graph.hpp"

namespace contrastad::diff {

struct GradCheckEntry {
    NodeId node = 0;
    std::string label;
    std::size_t index = 0;
    double analytic = 0.0;
    double reference = 0.0;  // central difference, or 0 for mask-frozen entries
    bool masked = false;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> failures;
    std::vector<std::pair<std::string, double>> per_parameter_max;  // label -> max |analytic - ref|
    double max_deviation = 0.0;
    std::size_t entries_checked = 0;
    bool ok() const { return failures.empty(); }
};

// Compares the analytic gradient of the (scalar) final node against central
// finite differences (f(x+h) - f(x-h)) / 2h for every requires_grad leaf
// entry. Entries listed in expect_zero_grad sit behind a frozen FFT bin mask:
// their analytic gradient must be exactly zero and no difference is taken.
GradCheckReport check_gradients(
    Graph& graph, double step, double rtol, double atol,
    const std::vector<std::pair<NodeId, std::size_t>>& expect_zero_grad = {});

}  // namespace contrastad::diff
