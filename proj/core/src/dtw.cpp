#include "contrastad/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace contrastad::dgcl {

double dtw_distance(const std::vector<double>& a, const std::vector<double>& b,
                    std::optional<std::size_t> band) {
    if (a.empty() || b.empty()) throw std::invalid_argument("dtw_distance: empty input");
    if (a.size() != b.size())
        throw std::invalid_argument("dtw_distance: lengths " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ");

    const std::size_t n = a.size();
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t radius = band.value_or(n);  // no band: radius covers everything

    // two-row DP over the cumulative cost matrix
    std::vector<double> prev(n, inf), curr(n, inf);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i > radius ? i - radius : 0;
        std::size_t hi = std::min(n - 1, i + radius);
        std::fill(curr.begin(), curr.end(), inf);
        for (std::size_t j = lo; j <= hi; ++j) {
            double cost = std::abs(a[i] - b[j]);
            double best;
            if (i == 0 && j == 0) {
                best = 0.0;
            } else {
                best = inf;
                if (i > 0) best = std::min(best, prev[j]);
                if (j > 0) best = std::min(best, curr[j - 1]);
                if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
            }
            curr[j] = cost + best;
        }
        std::swap(prev, curr);
    }
    double result = prev[n - 1];
    if (!std::isfinite(result))
        throw std::runtime_error("dtw_distance: no admissible path within band");
    return result;
}

}  // namespace contrastad::dgcl
