#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace contrastad::dgcl {

// Classic dynamic time warping with absolute-difference local cost and steps
// {(1,0), (0,1), (1,1)}. The optional band restricts the warping path to
// |i - j| <= radius (Sakoe-Chiba); for equal-length inputs the diagonal always
// fits inside any radius >= 0.
double dtw_distance(const std::vector<double>& a, const std::vector<double>& b,
                    std::optional<std::size_t> band = std::nullopt);

}  // namespace contrastad::dgcl
