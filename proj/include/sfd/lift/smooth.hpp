#pragma once

#include <stdexcept>
#include <vector>

#include "sfd/scene/geometry.hpp"

namespace sfd::lift {

// Centered moving average. Near the ends the window shrinks symmetrically so
// it stays centered. Samples with visible[k] == false are left out of every
// average; a sample whose whole window is invisible keeps its own value.
template <class V>
std::vector<V> smooth(const std::vector<V>& series, int window, const std::vector<bool>& visible = {})
{
    if (series.empty()) {
        throw std::invalid_argument("smooth: empty series");
    }
    const int n = static_cast<int>(series.size());
    if (window < 1 || window % 2 == 0 || window > n) {
        throw std::invalid_argument("smooth: window must be odd and within 1..length");
    }
    if (!visible.empty() && static_cast<int>(visible.size()) != n) {
        throw std::invalid_argument("smooth: visibility length mismatch");
    }
    auto vis = [&](int k) { return visible.empty() || visible[static_cast<std::size_t>(k)]; };
    const int half = window / 2;
    std::vector<V> out(series.size());
    for (int k = 0; k < n; ++k) {
        const int h = std::min({half, k, n - 1 - k});
        V acc = series[static_cast<std::size_t>(k)] * 0.0;
        int count = 0;
        for (int m = k - h; m <= k + h; ++m) {
            if (vis(m)) {
                acc += series[static_cast<std::size_t>(m)];
                ++count;
            }
        }
        out[static_cast<std::size_t>(k)] = count > 0 ? V(acc / static_cast<double>(count)) : series[static_cast<std::size_t>(k)];
    }
    return out;
}

} // namespace sfd::lift
