#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"

namespace medtax::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty())
        throw ValidationError("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Population standard deviation (divides by N).
inline double population_sd(std::span<const double> xs) {
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

/// Sample variance (divides by N-1); zero for a single observation.
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2)
        return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs)
        ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

/// Median via the midpoint of the two middle order statistics for even sizes.
inline double median(std::vector<double> xs) {
    if (xs.empty())
        throw ValidationError("median of empty sample");
    std::sort(xs.begin(), xs.end());
    const auto n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Linear-interpolation quantile of a sorted sample (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty())
        throw ValidationError("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// True when |x - centre| exceeds k*sd. Values within a relative 1e-12 of the band edge
/// count as on the edge, so an exact k-sigma deviation is never flagged by rounding noise.
inline bool beyond_band(double x, double centre, double sd, double k) {
    const double dev = std::abs(x - centre);
    const double band = k * sd;
    return dev - band > 1e-12 * std::max(1.0, band);
}

} // namespace medtax::stats
