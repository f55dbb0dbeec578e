#pragma once

#include <span>

namespace bcrn {

struct Estimate {
    double mean = 0.0;
    double stderr_mean = 0.0;
};

/// Sample mean and i.i.d. standard error (n-1 denominator; 0 for n < 2).
Estimate mean_stderr(std::span<const double> values);

/// Standard error from non-overlapping batch means, for autocorrelated
/// series such as per-frame rewards along one trajectory. Falls back to the
/// i.i.d. formula when there are fewer than 10 values per batch.
Estimate batch_means(std::span<const double> values, int batches = 32);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant or there are fewer than two points.
double spearman(std::span<const double> x, std::span<const double> y);

} // namespace bcrn
