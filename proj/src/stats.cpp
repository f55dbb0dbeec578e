#include "bcrn/stats.hpp"

#include "bcrn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace bcrn {

Estimate mean_stderr(std::span<const double> values)
{
    Estimate e;
    const auto n = values.size();
    if (n == 0) {
        return e;
    }
    e.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    if (n < 2) {
        return e;
    }
    double ss = 0.0;
    for (double v : values) {
        ss += (v - e.mean) * (v - e.mean);
    }
    e.stderr_mean = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    return e;
}

Estimate batch_means(std::span<const double> values, int batches)
{
    const auto n = values.size();
    if (batches < 2 || n < static_cast<std::size_t>(batches) * 10) {
        return mean_stderr(values);
    }
    const std::size_t per = n / static_cast<std::size_t>(batches);
    std::vector<double> means(static_cast<std::size_t>(batches));
    for (std::size_t k = 0; k < means.size(); ++k) {
        const auto first = values.begin() + static_cast<std::ptrdiff_t>(k * per);
        means[k] = std::accumulate(first, first + static_cast<std::ptrdiff_t>(per), 0.0) / static_cast<double>(per);
    }
    Estimate e = mean_stderr(means);
    // Report the mean of all values, including any remainder past the last batch.
    e.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    return e;
}

namespace {

std::vector<double> ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw ContractViolation("spearman: length mismatch");
    }
    if (x.size() < 2) {
        return 0.0;
    }
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace bcrn
