#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "msq/linalg.hpp"
#include "msq/rng.hpp"

namespace testutil {

inline msq::Matrix random_pd(int m, msq::RngStream& rng) {
    msq::Matrix a(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a(i, j) = rng.normal();
    return a * a.transpose() + 0.5 * msq::Matrix::Identity(m, m);
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Order statistic quantile with the same interpolation as the library,
// written independently for use as an oracle.
inline double sorted_quantile(std::vector<double> v, double tau) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * tau;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::vector<double> column(const msq::Matrix& x, int k) {
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = x(i, k);
    return out;
}

}  // namespace testutil
