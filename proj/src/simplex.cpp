#include "msq/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace msq {

SimplexResult nelder_mead(const std::function<double(const Vector&)>& fn, const Vector& x0, const Vector& step,
                          const SimplexOptions& options) {
    const auto n = x0.size();
    const double dn = static_cast<double>(n);
    const double rho = 1.0;
    const double chi = n > 1 ? 1.0 + 2.0 / dn : 2.0;
    const double gamma = n > 1 ? 0.75 - 1.0 / (2.0 * dn) : 0.5;
    const double sigma = n > 1 ? 1.0 - 1.0 / dn : 0.5;

    SimplexResult res;
    auto eval = [&](const Vector& x) {
        ++res.evals;
        const double v = fn(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> vals(static_cast<std::size_t>(n + 1));
    vals[0] = eval(x0);
    for (Eigen::Index i = 0; i < n; ++i) {
        pts[static_cast<std::size_t>(i + 1)](i) += step(i) != 0.0 ? step(i) : 0.00025;
        vals[static_cast<std::size_t>(i + 1)] = eval(pts[static_cast<std::size_t>(i + 1)]);
    }
    std::vector<std::size_t> idx(pts.size());

    while (true) {
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];

        double diam = 0.0;
        for (std::size_t k = 1; k < idx.size(); ++k)
            diam = std::max(diam, (pts[idx[k]] - pts[best]).cwiseAbs().maxCoeff());
        const double spread = vals[worst] - vals[best];
        if (diam <= options.x_tol && spread <= options.f_tol * (1.0 + std::abs(vals[best]))) {
            res.converged = true;
            break;
        }
        if (res.evals >= options.max_evals) break;

        Vector centroid = Vector::Zero(n);
        for (std::size_t k = 0; k + 1 < idx.size(); ++k) centroid += pts[idx[k]];
        centroid /= dn;

        const Vector xr = centroid + rho * (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < vals[best]) {
            const Vector xe = centroid + chi * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) pts[worst] = xe, vals[worst] = fe;
            else pts[worst] = xr, vals[worst] = fr;
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr, vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Vector xc = outside ? Vector(centroid + gamma * (xr - centroid))
                                  : Vector(centroid - gamma * (centroid - pts[worst]));
        const double fc = eval(xc);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = xc, vals[worst] = fc;
            continue;
        }
        for (std::size_t k = 1; k < idx.size(); ++k) {
            pts[idx[k]] = pts[best] + sigma * (pts[idx[k]] - pts[best]);
            vals[idx[k]] = eval(pts[idx[k]]);
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    res.f = *it;
    res.x = pts[static_cast<std::size_t>(it - vals.begin())];
    return res;
}

}  // namespace msq
