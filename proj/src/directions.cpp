#include "msq/directions.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "msq/errors.hpp"

namespace msq {

std::string ParamTag::str() const {
    switch (kind) {
        case ParamKind::alpha: return "alpha";
        case ParamKind::xi: return "xi_" + std::to_string(i + 1);
        case ParamKind::omega_diag: return "omega_" + std::to_string(i + 1) + std::to_string(i + 1);
        case ParamKind::omega_off: return "omega_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
    }
    return "?";
}

namespace {

Vector unit_from_angle(double theta) {
    Vector u(2);
    u << std::cos(theta), std::sin(theta);
    if (u(0) < 0.0 || (u(0) == 0.0 && u(1) < 0.0)) u = -u;
    return u;
}

}  // namespace

Vector optimal_pair_direction(double a, double b, double c) {
    if (!(a > 0.0) || !(b > 0.0) || !(a * b - c * c > 0.0))
        throw DomainError("pair scale submatrix is not positive definite");
    Vector u(2);
    if (c == 0.0) {
        u << (a >= b ? 1.0 : 0.0), (a >= b ? 0.0 : 1.0);
        return u;
    }
    // u'Omega u along (cos t, sin t) and its derivative.
    auto f = [&](double t) {
        const double ct = std::cos(t), st = std::sin(t);
        return a * ct * ct + b * st * st + 2.0 * c * st * ct;
    };
    auto df = [&](double t) { return (b - a) * std::sin(2.0 * t) + 2.0 * c * std::cos(2.0 * t); };

    // Coarse scan over a half circle brackets the single maximum.
    constexpr int kGrid = 256;
    const double step = std::numbers::pi / kGrid;
    double best_t = 0.0, best_f = f(0.0);
    for (int g = 1; g < kGrid; ++g) {
        const double t = g * step;
        const double v = f(t);
        if (v > best_f) best_f = v, best_t = t;
    }
    double lo = best_t - step, hi = best_t + step;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > 1e-10) {
        if (f1 < f2) {
            lo = x1, x1 = x2, f1 = f2;
            x2 = lo + inv_phi * (hi - lo), f2 = f(x2);
        } else {
            hi = x2, x2 = x1, f2 = f1;
            x1 = hi - inv_phi * (hi - lo), f1 = f(x1);
        }
    }
    double t = 0.5 * (lo + hi);
    // The objective is flat at the optimum, so value comparisons stall near
    // sqrt(machine epsilon); Newton steps on the derivative finish the job.
    for (int it = 0; it < 3; ++it) {
        const double d2 = 2.0 * (b - a) * std::cos(2.0 * t) - 4.0 * c * std::sin(2.0 * t);
        if (d2 >= 0.0) break;
        t -= df(t) / d2;
    }
    return unit_from_angle(t);
}

Vector pair_direction_closed_form(double a, double b, double c) {
    if (c == 0.0) throw DomainError("closed form is undefined for a zero off-diagonal");
    const double r = (a - b) / c;
    const double sgn = c > 0.0 ? 1.0 : -1.0;
    const double ratio = (-r + sgn * std::sqrt(r * r + 4.0)) / 2.0;
    Vector u(2);
    u << 1.0, ratio;
    return u / u.norm();
}

DirectionSet build_direction_set(const EsdParams& init) {
    init.validate();
    DirectionSet d;
    d.m = init.dim();
    for (int k = 0; k < d.m; ++k) {
        d.vectors.push_back(Vector::Unit(d.m, k));
        d.informs.push_back({{ParamKind::alpha}, {ParamKind::xi, k}, {ParamKind::omega_diag, k, k}});
        d.pairs.emplace_back(-1, -1);
    }
    for (int i = 0; i < d.m; ++i) {
        for (int j = i + 1; j < d.m; ++j) {
            // Pair directions are taken on the standardized pair, where the
            // maximizer is the bisector (anti-bisector for negative correlation),
            // and mapped back to data units. An uncorrelated start also gets the
            // bisector since a canonical vector carries no information on omega_ij.
            const double si = std::sqrt(init.omega(i, i));
            const double sj = std::sqrt(init.omega(j, j));
            Vector u = Vector::Zero(d.m);
            u(i) = 1.0 / si;
            u(j) = (init.omega(i, j) < 0.0 ? -1.0 : 1.0) / sj;
            u /= u.norm();
            d.vectors.push_back(u);
            d.informs.push_back({{ParamKind::omega_off, i, j}});
            d.pairs.emplace_back(i, j);
        }
    }
    return d;
}

}  // namespace msq
