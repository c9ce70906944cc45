#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "helpers.hpp"
#include "msq/directions.hpp"
#include "msq/errors.hpp"
#include "msq/esd.hpp"
#include "msq/quantile.hpp"

using namespace msq;

namespace {

DirectionSet canonical_set(int m) {
    DirectionSet d;
    d.m = m;
    for (int k = 0; k < m; ++k) {
        Vector e = Vector::Zero(m);
        e(k) = 1.0;
        d.vectors.push_back(e);
        d.informs.push_back({});
        d.pairs.emplace_back(-1, -1);
    }
    return d;
}

double check_objective(const std::vector<double>& z, double tau, double q) {
    double s = 0.0;
    for (double v : z) {
        const double r = v - q;
        s += r * (tau - (r < 0.0 ? 1.0 : 0.0));
    }
    return s;
}

// Interval of grid points (step h) within [lo, hi] attaining the minimum of
// the check loss, up to rounding in the summation.
std::pair<double, double> grid_argmin(const std::vector<double>& z, double tau, double lo, double hi, double h) {
    const auto count = static_cast<int>(std::ceil((hi - lo) / h));
    std::vector<double> v(static_cast<std::size_t>(count + 1));
    for (int i = 0; i <= count; ++i) v[static_cast<std::size_t>(i)] = check_objective(z, tau, lo + i * h);
    const double best = *std::min_element(v.begin(), v.end());
    const double tol = 1e-12 * (1.0 + std::abs(best));
    int first = -1, last = -1;
    for (int i = 0; i <= count; ++i)
        if (v[static_cast<std::size_t>(i)] <= best + tol) {
            if (first < 0) first = i;
            last = i;
        }
    return {lo + first * h, lo + last * h};
}

const boost::math::normal_distribution<> stdnorm;

}  // namespace

TEST_SUITE("quantile") {
    TEST_CASE("interpolation rule examples") {
        std::vector<double> s(100);
        std::iota(s.begin(), s.end(), 1.0);
        CHECK(empirical_quantile(s, 0.5) == 50.5);
        const std::vector<double> one{7.0};
        for (double tau : {0.01, 0.3, 0.99}) CHECK(empirical_quantile(one, tau) == 7.0);
        const std::vector<double> four{1, 2, 3, 4};
        CHECK(empirical_quantile(four, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
        CHECK_THROWS_AS(empirical_quantile(std::vector<double>{}, 0.5), DomainError);
    }

    TEST_CASE("partial selection agrees with a full sort") {
        RngStream r(31, 0);
        std::vector<double> x(1001);
        for (double& v : x) v = r.normal();
        const std::vector<double> taus{0.05, 0.25, 0.5, 0.75, 0.95};
        std::vector<double> buf = x, out(taus.size());
        quantiles_inplace(buf, taus, out);
        for (std::size_t t = 0; t < taus.size(); ++t) CHECK(out[t] == testutil::sorted_quantile(x, taus[t]));
    }

    TEST_CASE("check loss") {
        CHECK(check_loss(2.0, 0.3) == doctest::Approx(0.6));
        CHECK(check_loss(-2.0, 0.3) == doctest::Approx(1.4));
        CHECK(check_loss(0.0, 0.3) == 0.0);
    }

    TEST_CASE("canonical projection equals the column quantile exactly") {
        RngStream r(32, 0);
        EsdParams p{1.6, Vector::Zero(3), Matrix::Identity(3, 3)};
        const Matrix y = sample_esd(p, 500, r);
        for (int k = 0; k < 3; ++k) {
            Vector e = Vector::Zero(3);
            e(k) = 1.0;
            const auto col = testutil::column(y, k);
            for (double tau : {0.05, 0.37, 0.5, 0.95}) CHECK(projectional_quantile(y, e, tau) == empirical_quantile(col, tau));
        }
    }

    TEST_CASE("non-unit direction is rejected") {
        Matrix y = Matrix::Ones(10, 2);
        Vector u(2);
        u << 1.0, 1.0;
        CHECK_THROWS_AS(projectional_quantile(y, u, 0.5), DomainError);
    }

    TEST_CASE("median of symmetric data recovers the projected center") {
        Vector xi(2);
        xi << 1.0, -2.0;
        EsdParams p{1.5, xi, Matrix::Identity(2, 2)};
        RngStream r(33, 0);
        const Matrix y = sample_esd(p, 100000, r);
        Vector u(2);
        u << 0.6, 0.8;
        CHECK(std::abs(projectional_quantile(y, u, 0.5) - u.dot(xi)) < 0.02);
    }

    TEST_CASE("check-loss grid oracle at the estimator's levels, n = 200") {
        RngStream r(34, 0);
        EsdParams p{1.8, Vector::Zero(2), Matrix(2, 2)};
        p.omega << 1.0, 0.4, 0.4, 2.0;
        const Matrix y = sample_esd(p, 200, r);
        Vector u(2);
        u << std::cos(0.7), std::sin(0.7);
        const auto z = project(y, u);
        for (double tau : TauGrid::standard().levels) {
            const double q = projectional_quantile(y, u, tau);
            const auto [lo, hi] = grid_argmin(z, tau, q - 0.5, q + 0.5, 1e-4);
            INFO("tau=" << tau << " q=" << q << " argmin=[" << lo << "," << hi << "]");
            const double dist = q < lo ? lo - q : (q > hi ? q - hi : 0.0);
            CHECK(dist <= 1e-3);
        }
    }

    TEST_CASE("for any level the value lies between the two order statistics bracketing the argmin") {
        RngStream r(35, 0);
        std::vector<double> z(200);
        for (double& v : z) v = r.normal();
        std::vector<double> s = z;
        std::sort(s.begin(), s.end());
        for (int i = 0; i < 50; ++i) {
            const double tau = 0.01 + 0.98 * r.uniform();
            const double q = empirical_quantile(z, tau);
            // Minimizers of the check loss: s[ceil(n tau) - 1] (plus s[n tau]
            // when n tau is an integer). Linear interpolation stays within one
            // spacing of that set.
            const double nt = 200.0 * tau;
            const auto k = static_cast<std::size_t>(std::ceil(nt)) - 1;
            const double lo = s[k > 0 ? k - 1 : 0], hi = s[std::min<std::size_t>(k + 1, 199)];
            CHECK(q >= lo);
            CHECK(q <= hi);
        }
    }

    TEST_CASE("standard normal statistics") {
        RngStream r(36, 0);
        Matrix y(1000000, 1);
        for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, 0) = r.normal();
        const auto phi = phi_stats(y, canonical_set(1), TauGrid::standard());
        REQUIRE(phi.size() == 3);
        const double z95 = boost::math::quantile(stdnorm, 0.95), z75 = boost::math::quantile(stdnorm, 0.75);
        CHECK(std::abs(phi.values(0) / (z95 / z75) - 1.0) < 0.01);
        CHECK(z95 / z75 == doctest::Approx(2.439).epsilon(1e-3));
        CHECK(std::abs(phi.values(1)) < 0.01);
        CHECK(std::abs(phi.values(2) / (2.0 * z75) - 1.0) < 0.01);
    }

    TEST_CASE("affine equivariance of the statistics") {
        RngStream r(37, 0);
        EsdParams p{1.7, Vector::Zero(2), Matrix::Identity(2, 2)};
        p.omega(0, 1) = p.omega(1, 0) = 0.3;
        const Matrix y = sample_esd(p, 3000, r);
        DirectionSet dirs = build_direction_set(p);
        const auto base = phi_stats(y, dirs, TauGrid::standard());
        Vector a(2);
        a << 1.5, -0.5;
        const double c = 2.5;
        Matrix y2 = (c * y).rowwise() + a.transpose();
        const auto moved = phi_stats(y2, dirs, TauGrid::standard());
        for (std::size_t b = 0; b < base.size(); ++b) {
            const auto i = static_cast<Eigen::Index>(b);
            const auto& u = dirs.vectors[static_cast<std::size_t>(base.layout[b].direction)];
            double expect = 0.0;
            switch (base.layout[b].kind) {
                case PhiKind::kurtosis: expect = base.values(i); break;
                case PhiKind::median: expect = u.dot(a) + c * base.values(i); break;
                case PhiKind::iqr: expect = c * base.values(i); break;
            }
            CHECK(std::abs(moved.values(i) - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
        }
    }

    TEST_CASE("statistic layout: three per canonical direction, two per pair") {
        EsdParams p{1.7, Vector::Zero(3), Matrix::Identity(3, 3)};
        const auto dirs = build_direction_set(p);
        const auto layout = phi_layout(dirs);
        CHECK(layout.size() == 3 * 3 + 2 * 3);
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            const auto n = std::count_if(layout.begin(), layout.end(),
                                         [&](const PhiDescriptor& d) { return d.direction == static_cast<int>(k); });
            CHECK(n == (dirs.is_canonical(k) ? 3 : 2));
        }
        CHECK(layout[0] == PhiDescriptor{0, PhiKind::kurtosis});
        CHECK(layout[1] == PhiDescriptor{0, PhiKind::median});
        CHECK(layout[2] == PhiDescriptor{0, PhiKind::iqr});
    }

    TEST_CASE("sparsity examples") {
        RngStream r(38, 0);
        std::vector<double> g(1000000), u(1000000), e(1000000);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = r.normal();
            u[i] = r.uniform();
            e[i] = r.exponential();
        }
        CHECK(std::abs(sparsity_at(g, 0.5) / boost::math::pdf(stdnorm, 0.0) - 1.0) < 0.03);
        CHECK(boost::math::pdf(stdnorm, 0.0) == doctest::Approx(0.3989).epsilon(1e-4));
        CHECK(std::abs(sparsity_at(u, 0.3) - 1.0) < 0.03);
        CHECK(std::abs(sparsity_at(e, 0.5) - 0.5) < 0.03 * 0.5);
    }
}

TEST_SUITE("eta") {
    TEST_CASE("single direction entries for the standard normal") {
        EsdParams p{2.0, Vector::Zero(1), Matrix::Identity(1, 1)};
        RngStream r(41, 0);
        const auto taus = TauGrid::standard();
        const auto eta = eta_matrix(p, canonical_set(1), taus, 1000000, r);
        const auto s = taus.size();
        const auto i50 = static_cast<Eigen::Index>(taus.index_of(0.5));
        const auto i25 = static_cast<Eigen::Index>(taus.index_of(0.25));
        const auto i75 = static_cast<Eigen::Index>(taus.index_of(0.75));
        REQUIRE(eta.entries.rows() == static_cast<Eigen::Index>(s));
        const double f0 = boost::math::pdf(stdnorm, 0.0);
        const double oracle_med = 0.25 / (f0 * f0);
        CHECK(oracle_med == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-12));
        CHECK(std::abs(eta.entries(i50, i50) / oracle_med - 1.0) < 0.02);
        const double f25 = boost::math::pdf(stdnorm, boost::math::quantile(stdnorm, 0.25));
        const double oracle_cross = (0.25 - 0.1875) / (f25 * f25);
        CHECK(oracle_cross == doctest::Approx(0.6190).epsilon(1e-3));
        CHECK(std::abs(eta.entries(i25, i75) / oracle_cross - 1.0) < 0.03);
    }

    TEST_CASE("orthogonal directions on an independent model") {
        EsdParams p{2.0, Vector::Zero(2), Matrix::Identity(2, 2)};
        p.omega(1, 1) = 3.0;
        RngStream r(42, 0);
        const auto taus = TauGrid::standard();
        const std::size_t N = 1000000;
        const auto eta = eta_matrix(p, canonical_set(2), taus, N, r);
        const auto s = taus.size();
        for (std::size_t t = 0; t < s; ++t) {
            const double tau = taus.levels[t];
            // MC standard error of the joint CDF estimate divided by the
            // product of the (analytic) densities.
            const double f1 = boost::math::pdf(stdnorm, boost::math::quantile(stdnorm, tau));
            const double f2 = f1 / std::sqrt(3.0);
            const double se = std::sqrt(tau * tau * (1.0 - tau * tau) / static_cast<double>(N)) / (f1 * f2);
            INFO("tau=" << tau);
            CHECK(std::abs(eta.entries(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s + t))) < 3.0 * se);
        }
    }

    TEST_CASE("symmetric with positive diagonal") {
        EsdParams p{1.6, Vector::Zero(3), Matrix::Identity(3, 3)};
        p.omega(0, 2) = p.omega(2, 0) = -0.4;
        RngStream r(43, 0);
        const auto dirs = build_direction_set(p);
        const auto eta = eta_matrix(p, dirs, TauGrid::standard(), 200000, r);
        CHECK((eta.entries - eta.entries.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(eta.entries.diagonal().minCoeff() > 0.0);
    }

    TEST_CASE("positive dependence raises the same-level cross entries") {
        EsdParams p{2.0, Vector::Zero(2), Matrix::Identity(2, 2)};
        p.omega(0, 1) = p.omega(1, 0) = 0.5;
        RngStream r(44, 0);
        const auto taus = TauGrid::standard();
        const auto eta = eta_matrix(p, canonical_set(2), taus, 400000, r);
        const auto s = taus.size();
        for (std::size_t t = 0; t < s; ++t) CHECK(eta.entries(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s + t)) >= 0.0);
    }

    TEST_CASE("identity statistic map returns eta") {
        RngStream r(45, 0);
        const Matrix e = testutil::random_pd(4, r);
        CHECK((omega_phi(e, Matrix::Identity(4, 4)) - e).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("single IQR statistic has the hand-expanded variance") {
        RngStream r(46, 0);
        const Matrix e = testutil::random_pd(5, r);
        Matrix j = Matrix::Zero(1, 5);
        j(0, 1) = -1.0;
        j(0, 3) = 1.0;
        const double expect = e(3, 3) + e(1, 1) - 2.0 * e(1, 3);
        CHECK(omega_phi(e, j)(0, 0) == doctest::Approx(expect).epsilon(1e-13));
    }

    TEST_CASE("analytic statistic Jacobian matches finite differences") {
        EsdParams p{1.7, Vector::Zero(2), Matrix::Identity(2, 2)};
        p.omega(0, 1) = p.omega(1, 0) = 0.4;
        const auto dirs = build_direction_set(p);
        const auto taus = TauGrid::standard();
        RngStream r(47, 0);
        const Matrix y = sample_esd(p, 5000, r);
        Matrix q(static_cast<Eigen::Index>(dirs.size()), static_cast<Eigen::Index>(taus.size()));
        for (std::size_t k = 0; k < dirs.size(); ++k)
            for (std::size_t t = 0; t < taus.size(); ++t)
                q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) =
                    projectional_quantile(y, dirs.vectors[k], taus.levels[t]);
        const Matrix jac = dphi_dq(q, dirs, taus);
        const double h = 1e-5;
        for (Eigen::Index k = 0; k < q.rows(); ++k)
            for (Eigen::Index t = 0; t < q.cols(); ++t) {
                Matrix qp = q, qm = q;
                qp(k, t) += h;
                qm(k, t) -= h;
                const Vector fd =
                    (phi_from_quantiles(qp, dirs, taus).values - phi_from_quantiles(qm, dirs, taus).values) / (2 * h);
                const Vector an = jac.col(k * q.cols() + t);
                for (Eigen::Index b = 0; b < fd.size(); ++b)
                    CHECK(std::abs(fd(b) - an(b)) <= 1e-4 * std::max(1.0, std::abs(an(b))));
            }
    }
}
