#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "msq/directions.hpp"
#include "msq/errors.hpp"
#include "msq/esd.hpp"

using namespace msq;

namespace {

double quad(double a, double b, double c, const Vector& u) { return a * u(0) * u(0) + b * u(1) * u(1) + 2 * c * u(0) * u(1); }

}  // namespace

TEST_SUITE("directions") {
    TEST_CASE("equal diagonals give the bisector") {
        const Vector u = optimal_pair_direction(1.3, 1.3, 0.4);
        CHECK(std::abs(u(0) - std::numbers::sqrt2 / 2) < 1e-8);
        CHECK(std::abs(u(1) - std::numbers::sqrt2 / 2) < 1e-8);
    }

    TEST_CASE("zero covariance returns the canonical direction of the larger diagonal") {
        Vector u = optimal_pair_direction(2.0, 1.0, 0.0);
        CHECK(u(0) == 1.0);
        CHECK(u(1) == 0.0);
        u = optimal_pair_direction(1.0, 2.0, 0.0);
        CHECK(u(0) == 0.0);
        CHECK(u(1) == 1.0);
        u = optimal_pair_direction(1.5, 1.5, 0.0);
        CHECK(u(0) == 1.0);
        CHECK(u(1) == 0.0);
    }

    TEST_CASE("maximizer matches a fine angular grid") {
        const double a = 0.5, b = 2.0, c = 0.9;
        const Vector u = optimal_pair_direction(a, b, c);
        const int G = 1000000;
        double best = -1.0, best_t = 0.0;
        for (int g = 0; g < G; ++g) {
            const double t = std::numbers::pi * g / G - std::numbers::pi / 2;
            Vector v(2);
            v << std::cos(t), std::sin(t);
            const double f = quad(a, b, c, v);
            if (f > best) best = f, best_t = t;
        }
        Vector v(2);
        v << std::cos(best_t), std::sin(best_t);
        if (v(0) < 0) v = -v;
        CHECK((u - v).norm() < 1e-5);
        CHECK(u(0) >= 0.0);
        CHECK(std::abs(u.norm() - 1.0) < 1e-14);
        // Cross-check against the Lagrangian closed form.
        CHECK((u - pair_direction_closed_form(a, b, c)).norm() < 1e-8);
    }

    TEST_CASE("maximality over canonical directions and sign consistency") {
        RngStream r(51, 0);
        for (int it = 0; it < 200; ++it) {
            const Matrix s = testutil::random_pd(2, r);
            const double a = s(0, 0), b = s(1, 1), c = s(0, 1);
            const Vector u = optimal_pair_direction(a, b, c);
            CHECK(quad(a, b, c, u) >= std::max(a, b) - 1e-12);
            const Vector w = optimal_pair_direction(a, b, -c);
            if (c != 0.0) {
                CHECK(std::signbit(u(0) * u(1)) != std::signbit(w(0) * w(1)));
                CHECK(std::abs(std::abs(w(1)) - std::abs(u(1))) < 1e-8);
            }
        }
    }

    TEST_CASE("non positive definite pair is rejected") {
        CHECK_THROWS_AS(optimal_pair_direction(1.0, 1.0, 1.5), DomainError);
        CHECK_THROWS_AS(optimal_pair_direction(-1.0, 1.0, 0.0), DomainError);
    }

    TEST_CASE("direction counts") {
        for (int m : {1, 2, 5, 12}) {
            const EsdParams p{1.7, Vector::Zero(m), Matrix::Identity(m, m)};
            const auto d = build_direction_set(p);
            CHECK(d.size() == static_cast<std::size_t>(m + m * (m - 1) / 2));
        }
        const EsdParams p2{1.7, Vector::Zero(2), Matrix::Identity(2, 2)};
        const auto d2 = build_direction_set(p2);
        REQUIRE(d2.size() == 3);
        CHECK(d2.vectors[0] == Vector::Unit(2, 0));
        CHECK(d2.vectors[1] == Vector::Unit(2, 1));
        CHECK_FALSE(d2.is_canonical(2));
    }

    TEST_CASE("pair directions are embedded with zeros elsewhere") {
        RngStream r(52, 0);
        const EsdParams p{1.7, Vector::Zero(5), testutil::random_pd(5, r)};
        const auto d = build_direction_set(p);
        bool found = false;
        for (std::size_t k = 0; k < d.size(); ++k) {
            if (d.pairs[k] != std::make_pair(1, 3)) continue;  // coordinates 2 and 4, one-based
            found = true;
            for (int i = 0; i < 5; ++i) {
                if (i == 1 || i == 3)
                    CHECK(d.vectors[k](i) != 0.0);
                else
                    CHECK(d.vectors[k](i) == 0.0);
            }
            CHECK(std::abs(d.vectors[k].norm() - 1.0) < 1e-14);
        }
        CHECK(found);
    }

    TEST_CASE("stored pair direction follows the sign of the correlation") {
        Matrix om(2, 2);
        om << 0.5, -0.3, -0.3, 2.0;
        const auto d = build_direction_set(EsdParams{1.7, Vector::Zero(2), om});
        CHECK(d.vectors[2](0) > 0.0);
        CHECK(d.vectors[2](1) < 0.0);
        // Standardized bisector: u_i sqrt(w_ii) = |u_j| sqrt(w_jj).
        CHECK(std::abs(d.vectors[2](0) * std::sqrt(0.5) + d.vectors[2](1) * std::sqrt(2.0)) < 1e-14);
    }
}
