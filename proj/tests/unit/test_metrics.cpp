#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "msq/errors.hpp"
#include "msq/linalg.hpp"
#include "msq/metrics.hpp"

using namespace msq;

namespace {

Matrix with_offdiag(int m, std::initializer_list<std::pair<int, int>> entries, double v = 0.3) {
    Matrix a = Matrix::Identity(m, m);
    for (auto [i, j] : entries) a(i, j) = a(j, i) = v;
    return a;
}

// Gaussian KL written out entrywise through explicit inverse and determinants.
double kl_oracle(const Matrix& o, const Matrix& e) {
    const double m = static_cast<double>(o.rows());
    return 0.5 * ((o.inverse() * e).trace() - m - std::log(e.determinant() / o.determinant()));
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("F1 examples") {
        const Matrix t = with_offdiag(3, {{0, 1}, {0, 2}});
        CHECK(f1_score(t, t) == 1.0);
        CHECK(f1_score(t, with_offdiag(3, {{0, 1}, {1, 2}})) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(f1_score(with_offdiag(3, {{0, 1}}), with_offdiag(3, {{1, 2}})) == 0.0);
        CHECK(f1_score(Matrix::Identity(3, 3), Matrix::Identity(3, 3)) == 1.0);
    }

    TEST_CASE("F1 threshold decides what counts as nonzero") {
        const Matrix t = with_offdiag(3, {{0, 1}});
        Matrix e = t;
        e(1, 2) = e(2, 1) = 1e-6;
        CHECK(f1_score(t, e) < 1.0);
        CHECK(f1_score(t, e, 1e-4) == 1.0);
    }

    TEST_CASE("KL examples") {
        const Matrix I = Matrix::Identity(2, 2);
        CHECK(kl_divergence(I, I) == doctest::Approx(0.0).epsilon(1e-12));
        const double expected = 0.5 * (4.0 - 2.0 - std::log(4.0));
        CHECK(std::abs(kl_divergence(I, 2.0 * I) - expected) < 1e-12);
        CHECK(expected == doctest::Approx(0.3069).epsilon(1e-4));
    }

    TEST_CASE("KL agrees with the explicit formula and is nonnegative") {
        RngStream r(81, 0);
        for (int it = 0; it < 100; ++it) {
            const int m = 2 + it % 4;
            const Matrix o = testutil::random_pd(m, r), e = testutil::random_pd(m, r);
            const double kl = kl_divergence(o, e);
            CHECK(kl >= 0.0);
            CHECK(kl == doctest::Approx(kl_oracle(o, e)).epsilon(1e-9));
        }
    }

    TEST_CASE("KL rejects non positive definite input") {
        Matrix bad = Matrix::Identity(2, 2);
        bad(0, 1) = bad(1, 0) = 2.0;
        CHECK_THROWS_AS(kl_divergence(Matrix::Identity(2, 2), bad), DomainError);
        CHECK_THROWS_AS(kl_divergence(bad, Matrix::Identity(2, 2)), DomainError);
        CHECK_THROWS_AS(kl_divergence(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), DomainError);
    }

    TEST_CASE("Frobenius examples") {
        for (int m : {1, 4, 9}) {
            const Matrix I = Matrix::Identity(m, m);
            CHECK(frobenius_error(I, I) == 0.0);
            CHECK(std::abs(frobenius_error(I, Matrix::Zero(m, m)) - std::sqrt(static_cast<double>(m))) < 1e-12);
        }
        Matrix a = Matrix::Zero(2, 2), b = Matrix::Zero(2, 2);
        b(0, 0) = 3.0;
        b(1, 1) = 4.0;
        CHECK(std::abs(frobenius_error(a, b) - 5.0) < 1e-12);
    }

    TEST_CASE("named designs") {
        for (const auto& name : design_names()) {
            const Design d = named_design(name, 1.7);
            CHECK(is_positive_definite(d.truth.omega));
            CHECK(d.n > 0);
            CHECK(d.truth.xi.size() == d.truth.omega.rows());
        }
        CHECK(named_design("dim12", 2.0).truth.omega.rows() == 12);
        CHECK(named_design("dim2", 1.7, 123).n == 123);
        CHECK_THROWS_AS(named_design("dim3", 1.7), DomainError);
    }

    TEST_CASE("replication driver") {
        ExperimentSpec spec;
        spec.design = named_design("dim2", 1.7, 400);
        spec.replications = 2;
        spec.seed = 9;
        MmsqConfig cfg;
        cfg.R = 5;
        const ReplicationSummary s = run_experiment(spec, cfg);
        REQUIRE(s.records.size() == 2);
        CHECK(s.rows.size() == 6);
        CHECK(s.records[0].index == 0);
        CHECK(s.records[1].index == 1);
        for (const auto& rec : s.records) {
            REQUIRE(rec.ok);
            CHECK(rec.frobenius == doctest::Approx(frobenius_error(spec.design.truth.omega, rec.theta.omega)));
            CHECK(rec.f1 == 1.0);
        }
        CHECK(s.failures == 0);
        CHECK(s.frobenius.mean == doctest::Approx(0.5 * (s.records[0].frobenius + s.records[1].frobenius)));

        const ReplicationSummary again = run_experiment(spec, cfg);
        std::ostringstream a, b;
        write_parameter_table(a, s);
        write_metric_table(a, s);
        write_records(a, s);
        write_parameter_table(b, again);
        write_metric_table(b, again);
        write_records(b, again);
        CHECK(a.str() == b.str());
        CHECK(a.str().rfind("Par.,True,BIAS,SSD,ECP\n", 0) == 0);
    }
}
