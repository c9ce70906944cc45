#include "msq/linalg.hpp"

#include <cmath>
#include <string>

#include "msq/errors.hpp"

namespace msq {

bool is_symmetric(const Matrix& a, double rel_tol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > rel_tol * scale) return false;
    return true;
}

Matrix cholesky_lower(const Matrix& a, const char* what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
    Matrix l = llt.matrixL();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i)))
            throw NotPositiveDefinite(std::string(what) + " is not positive definite");
    return l;
}

bool is_positive_definite(const Matrix& a) {
    if (a.rows() != a.cols() || !a.allFinite()) return false;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) return false;
    const Matrix l = llt.matrixL();
    return (l.diagonal().array() > 0.0).all();
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

Matrix clip_eigenvalues(const Matrix& a, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
    Vector ev = es.eigenvalues().cwiseMax(floor);
    return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

}  // namespace msq
