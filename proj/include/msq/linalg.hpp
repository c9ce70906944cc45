#pragma once

#include <Eigen/Dense>

namespace msq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

// Lower Cholesky factor; throws NotPositiveDefinite with `what` in the message.
Matrix cholesky_lower(const Matrix& a, const char* what = "matrix");

bool is_positive_definite(const Matrix& a);

// Symmetric eigenvalue clipping: eigenvalues below `floor` are raised to it.
Matrix clip_eigenvalues(const Matrix& a, double floor);

Matrix symmetrize(const Matrix& a);

}  // namespace msq
