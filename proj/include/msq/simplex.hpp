#pragma once

#include <cstddef>
#include <functional>

#include "msq/linalg.hpp"

namespace msq {

struct SimplexOptions {
    std::size_t max_evals = 20000;
    double x_tol = 1e-6;
    double f_tol = 1e-10;
};

struct SimplexResult {
    Vector x;
    double f = 0.0;
    std::size_t evals = 0;
    bool converged = false;
};

// Nelder-Mead with dimension-adaptive coefficients (Gao and Han 2012).
// Stops when the simplex diameter is below x_tol and the spread of values
// is below f_tol * (1 + |f_best|), or after max_evals evaluations.
SimplexResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0, const Vector& step,
                          const SimplexOptions& options);

}  // namespace msq
