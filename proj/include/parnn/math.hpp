#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace parnn {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF for p in (0,1). Rational approximation
/// refined by one Newton step on the CDF; absolute error well below 1e-9.
double normal_quantile(double p);

/// Dense symmetric positive definite solve via Cholesky.
/// Matrix is row-major n x n. Throws std::runtime_error if the
/// factorization fails.
class CholeskyFactor {
public:
    CholeskyFactor(std::span<const double> matrix, std::size_t n);
    std::vector<double> solve(std::span<const double> rhs) const;
    static bool try_factor(std::span<const double> matrix, std::size_t n);

private:
    std::size_t n_;
    std::vector<double> lower_;  // row-major lower triangle
};

}  // namespace parnn
