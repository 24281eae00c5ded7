#include "parnn/math.hpp"

#include <cmath>
#include <stdexcept>

namespace parnn {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

namespace {

// Acklam's rational approximation to the inverse normal CDF.
double quantile_approx(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;

    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    double x = quantile_approx(p);
    // one Newton step on the CDF
    const double e = normal_cdf(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (pdf > 0.0) x -= e / pdf;
    return x;
}

CholeskyFactor::CholeskyFactor(std::span<const double> matrix, std::size_t n) : n_(n) {
    if (matrix.size() != n * n)
        throw std::invalid_argument("CholeskyFactor: matrix size mismatch");
    lower_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = matrix[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= lower_[i * n + k] * lower_[j * n + k];
            if (i == j) {
                if (s <= 0.0) throw std::runtime_error("CholeskyFactor: not positive definite");
                lower_[i * n + i] = std::sqrt(s);
            } else {
                lower_[i * n + j] = s / lower_[j * n + j];
            }
        }
    }
}

bool CholeskyFactor::try_factor(std::span<const double> matrix, std::size_t n) {
    try {
        CholeskyFactor f(matrix, n);
        (void)f;
        return true;
    } catch (const std::runtime_error&) {
        return false;
    }
}

std::vector<double> CholeskyFactor::solve(std::span<const double> rhs) const {
    if (rhs.size() != n_) throw std::invalid_argument("CholeskyFactor: rhs size mismatch");
    std::vector<double> y(n_), x(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= lower_[i * n_ + k] * y[k];
        y[i] = s / lower_[i * n_ + i];
    }
    for (std::size_t ii = n_; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n_; ++k) s -= lower_[k * n_ + ii] * x[k];
        x[ii] = s / lower_[ii * n_ + ii];
    }
    return x;
}

}  // namespace parnn
