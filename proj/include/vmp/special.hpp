#pragma once

#include <Eigen/Core>

namespace vmp::special {

/// Smallest argument accepted by log_gamma and digamma.
inline constexpr double kMinArgument = 1e-8;

// Both throw DomainError for arguments below kMinArgument or non-finite.
double log_gamma(double x);
double digamma(double x);

/// Log of the multivariate gamma function Gamma_d(a), a > (d - 1) / 2.
double log_multi_gamma(double a, Eigen::Index d);

/// Sum of Gamma_d digamma terms: sum_{i=1..d} digamma(a + (1 - i) / 2).
double multi_digamma(double a, Eigen::Index d);

/// Cholesky factor of a symmetric positive definite matrix with one jittered
/// retry (1e-10 * trace / d added to the diagonal). Throws NumericalError when
/// the retry also fails.
struct SpdFactor {
  Eigen::MatrixXd inverse;
  double log_det = 0.0;
  Eigen::MatrixXd lower;  // L with L * L^T = matrix
};
SpdFactor factor_spd(const Eigen::Ref<const Eigen::MatrixXd>& matrix);

}  // namespace vmp::special
