#include "vmp/special.hpp"

#include <Eigen/Cholesky>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <string>

#include "vmp/errors.hpp"

namespace vmp::special {

namespace {

void check_argument(double x, const char* name) {
  if (!std::isfinite(x) || x < kMinArgument) {
    throw DomainError(std::string(name) + " argument " + std::to_string(x) +
                      " is outside the supported range [1e-8, inf)");
  }
}

}  // namespace

double log_gamma(double x) {
  check_argument(x, "log_gamma");
  return boost::math::lgamma(x);
}

double digamma(double x) {
  check_argument(x, "digamma");
  return boost::math::digamma(x);
}

double log_multi_gamma(double a, Eigen::Index d) {
  double result = 0.25 * static_cast<double>(d * (d - 1)) * std::log(std::numbers::pi);
  for (Eigen::Index j = 1; j <= d; ++j) result += log_gamma(a + 0.5 * static_cast<double>(1 - j));
  return result;
}

double multi_digamma(double a, Eigen::Index d) {
  double result = 0.0;
  for (Eigen::Index j = 1; j <= d; ++j) result += digamma(a + 0.5 * static_cast<double>(1 - j));
  return result;
}

SpdFactor factor_spd(const Eigen::Ref<const Eigen::MatrixXd>& matrix) {
  const Eigen::Index d = matrix.rows();
  if (d != matrix.cols() || d == 0) throw NumericalError("matrix is not square");
  if (!matrix.allFinite()) throw NumericalError("matrix has non-finite entries");
  Eigen::MatrixXd symmetric = 0.5 * (matrix + matrix.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(symmetric);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * symmetric.trace() / static_cast<double>(d);
    if (jitter > 0.0) {
      symmetric.diagonal().array() += jitter;
      llt.compute(symmetric);
    }
    if (jitter <= 0.0 || llt.info() != Eigen::Success) {
      throw NumericalError("matrix is not symmetric positive definite");
    }
  }
  SpdFactor out;
  out.lower = llt.matrixL();
  out.log_det = 2.0 * out.lower.diagonal().array().log().sum();
  out.inverse = llt.solve(Eigen::MatrixXd::Identity(d, d));
  out.inverse = 0.5 * (out.inverse + out.inverse.transpose()).eval();
  return out;
}

}  // namespace vmp::special
