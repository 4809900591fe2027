#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "vmp/expfam.hpp"

namespace vmp::oracles {

inline Eigen::MatrixXd random_spd(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd b(d, d);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = normal(rng);
  return b * b.transpose() / static_cast<double>(d) + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

/// A random valid natural parameter of moderate scale.
inline NaturalParams random_natural(const Family& family, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> positive(0.3, 5.0);
  const Eigen::Index d = family.dim();
  NaturalParams phi{family, {}};
  switch (family.kind()) {
    case FamilyKind::Gaussian: {
      const Eigen::MatrixXd precision = random_spd(d, rng);
      Eigen::VectorXd mean(d);
      for (Eigen::Index i = 0; i < d; ++i) mean(i) = normal(rng);
      phi.blocks = {precision * mean, -0.5 * precision};
      break;
    }
    case FamilyKind::Gamma:
      phi.blocks = {Eigen::MatrixXd::Constant(1, 1, -positive(rng)),
                    Eigen::MatrixXd::Constant(1, 1, positive(rng) - 1.0)};
      break;
    case FamilyKind::Wishart: {
      const double dof = static_cast<double>(d) - 0.5 + positive(rng);
      phi.blocks = {-0.5 * random_spd(d, rng),
                    Eigen::MatrixXd::Constant(1, 1, 0.5 * (dof - static_cast<double>(d) - 1.0))};
      break;
    }
    case FamilyKind::Dirichlet: {
      Eigen::VectorXd alpha(d);
      for (Eigen::Index k = 0; k < d; ++k) alpha(k) = positive(rng);
      phi.blocks = {alpha.array() - 1.0};
      break;
    }
    case FamilyKind::Categorical: {
      Eigen::VectorXd logits(d);
      for (Eigen::Index k = 0; k < d; ++k) logits(k) = 2.0 * normal(rng);
      phi.blocks = {logits};
      break;
    }
  }
  return phi;
}

/// Largest relative error between the moments and central differences of the
/// log-partition. Symmetric blocks are perturbed in (i, j) and (j, i)
/// together, so the difference there estimates u(i, j) + u(j, i). Errors are
/// relative to each entry's own magnitude (absolute for an exact zero).
inline double gradient_error(const NaturalParams& phi) {
  const MomentVector u = moments_from_natural(phi);
  double worst = 0.0;
  for (std::size_t b = 0; b < phi.blocks.size(); ++b) {
    const Eigen::MatrixXd& block = phi.blocks[b];
    const bool symmetric = block.rows() > 1 && block.rows() == block.cols();
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      for (Eigen::Index i = 0; i < block.rows(); ++i) {
        if (symmetric && i < j) continue;
        const double h = 1e-6 * std::max(std::abs(block(i, j)), 1.0);
        auto shifted = [&](double delta) {
          NaturalParams p = phi;
          p.blocks[b](i, j) += delta;
          if (symmetric && i != j) p.blocks[b](j, i) += delta;
          return log_partition(p);
        };
        const double numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        const double analytic =
            symmetric && i != j ? u.blocks[b](i, j) + u.blocks[b](j, i) : u.blocks[b](i, j);
        const double scale = analytic == 0.0 ? 1.0 : std::abs(analytic);
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
      }
    }
  }
  return worst;
}

}  // namespace vmp::oracles
