#include "vmp/expfam.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <algorithm>
#include <limits>
#include <optional>
#include <random>

#include "vmp/special.hpp"

namespace vmp {

namespace {

PlateBlocks to_blocks(const std::vector<Eigen::MatrixXd>& blocks) {
  PlateBlocks out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(BlockArray::single(b));
  return out;
}

std::vector<Eigen::MatrixXd> from_blocks(const PlateBlocks& blocks) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    if (b.count() != 1) throw ShapeError("expected a single element");
    out.emplace_back(b.at(0));
  }
  return out;
}

void check_shapes(const std::vector<Eigen::MatrixXd>& blocks,
                  const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes,
                  const std::string& what) {
  if (blocks.size() != shapes.size()) {
    throw ShapeError(what + " needs " + std::to_string(shapes.size()) + " blocks, got " +
                     std::to_string(blocks.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (blocks[i].rows() != shapes[i].first || blocks[i].cols() != shapes[i].second) {
      throw ShapeError(what + " block " + std::to_string(i) + " must be " +
                       std::to_string(shapes[i].first) + "x" + std::to_string(shapes[i].second));
    }
  }
}

PlateMoments to_moments(const MomentVector& u) {
  check_shapes(u.blocks, u.type.block_shapes(), "moments of " + u.type.name());
  PlateMoments out;
  out.blocks = to_blocks(u.blocks);
  if (u.type.kind == MomentKind::Vector) {
    out.covariance = BlockArray::single(u.blocks[1] - u.blocks[0] * u.blocks[0].transpose());
  }
  return out;
}

struct ParentPack {
  std::vector<PlateMoments> storage;
  std::vector<const PlateMoments*> pointers;
};

ParentPack pack_parents(const Family& family, std::span<const MomentVector> parents,
                        std::optional<std::size_t> skip = std::nullopt) {
  const auto slots = parent_slots(family);
  if (parents.size() != slots.size()) {
    throw SlotMismatchError(family.name() + " takes " + std::to_string(slots.size()) +
                            " parents, got " + std::to_string(parents.size()));
  }
  ParentPack pack;
  pack.storage.reserve(parents.size());
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (skip && *skip == i) {
      pack.storage.emplace_back();
      continue;
    }
    if (!(parents[i].type == slots[i])) {
      throw SlotMismatchError(family.name() + " slot " + std::to_string(i) + " accepts " +
                              slots[i].name() + " moments, got " + parents[i].type.name());
    }
    pack.storage.push_back(to_moments(parents[i]));
  }
  for (std::size_t i = 0; i < parents.size(); ++i) {
    pack.pointers.push_back(skip && *skip == i ? nullptr : &pack.storage[i]);
  }
  return pack;
}

}  // namespace

void check_natural(const NaturalParams& phi) {
  check_shapes(phi.blocks, phi.family.block_shapes(), phi.family.name() + " natural parameters");
  (void)kernels::log_partition(phi.family, to_blocks(phi.blocks));
}

double log_partition(const NaturalParams& phi) {
  check_shapes(phi.blocks, phi.family.block_shapes(), phi.family.name() + " natural parameters");
  const double value = kernels::log_partition(phi.family, to_blocks(phi.blocks)).at(0)(0, 0);
  if (!std::isfinite(value)) throw NumericalError("log-partition overflow");
  return value;
}

MomentVector moments_from_natural(const NaturalParams& phi) {
  check_shapes(phi.blocks, phi.family.block_shapes(), phi.family.name() + " natural parameters");
  const auto u = kernels::moments(phi.family, to_blocks(phi.blocks));
  return {MomentType::of(phi.family), from_blocks(u.blocks)};
}

std::pair<MomentVector, double> statistics_of_value(const Family& family,
                                                    const Eigen::MatrixXd& value) {
  const auto u = kernels::statistics(family, BlockArray::single(value));
  return {{MomentType::of(family), from_blocks(u.blocks)}, log_base_measure(family)};
}

MomentVector moments_of_constant(const MomentType& type, const Eigen::MatrixXd& value) {
  const auto u = kernels::constant_moments(type, BlockArray::single(value));
  return {type, from_blocks(u.blocks)};
}

NaturalParams natural_from_parent_moments(const Family& family,
                                          std::span<const MomentVector> parents) {
  const auto pack = pack_parents(family, parents);
  return {family, from_blocks(kernels::prior_natural(family, pack.pointers))};
}

double expected_log_partition(const Family& family, std::span<const MomentVector> parents) {
  const auto pack = pack_parents(family, parents);
  return kernels::expected_log_partition(family, pack.pointers).at(0)(0, 0);
}

Message message_to_parent(const Family& family, std::size_t slot,
                          const MomentVector& child_moments,
                          std::span<const MomentVector> parents) {
  const auto slots = parent_slots(family);
  if (slot >= slots.size()) {
    throw SlotMismatchError(family.name() + " has no parent slot " + std::to_string(slot));
  }
  if (!(child_moments.type == MomentType::of(family))) {
    throw SlotMismatchError("child moments are " + child_moments.type.name() + ", expected " +
                            MomentType::of(family).name());
  }
  const auto pack = pack_parents(family, parents, slot);
  const auto child = to_moments(child_moments);
  return {slots[slot], from_blocks(kernels::parent_message(family, slot, child, pack.pointers))};
}

double expected_log_pdf(const NaturalParams& phi_from_parents, const MomentVector& child_moments,
                        double expected_log_partition_terms, double expected_log_base) {
  check_shapes(phi_from_parents.blocks, phi_from_parents.family.block_shapes(),
               "natural parameters");
  check_shapes(child_moments.blocks, child_moments.type.block_shapes(), "moments");
  if (!(child_moments.type == MomentType::of(phi_from_parents.family))) {
    throw ShapeError("moments do not belong to the family of the natural parameters");
  }
  const double cross = kernels::dot(to_blocks(phi_from_parents.blocks),
                                    to_blocks(child_moments.blocks))
                           .at(0)(0, 0);
  const double value = cross - expected_log_partition_terms + expected_log_base;
  if (!std::isfinite(value)) {
    throw NumericalError("expected log density is not finite (value outside the support)");
  }
  return value;
}

double entropy(const NaturalParams& phi, const MomentVector& moments) {
  check_shapes(phi.blocks, phi.family.block_shapes(), "natural parameters");
  const auto u = to_moments(moments);
  const double value = kernels::entropy(phi.family, to_blocks(phi.blocks), u).at(0)(0, 0);
  if (!std::isfinite(value)) throw NumericalError("entropy is not finite");
  return value;
}

double log_base_measure(const Family& family) {
  if (family.kind() == FamilyKind::Gaussian) {
    return -0.5 * static_cast<double>(family.dim()) * std::log(2.0 * std::numbers::pi);
  }
  return 0.0;
}

Eigen::MatrixXd draw_sample(const NaturalParams& phi, std::uint64_t seed) {
  check_natural(phi);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index d = phi.family.dim();
  switch (phi.family.kind()) {
    case FamilyKind::Gaussian: {
      const auto factor = special::factor_spd(-2.0 * phi.blocks[1]);
      const Eigen::VectorXd mean = factor.inverse * phi.blocks[0];
      Eigen::VectorXd z(d);
      for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
      // Lambda = L L^T, so L^-T z has covariance Lambda^-1.
      return mean + factor.lower.transpose().triangularView<Eigen::Upper>().solve(z);
    }
    case FamilyKind::Gamma: {
      const double a = phi.blocks[1](0, 0) + 1.0;
      const double b = -phi.blocks[0](0, 0);
      std::gamma_distribution<double> gamma(a, 1.0 / b);
      double x = gamma(rng);
      // Tiny shapes can underflow to zero, which lies outside the support.
      if (x <= 0.0) x = std::numeric_limits<double>::min();
      return Eigen::MatrixXd::Constant(1, 1, x);
    }
    case FamilyKind::Wishart: {
      // Bartlett decomposition of W(n, V^-1).
      const double n = 2.0 * phi.blocks[1](0, 0) + static_cast<double>(d) + 1.0;
      const auto scale = special::factor_spd(special::factor_spd(-2.0 * phi.blocks[0]).inverse);
      Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        std::chi_squared_distribution<double> chi2(n - static_cast<double>(i));
        bartlett(i, i) = std::sqrt(chi2(rng));
        for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = normal(rng);
      }
      const Eigen::MatrixXd root = scale.lower * bartlett;
      Eigen::MatrixXd out = root * root.transpose();
      return 0.5 * (out + out.transpose());
    }
    case FamilyKind::Dirichlet: {
      Eigen::VectorXd draw(d);
      for (Eigen::Index k = 0; k < d; ++k) {
        std::gamma_distribution<double> gamma(phi.blocks[0](k, 0) + 1.0, 1.0);
        draw(k) = std::max(gamma(rng), std::numeric_limits<double>::min());
      }
      return draw / draw.sum();
    }
    case FamilyKind::Categorical: {
      const auto u = kernels::moments(phi.family, to_blocks(phi.blocks));
      const auto p = u.blocks[0].at(0);
      std::discrete_distribution<int> pick(p.data(), p.data() + p.size());
      return Eigen::MatrixXd::Constant(1, 1, static_cast<double>(pick(rng)));
    }
  }
  return {};
}

}  // namespace vmp
