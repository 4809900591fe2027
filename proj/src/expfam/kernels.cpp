#include <cmath>
#include <numbers>
#include <string>

#include "vmp/expfam.hpp"
#include "vmp/special.hpp"

namespace vmp::kernels {

namespace {

using Eigen::Index;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
const double kLog2 = std::numbers::ln2;

special::SpdFactor factor_param(const Eigen::Ref<const Eigen::MatrixXd>& matrix,
                                const char* what) {
  try {
    return special::factor_spd(matrix);
  } catch (const NumericalError& e) {
    throw DomainError(std::string(what) + ": " + e.what());
  }
}

void require(bool condition, const std::string& message) {
  if (!condition) throw DomainError(message);
}

void require_finite(const PlateBlocks& blocks, const Family& family) {
  for (const auto& block : blocks) {
    for (double v : block.values()) {
      if (!std::isfinite(v)) {
        throw DomainError(family.name() + " natural parameters contain non-finite values");
      }
    }
  }
}

const BlockArray& parent_block(std::span<const PlateMoments* const> parents, std::size_t slot,
                               std::size_t block) {
  if (slot >= parents.size() || parents[slot] == nullptr ||
      block >= parents[slot]->blocks.size()) {
    throw SlotMismatchError("missing moments for parent slot " + std::to_string(slot));
  }
  return parents[slot]->blocks[block];
}

double log_sum_exp(const Eigen::Ref<const Eigen::MatrixXd>& phi) {
  const double top = phi.maxCoeff();
  if (std::isinf(top)) return top;
  const auto shifted = (phi.array() - top).unaryExpr([](double x) { return std::exp(x); });
  return top + std::log(shifted.sum());
}

}  // namespace

PlateBlocks zeros(const std::vector<std::pair<Index, Index>>& shapes) {
  PlateBlocks out;
  out.reserve(shapes.size());
  for (const auto& [rows, cols] : shapes) out.emplace_back(Plates{}, rows, cols, 0.0);
  return out;
}

PlateBlocks add(const PlateBlocks& a, const PlateBlocks& b) {
  if (a.size() != b.size()) throw ShapeError("block counts differ");
  PlateBlocks out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(vmp::add(a[i], b[i]));
  return out;
}

PlateBlocks scaled(const PlateBlocks& a, double factor) {
  PlateBlocks out;
  out.reserve(a.size());
  for (const auto& block : a) out.push_back(vmp::scaled(block, factor));
  return out;
}

PlateBlocks weighted(const PlateBlocks& a, const BlockArray& weights) {
  PlateBlocks out;
  out.reserve(a.size());
  for (const auto& block : a) out.push_back(vmp::weighted(block, weights));
  return out;
}

PlateBlocks expand(const PlateBlocks& a, const Plates& plates) {
  PlateBlocks out;
  out.reserve(a.size());
  for (const auto& block : a) out.push_back(vmp::expand(block, plates));
  return out;
}

PlateBlocks sum_to(const PlateBlocks& a, const Plates& full, const Plates& target) {
  PlateBlocks out;
  out.reserve(a.size());
  for (const auto& block : a) out.push_back(vmp::sum_to(block, full, target));
  return out;
}

double max_abs_difference(const PlateBlocks& a, const PlateBlocks& b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, vmp::max_abs_difference(a[i], b[i]));
  }
  return worst;
}

BlockArray dot(const PlateBlocks& phi, const PlateBlocks& moments) {
  if (phi.size() != moments.size()) throw ShapeError("natural and moment block counts differ");
  BlockArray result;
  for (std::size_t b = 0; b < phi.size(); ++b) {
    if (phi[b].rows() != moments[b].rows() || phi[b].cols() != moments[b].cols()) {
      throw ShapeError("natural and moment block shapes differ");
    }
    BlockArray term = map_blocks(
        1, 1,
        [](auto& out, const auto& p, const auto& u) {
          double sum = p.cwiseProduct(u).sum();
          if (std::isnan(sum)) {
            // Only infinite naturals against zero moments produce NaN here.
            sum = 0.0;
            for (Index i = 0; i < p.size(); ++i) {
              const double ui = u.data()[i];
              if (ui != 0.0) sum += p.data()[i] * ui;
            }
          }
          out(0, 0) = sum;
        },
        phi[b], moments[b]);
    result = b == 0 ? std::move(term) : vmp::add(result, term);
  }
  return result;
}

PlateMoments constant_moments(const MomentType& type, const BlockArray& values) {
  const Index d = type.dim;
  const auto shapes = type.block_shapes();
  const auto [rows, cols] = shapes[0];
  if (values.rows() != rows || values.cols() != cols) {
    throw ShapeError("constant for " + type.name() + " must be " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(values.rows()) + "x" +
                     std::to_string(values.cols()));
  }
  for (double v : values.values()) {
    if (std::isnan(v) || std::isinf(v)) throw DomainError("constant contains non-finite values");
  }
  PlateMoments out;
  switch (type.kind) {
    case MomentKind::Vector:
      out.blocks.push_back(values);
      out.blocks.push_back(map_blocks(
          d, d, [](auto& o, const auto& x) { o.noalias() = x.col(0) * x.col(0).transpose(); }, values));
      out.covariance = BlockArray(Plates{}, d, d, 0.0);
      break;
    case MomentKind::Precision:
      out.blocks.push_back(values);
      out.blocks.push_back(map_blocks(
          1, 1,
          [](auto& o, const auto& m) {
            o(0, 0) = factor_param(m, "constant precision").log_det;
          },
          values));
      break;
    case MomentKind::LogProbability:
    case MomentKind::Probability: {
      for (std::size_t e = 0; e < values.count(); ++e) {
        const auto p = values.at(e);
        require((p.array() >= 0.0).all() && std::abs(p.sum() - 1.0) < 1e-9,
                "constant probabilities must be non-negative and sum to one");
      }
      if (type.kind == MomentKind::Probability) {
        out.blocks.push_back(values);
      } else {
        out.blocks.push_back(map_blocks(
            d, 1, [](auto& o, const auto& p) { o = p.array().log().matrix(); }, values));
      }
      break;
    }
    case MomentKind::Fixed:
      out.blocks.push_back(values);
      break;
  }
  return out;
}

PlateMoments statistics(const Family& family, const BlockArray& values) {
  const Index d = family.dim();
  PlateMoments out;
  auto support = [&family](bool ok, const std::string& what) {
    if (!ok) throw SupportError(family.name() + " value " + what);
  };
  switch (family.kind()) {
    case FamilyKind::Gaussian:
      if (values.rows() != d || values.cols() != 1) throw ShapeError("Gaussian value shape");
      for (std::size_t e = 0; e < values.count(); ++e) {
        support(values.at(e).allFinite(), "is not finite");
      }
      out = constant_moments(MomentType::of(family), values);
      break;
    case FamilyKind::Gamma:
      if (values.rows() != 1 || values.cols() != 1) throw ShapeError("Gamma value shape");
      for (double v : values.values()) support(std::isfinite(v) && v > 0.0, "must be positive");
      out.blocks.push_back(values);
      out.blocks.push_back(
          map_blocks(1, 1, [](auto& o, const auto& x) { o(0, 0) = std::log(x(0, 0)); }, values));
      break;
    case FamilyKind::Wishart:
      if (values.rows() != d || values.cols() != d) throw ShapeError("Wishart value shape");
      out.blocks.push_back(values);
      out.blocks.push_back(map_blocks(
          1, 1,
          [&support](auto& o, const auto& m) {
            support(m.allFinite() && (m - m.transpose()).cwiseAbs().maxCoeff() <=
                                         1e-12 * (1.0 + m.cwiseAbs().maxCoeff()),
                    "must be a symmetric matrix");
            try {
              o(0, 0) = special::factor_spd(m).log_det;
            } catch (const NumericalError&) {
              support(false, "must be positive definite");
            }
          },
          values));
      break;
    case FamilyKind::Dirichlet:
      if (values.rows() != d || values.cols() != 1) throw ShapeError("Dirichlet value shape");
      for (std::size_t e = 0; e < values.count(); ++e) {
        const auto p = values.at(e);
        support((p.array() > 0.0).all() && std::abs(p.sum() - 1.0) < 1e-9,
                "must lie in the open simplex");
      }
      out.blocks.push_back(map_blocks(
          d, 1, [](auto& o, const auto& p) { o = p.array().log().matrix(); }, values));
      break;
    case FamilyKind::Categorical:
      if (values.cols() != 1 || (values.rows() != 1 && values.rows() != d)) {
        throw ShapeError("Categorical value must be an index or a one-hot vector");
      }
      out.blocks.push_back(map_blocks(
          d, 1,
          [&](auto& o, const auto& v) {
            o.setZero();
            if (v.rows() == 1 && d != 1) {
              const double index = v(0, 0);
              support(std::isfinite(index) && index >= 0.0 &&
                          index < static_cast<double>(d) && std::floor(index) == index,
                      "index " + std::to_string(index) + " outside [0, " + std::to_string(d) +
                          ")");
              o(static_cast<Index>(index), 0) = 1.0;
            } else {
              const bool one_hot = ((v.array() == 0.0) || (v.array() == 1.0)).all() &&
                                   v.sum() == 1.0;
              support(one_hot, "must be one-hot");
              o = v;
            }
          },
          values));
      break;
  }
  return out;
}

PlateBlocks prior_natural(const Family& family, std::span<const PlateMoments* const> parents) {
  const Index d = family.dim();
  PlateBlocks out;
  switch (family.kind()) {
    case FamilyKind::Gaussian: {
      const auto& mean = parent_block(parents, 0, 0);
      const auto& precision = parent_block(parents, 1, 0);
      out.push_back(map_blocks(
          d, 1, [](auto& o, const auto& L, const auto& m) { o.noalias() = L * m.col(0); }, precision,
          mean));
      out.push_back(map_blocks(d, d, [](auto& o, const auto& L) { o = -0.5 * L; }, precision));
      break;
    }
    case FamilyKind::Gamma: {
      const auto& shape = parent_block(parents, 0, 0);
      const auto& rate = parent_block(parents, 1, 0);
      out.push_back(map_blocks(1, 1, [](auto& o, const auto& b) { o = -b; }, rate));
      out.push_back(map_blocks(
          1, 1,
          [](auto& o, const auto& a) {
            require(a(0, 0) > 0.0, "Gamma shape must be positive");
            o(0, 0) = a(0, 0) - 1.0;
          },
          shape));
      break;
    }
    case FamilyKind::Wishart: {
      const auto& dof = parent_block(parents, 0, 0);
      const auto& scale = parent_block(parents, 1, 0);
      out.push_back(map_blocks(d, d, [](auto& o, const auto& V) { o = -0.5 * V; }, scale));
      out.push_back(map_blocks(
          1, 1,
          [d](auto& o, const auto& n) {
            require(n(0, 0) > static_cast<double>(d - 1),
                    "Wishart degrees of freedom must exceed d - 1");
            o(0, 0) = 0.5 * (n(0, 0) - static_cast<double>(d) - 1.0);
          },
          dof));
      break;
    }
    case FamilyKind::Dirichlet: {
      const auto& alpha = parent_block(parents, 0, 0);
      out.push_back(map_blocks(
          d, 1,
          [](auto& o, const auto& a) {
            require((a.array() > 0.0).all(), "Dirichlet concentration must be positive");
            o = a.array() - 1.0;
          },
          alpha));
      break;
    }
    case FamilyKind::Categorical:
      out.push_back(parent_block(parents, 0, 0));
      break;
  }
  return out;
}

BlockArray expected_log_partition(const Family& family,
                                  std::span<const PlateMoments* const> parents) {
  const Index d = family.dim();
  switch (family.kind()) {
    case FamilyKind::Gaussian:
      return map_blocks(
          1, 1,
          [](auto& o, const auto& L, const auto& mm, const auto& logdet) {
            o(0, 0) = 0.5 * L.cwiseProduct(mm).sum() - 0.5 * logdet(0, 0);
          },
          parent_block(parents, 1, 0), parent_block(parents, 0, 1), parent_block(parents, 1, 1));
    case FamilyKind::Gamma:
      return map_blocks(
          1, 1,
          [](auto& o, const auto& a, const auto& log_rate) {
            o(0, 0) = special::log_gamma(a(0, 0)) - a(0, 0) * log_rate(0, 0);
          },
          parent_block(parents, 0, 0), parent_block(parents, 1, 1));
    case FamilyKind::Wishart:
      return map_blocks(
          1, 1,
          [d](auto& o, const auto& n, const auto& logdet_scale) {
            const double dof = n(0, 0);
            o(0, 0) = 0.5 * dof * static_cast<double>(d) * kLog2 - 0.5 * dof * logdet_scale(0, 0) +
                      special::log_multi_gamma(0.5 * dof, d);
          },
          parent_block(parents, 0, 0), parent_block(parents, 1, 1));
    case FamilyKind::Dirichlet:
      return map_blocks(
          1, 1,
          [](auto& o, const auto& a) {
            double sum = 0.0;
            for (Index k = 0; k < a.rows(); ++k) sum += special::log_gamma(a(k, 0));
            o(0, 0) = sum - special::log_gamma(a.sum());
          },
          parent_block(parents, 0, 0));
    case FamilyKind::Categorical:
      (void)parent_block(parents, 0, 0);
      return BlockArray::scalar(0.0);
  }
  return BlockArray::scalar(0.0);
}

PlateBlocks parent_message(const Family& family, std::size_t slot, const PlateMoments& child,
                           std::span<const PlateMoments* const> parents) {
  const Index d = family.dim();
  const auto slots = parent_slots(family);
  if (slot >= slots.size()) {
    throw SlotMismatchError(family.name() + " has no parent slot " + std::to_string(slot));
  }
  if (slots[slot].kind == MomentKind::Fixed) {
    throw SlotMismatchError(family.name() + " slot " + std::to_string(slot) +
                            " only accepts constants and receives no messages");
  }
  PlateBlocks out;
  switch (family.kind()) {
    case FamilyKind::Gaussian:
      if (slot == 0) {
        const auto& precision = parent_block(parents, 1, 0);
        out.push_back(map_blocks(
            d, 1, [](auto& o, const auto& L, const auto& x) { o.noalias() = L * x.col(0); }, precision,
            child.blocks[0]));
        out.push_back(map_blocks(d, d, [](auto& o, const auto& L) { o = -0.5 * L; }, precision));
      } else {
        const auto& mean = parent_block(parents, 0, 0);
        const auto& mean_outer = parent_block(parents, 0, 1);
        out.push_back(map_blocks(
            d, d,
            [](auto& o, const auto& xx, const auto& x, const auto& m, const auto& mm) {
              o = xx + mm;
              o.noalias() -= x.col(0) * m.col(0).transpose();
              o.noalias() -= m.col(0) * x.col(0).transpose();
              o *= -0.5;
            },
            child.blocks[1], child.blocks[0], mean, mean_outer));
        out.push_back(BlockArray::scalar(0.5));
      }
      break;
    case FamilyKind::Gamma:
      out.push_back(map_blocks(1, 1, [](auto& o, const auto& x) { o = -x; }, child.blocks[0]));
      out.push_back(parent_block(parents, 0, 0));
      break;
    case FamilyKind::Wishart:
      out.push_back(
          map_blocks(d, d, [](auto& o, const auto& L) { o = -0.5 * L; }, child.blocks[0]));
      out.push_back(map_blocks(
          1, 1, [](auto& o, const auto& n) { o = 0.5 * n; }, parent_block(parents, 0, 0)));
      break;
    case FamilyKind::Categorical:
      out.push_back(child.blocks[0]);
      break;
    case FamilyKind::Dirichlet:
      break;
  }
  return out;
}

PlateMoments moments(const Family& family, const PlateBlocks& phi) {
  const Index d = family.dim();
  PlateMoments out;
  if (family.kind() != FamilyKind::Categorical) require_finite(phi, family);
  switch (family.kind()) {
    case FamilyKind::Gaussian: {
      const auto& p1 = phi[0];
      const auto& p2 = phi[1];
      BlockArray covariance(p2.plates(), d, d);
      for (std::size_t e = 0; e < p2.count(); ++e) {
        covariance.at(e) = factor_param(-2.0 * p2.at(e), "Gaussian precision").inverse;
      }
      out.blocks.push_back(map_blocks(
          d, 1, [](auto& o, const auto& c, const auto& v) { o.noalias() = c * v.col(0); }, covariance,
          p1));
      out.blocks.push_back(map_blocks(
          d, d,
          [](auto& o, const auto& c, const auto& m) {
            o = c;
            o.noalias() += m.col(0) * m.col(0).transpose();
          },
          covariance, out.blocks[0]));
      out.covariance = std::move(covariance);
      break;
    }
    case FamilyKind::Gamma: {
      const Plates grid = broadcast_plates(phi[0], phi[1]);
      BlockArray mean(grid, 1, 1), log_mean(grid, 1, 1);
      for_each_on(
          grid,
          [&](std::size_t e, const auto& p1, const auto& p2) {
            const double a = p2(0, 0) + 1.0;
            const double b = -p1(0, 0);
            require(a > 0.0 && b > 0.0, "Gamma shape and rate must be positive");
            mean.at(e)(0, 0) = a / b;
            log_mean.at(e)(0, 0) = special::digamma(a) - std::log(b);
          },
          phi[0], phi[1]);
      out.blocks.push_back(std::move(mean));
      out.blocks.push_back(std::move(log_mean));
      break;
    }
    case FamilyKind::Wishart: {
      const Plates grid = broadcast_plates(phi[0], phi[1]);
      BlockArray mean(grid, d, d), log_det(grid, 1, 1);
      for_each_on(
          grid,
          [&](std::size_t e, const auto& p1, const auto& p2) {
            const double n = 2.0 * p2(0, 0) + static_cast<double>(d) + 1.0;
            require(n > static_cast<double>(d - 1),
                    "Wishart degrees of freedom must exceed d - 1");
            const auto factor = factor_param(-2.0 * p1, "Wishart scale");
            mean.at(e) = n * factor.inverse;
            log_det.at(e)(0, 0) = special::multi_digamma(0.5 * n, d) +
                                  static_cast<double>(d) * kLog2 - factor.log_det;
          },
          phi[0], phi[1]);
      out.blocks.push_back(std::move(mean));
      out.blocks.push_back(std::move(log_det));
      break;
    }
    case FamilyKind::Dirichlet:
      out.blocks.push_back(map_blocks(
          d, 1,
          [](auto& o, const auto& p) {
            const Eigen::VectorXd alpha = p.col(0).array() + 1.0;
            require((alpha.array() > 0.0).all(), "Dirichlet concentration must be positive");
            const double total = special::digamma(alpha.sum());
            for (Index k = 0; k < alpha.size(); ++k) o(k, 0) = special::digamma(alpha(k)) - total;
          },
          phi[0]));
      break;
    case FamilyKind::Categorical:
      out.blocks.push_back(map_blocks(
          d, 1,
          [](auto& o, const auto& p) {
            require(!p.array().isNaN().any() && (p.array() < INFINITY).all(),
                    "Categorical log-probabilities must not be NaN or +inf");
            const double top = p.maxCoeff();
            require(std::isfinite(top), "Categorical needs at least one finite log-probability");
            // Scalar exp keeps exp(-inf) exactly zero; the vectorized one
            // returns a denormal.
            for (Index k = 0; k < p.rows(); ++k) o(k, 0) = std::exp(p(k, 0) - top);
            o /= o.sum();
          },
          phi[0]));
      break;
  }
  return out;
}

BlockArray log_partition(const Family& family, const PlateBlocks& phi) {
  const Index d = family.dim();
  if (family.kind() != FamilyKind::Categorical) require_finite(phi, family);
  switch (family.kind()) {
    case FamilyKind::Gaussian: {
      const auto& p2 = phi[1];
      BlockArray covariance(p2.plates(), d, d), log_det(p2.plates(), 1, 1);
      for (std::size_t e = 0; e < p2.count(); ++e) {
        auto factor = factor_param(-2.0 * p2.at(e), "Gaussian precision");
        covariance.at(e) = factor.inverse;
        log_det.at(e)(0, 0) = factor.log_det;
      }
      return map_blocks(
          1, 1,
          [](auto& o, const auto& c, const auto& ld, const auto& v) {
            o(0, 0) = 0.5 * v.col(0).dot(c * v.col(0)) - 0.5 * ld(0, 0);
          },
          covariance, log_det, phi[0]);
    }
    case FamilyKind::Gamma:
      return map_blocks(
          1, 1,
          [](auto& o, const auto& p1, const auto& p2) {
            const double a = p2(0, 0) + 1.0;
            const double b = -p1(0, 0);
            require(a > 0.0 && b > 0.0, "Gamma shape and rate must be positive");
            o(0, 0) = special::log_gamma(a) - a * std::log(b);
          },
          phi[0], phi[1]);
    case FamilyKind::Wishart:
      return map_blocks(
          1, 1,
          [d](auto& o, const auto& p1, const auto& p2) {
            const double n = 2.0 * p2(0, 0) + static_cast<double>(d) + 1.0;
            require(n > static_cast<double>(d - 1),
                    "Wishart degrees of freedom must exceed d - 1");
            const auto factor = factor_param(-2.0 * p1, "Wishart scale");
            o(0, 0) = 0.5 * n * static_cast<double>(d) * kLog2 - 0.5 * n * factor.log_det +
                      special::log_multi_gamma(0.5 * n, d);
          },
          phi[0], phi[1]);
    case FamilyKind::Dirichlet:
      return map_blocks(
          1, 1,
          [](auto& o, const auto& p) {
            const Eigen::VectorXd alpha = p.col(0).array() + 1.0;
            require((alpha.array() > 0.0).all(), "Dirichlet concentration must be positive");
            double sum = 0.0;
            for (Index k = 0; k < alpha.size(); ++k) sum += special::log_gamma(alpha(k));
            o(0, 0) = sum - special::log_gamma(alpha.sum());
          },
          phi[0]);
    case FamilyKind::Categorical:
      return map_blocks(
          1, 1,
          [](auto& o, const auto& p) {
            require(!p.array().isNaN().any() && (p.array() < INFINITY).all(),
                    "Categorical log-probabilities must not be NaN or +inf");
            o(0, 0) = log_sum_exp(p);
            require(std::isfinite(o(0, 0)),
                    "Categorical needs at least one finite log-probability");
          },
          phi[0]);
  }
  return BlockArray::scalar(0.0);
}

BlockArray entropy(const Family& family, const PlateBlocks& phi, const PlateMoments& moments) {
  if (family.kind() == FamilyKind::Gaussian) {
    const Index d = family.dim();
    require_finite(phi, family);
    const double constant = 0.5 * static_cast<double>(d) * (1.0 + kLog2Pi);
    return map_blocks(
        1, 1,
        [constant](auto& o, const auto& p2) {
          o(0, 0) = constant - 0.5 * factor_param(-2.0 * p2, "Gaussian precision").log_det;
        },
        phi[1]);
  }
  return vmp::add(log_partition(family, phi), vmp::scaled(dot(phi, moments.blocks), -1.0));
}

}  // namespace vmp::kernels
