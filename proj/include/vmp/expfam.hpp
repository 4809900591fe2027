#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vmp/block_array.hpp"

namespace vmp {

enum class FamilyKind { Gaussian, Gamma, Wishart, Dirichlet, Categorical };

/// An exponential family together with its event dimension.
///
/// Natural parameter conventions (density exp(phi . t(x) - A(phi) + h(x))):
///   Gaussian(d)     t = (x, x x^T)         phi = (Lambda mu, -Lambda / 2)
///   Gamma           t = (x, ln x)          phi = (-b, a - 1)
///   Wishart(d)      t = (L, ln|L|)         phi = (-V / 2, (n - d - 1) / 2), E[L] = n V^-1
///   Dirichlet(K)    t = ln p               phi = alpha - 1
///   Categorical(K)  t = one-hot(z)         phi = log-probabilities up to a constant
/// The base measure h is -(d/2) ln(2 pi) for the Gaussian and zero otherwise.
class Family {
 public:
  static Family gaussian(Eigen::Index dim);
  static Family gamma();
  static Family wishart(Eigen::Index dim);
  static Family dirichlet(Eigen::Index categories);
  static Family categorical(Eigen::Index categories);

  FamilyKind kind() const noexcept { return kind_; }
  Eigen::Index dim() const noexcept { return dim_; }
  std::string name() const;

  /// (rows, cols) of each natural-parameter / moment block.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> block_shapes() const;
  /// Shape of one observed value: Gaussian (d), Gamma (), Wishart (d, d),
  /// Dirichlet (K), Categorical () holding the category index.
  std::vector<std::size_t> event_shape() const;
  std::size_t event_size() const;

  friend bool operator==(const Family&, const Family&) = default;

 private:
  Family(FamilyKind kind, Eigen::Index dim) : kind_(kind), dim_(dim) {}
  FamilyKind kind_;
  Eigen::Index dim_;
};

/// The kind of moments a node emits, which decides the parent slots it can
/// feed.
enum class MomentKind {
  Vector,          // (E[x], E[x x^T]); Gaussian
  Precision,       // (E[L], E[ln|L|]); Wishart, or Gamma when dim == 1
  LogProbability,  // E[ln p]; Dirichlet
  Probability,     // E[z]; Categorical
  Fixed,           // a hyperparameter column vector usable only as a constant
};

struct MomentType {
  MomentKind kind;
  Eigen::Index dim;

  static MomentType of(const Family& family);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> block_shapes() const;
  std::string name() const;

  friend bool operator==(const MomentType&, const MomentType&) = default;
};

/// Accepted parent moment type for each slot of a family. Gaussian: (mean,
/// precision); Gamma: (shape, rate); Wishart: (degrees of freedom, scale);
/// Dirichlet: (concentration); Categorical: (probabilities).
std::vector<MomentType> parent_slots(const Family& family);

struct NaturalParams {
  Family family;
  std::vector<Eigen::MatrixXd> blocks;
};

struct MomentVector {
  MomentType type;
  std::vector<Eigen::MatrixXd> blocks;
};

/// An additive natural-parameter contribution for a parent of type `type`.
struct Message {
  MomentType type;
  std::vector<Eigen::MatrixXd> blocks;
};

// Single-distribution operations.

double log_partition(const NaturalParams& phi);
MomentVector moments_from_natural(const NaturalParams& phi);

/// Degenerate statistics t(x) of an observed value and its log base measure.
/// A Categorical value is either a 1x1 index or a one-hot K-vector.
std::pair<MomentVector, double> statistics_of_value(const Family& family,
                                                    const Eigen::MatrixXd& value);

/// Exact moments of a constant used in a slot of type `type`: a mean vector,
/// a precision matrix (or positive scalar), a probability vector, or a raw
/// hyperparameter.
MomentVector moments_of_constant(const MomentType& type, const Eigen::MatrixXd& value);

/// Expected natural parameters of a child given mean-field parent moments.
NaturalParams natural_from_parent_moments(const Family& family,
                                          std::span<const MomentVector> parents);

/// E over the parents of A(phi(parents)).
double expected_log_partition(const Family& family, std::span<const MomentVector> parents);

/// Child-to-parent message for `slot`; `parents` holds the moments of every
/// slot (the entry for `slot` itself is ignored).
Message message_to_parent(const Family& family, std::size_t slot,
                          const MomentVector& child_moments,
                          std::span<const MomentVector> parents);

/// phi . u - E[A] + E[h]; throws NumericalError when the result is not finite.
double expected_log_pdf(const NaturalParams& phi_from_parents, const MomentVector& child_moments,
                        double expected_log_partition_terms, double expected_log_base);

/// -E_q[log q] = A(phi) - phi . u - E_q[h].
double entropy(const NaturalParams& phi, const MomentVector& moments);

double log_base_measure(const Family& family);

/// One draw from the distribution, deterministic for a given seed. Gaussian
/// and Dirichlet return column vectors, Gamma a 1x1 matrix, Wishart a d x d
/// matrix and Categorical a 1x1 matrix holding the category index.
Eigen::MatrixXd draw_sample(const NaturalParams& phi, std::uint64_t seed);

/// Validates the natural parameters against the family's domain.
void check_natural(const NaturalParams& phi);

// Plate-vectorized kernels. Each block is a BlockArray over (possibly
// broadcast) plates; results keep only the plate axes their inputs vary on.

using PlateBlocks = std::vector<BlockArray>;

struct PlateMoments {
  PlateBlocks blocks;
  BlockArray covariance;  // Vector moments only: Cov[x]
};

namespace kernels {

PlateBlocks zeros(const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes);
PlateBlocks add(const PlateBlocks& a, const PlateBlocks& b);
PlateBlocks scaled(const PlateBlocks& a, double factor);
PlateBlocks weighted(const PlateBlocks& a, const BlockArray& weights);
PlateBlocks expand(const PlateBlocks& a, const Plates& plates);
PlateBlocks sum_to(const PlateBlocks& a, const Plates& full, const Plates& target);
double max_abs_difference(const PlateBlocks& a, const PlateBlocks& b);
/// Frobenius inner product summed over blocks; terms with a zero moment are
/// skipped so that -inf log-probabilities of impossible values stay finite.
BlockArray dot(const PlateBlocks& phi, const PlateBlocks& moments);

PlateMoments constant_moments(const MomentType& type, const BlockArray& values);
PlateMoments statistics(const Family& family, const BlockArray& values);

PlateBlocks prior_natural(const Family& family, std::span<const PlateMoments* const> parents);
BlockArray expected_log_partition(const Family& family,
                                  std::span<const PlateMoments* const> parents);
PlateBlocks parent_message(const Family& family, std::size_t slot, const PlateMoments& child,
                           std::span<const PlateMoments* const> parents);

PlateMoments moments(const Family& family, const PlateBlocks& phi);
BlockArray log_partition(const Family& family, const PlateBlocks& phi);
BlockArray entropy(const Family& family, const PlateBlocks& phi, const PlateMoments& moments);

}  // namespace kernels

}  // namespace vmp
