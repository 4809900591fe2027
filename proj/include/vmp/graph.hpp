#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vmp/block_array.hpp"
#include "vmp/expfam.hpp"

namespace vmp {

struct NodeId {
  std::size_t index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class NodeKind { Constant, Stochastic, Mixture, SumProduct };

/// A parent slot argument: an existing node, or a literal that becomes a
/// constant node typed by the slot it fills.
class ParentArg {
 public:
  ParentArg(NodeId node) : value_(node) {}  // NOLINT(google-explicit-constructor)
  ParentArg(double literal)                 // NOLINT(google-explicit-constructor)
      : value_(Eigen::MatrixXd::Constant(1, 1, literal)) {}
  template <class Derived>
  ParentArg(const Eigen::MatrixBase<Derived>& literal)  // NOLINT(google-explicit-constructor)
      : value_(Eigen::MatrixXd(literal)) {}

  const NodeId* node() const { return std::get_if<NodeId>(&value_); }
  const Eigen::MatrixXd* literal() const { return std::get_if<Eigen::MatrixXd>(&value_); }

 private:
  std::variant<NodeId, Eigen::MatrixXd> value_;
};

/// Row-major observed values with shape plates ++ event shape.
struct DataTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Per-plate-element observation flags (1 = observed, 0 = missing).
struct Mask {
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> observed;
};

enum class AxisMode { Shared, Expanded };

/// Which plate axes of a node's posterior carry one representative element
/// per natural-parameter block.
struct BroadcastPlan {
  Plates plates;
  std::vector<std::vector<AxisMode>> blocks;  // [block][axis]

  bool shared(std::size_t block, std::size_t axis) const {
    return blocks.at(block).at(axis) == AxisMode::Shared;
  }
};

/// Minibatch weighting along one plate axis: messages that cross from a node
/// carrying the axis to a node without it are multiplied elementwise by
/// `weights` along that axis.
struct BatchWeighting {
  std::size_t axis_from_end = 1;  // 1 = last plate axis
  std::vector<double> weights;
};

/// A conjugate-exponential factor graph driven by variational message
/// passing. Nodes must be added parents-first; ids are dense and ordered.
class Graph {
 public:
  NodeId add_constant(const MomentType& type, const BlockArray& values, std::string label = {});
  NodeId add_constant(const MomentType& type, const Eigen::MatrixXd& value,
                      std::string label = {});

  /// Stochastic node; `plates` defaults to the broadcast of the parents'.
  NodeId add_stochastic(const Family& family, const std::vector<ParentArg>& parents,
                        std::optional<Plates> plates = std::nullopt, std::string label = {});

  /// Node whose distribution given gate value k is `component` with the k-th
  /// slice (leading plate axis) of each component parent.
  NodeId add_mixture(const ParentArg& gate, const Family& component,
                     const std::vector<ParentArg>& component_parents,
                     std::optional<Plates> plates = std::nullopt, std::string label = {});

  /// Deterministic s = a^T b of two Gaussian vectors, exposing scalar
  /// Gaussian moments.
  NodeId add_sum_product(NodeId a, NodeId b, std::string label = {});

  /// Marks elements as observed. Missing elements (mask 0) stay latent and
  /// send no messages to their parents.
  void observe(NodeId node, const DataTensor& values, const std::optional<Mask>& mask = {});

  PlateBlocks collect_prior(NodeId node) const;
  PlateBlocks collect_child_messages(NodeId node) const;
  /// prior + likelihood_scale * child messages.
  PlateBlocks compute_posterior(NodeId node, double likelihood_scale = 1.0) const;
  /// Replaces the posterior and refreshes moments; returns the max absolute
  /// change in natural parameters.
  double set_posterior(NodeId node, PlateBlocks phi);
  double update_node(NodeId node, double likelihood_scale = 1.0);

  BroadcastPlan plan_broadcast(NodeId node) const;

  /// Evidence lower bound of the current posterior approximation.
  double elbo() const;

  void set_broadcasting(bool enabled);
  bool broadcasting() const noexcept { return broadcasting_; }
  void set_batch_weighting(std::optional<BatchWeighting> weighting);
  /// True when the node's plates carry the axis of `weighting`.
  bool carries_axis(NodeId node, const BatchWeighting& weighting) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  NodeKind kind(NodeId node) const { return at(node).kind; }
  const std::string& label(NodeId node) const { return at(node).label; }
  std::optional<NodeId> find(std::string_view label) const;
  const Plates& plates(NodeId node) const { return at(node).plates; }
  std::optional<Family> family(NodeId node) const { return at(node).family; }
  const MomentType& moment_type(NodeId node) const { return at(node).type; }
  const std::vector<NodeId>& parents(NodeId node) const { return at(node).parents; }

  bool is_stochastic(NodeId node) const;
  /// Any element observed.
  bool is_observed(NodeId node) const;
  bool is_fully_observed(NodeId node) const;
  /// Stochastic with at least one element not observed.
  bool is_latent(NodeId node) const;
  std::vector<NodeId> latent_nodes() const;

  const PlateBlocks& posterior(NodeId node) const;
  const PlateMoments& moments(NodeId node) const;
  /// Mask of elements that take part in messages and the bound.
  const BlockArray& message_mask(NodeId node) const;
  const BlockArray& observation_mask(NodeId node) const { return at(node).observed_mask; }

 private:
  struct ChildLink {
    NodeId child;
    std::size_t slot;
  };

  struct Node {
    NodeKind kind = NodeKind::Constant;
    std::string label;
    MomentType type{MomentKind::Fixed, 1};
    std::optional<Family> family;
    Plates plates;
    std::vector<NodeId> parents;  // mixture: parents[0] is the gate
    std::vector<ChildLink> children;
    std::size_t clusters = 0;  // mixture only

    PlateBlocks posterior;
    PlateMoments posterior_moments;
    PlateMoments moments;  // posterior moments with observed elements substituted
    bool observed = false;
    BlockArray observed_mask = BlockArray::scalar(0.0);
    PlateMoments observed_stats;
    std::uint64_t version = 0;

    // Caches.
    mutable BlockArray mask;
    mutable PlateMoments derived;  // sum-product moments
    mutable std::vector<std::uint64_t> derived_versions;
  };

  struct MixtureView {
    Plates extended;                     // (K,) ++ node plates
    std::vector<PlateMoments> parents;   // component parents aligned to `extended`
    BlockArray responsibilities;         // 1x1 over (K,) ++ gate plates
  };

  const Node& at(NodeId node) const;
  Node& at(NodeId node);
  NodeId resolve(const ParentArg& arg, const MomentType& slot_type, const std::string& context);
  NodeId push(Node node);
  void initialize_posterior(NodeId id);
  void refresh_moments(Node& node);

  std::vector<const PlateMoments*> parent_moments(const Node& node, std::size_t first = 0) const;
  MixtureView mixture_view(const Node& node) const;
  Plates aligned_component_plates(const Node& mixture, const Plates& parent) const;
  BlockArray expected_log_partition(const Node& node) const;
  // phi_k . u - E[A_k] + h on (K,) ++ plates.
  BlockArray mixture_scores(const Node& node, const MixtureView& view) const;
  PlateBlocks message_from(const ChildLink& link, NodeId parent) const;
  PlateBlocks weigh_message(PlateBlocks message, const Node& child, const Plates& parent_plates,
                            const Plates& full) const;
  bool carries(const Plates& plates) const;
  std::uint64_t stamp(NodeId node) const;
  const PlateMoments& sum_product_moments(const Node& node) const;
  void refresh_masks() const;

  std::vector<Node> nodes_;
  bool broadcasting_ = true;
  std::optional<BatchWeighting> batch_;
  BlockArray batch_weights_;
  std::uint64_t clock_ = 0;
  mutable bool masks_dirty_ = true;
};

}  // namespace vmp
