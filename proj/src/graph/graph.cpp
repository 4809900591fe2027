#include "vmp/graph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace vmp {

namespace {

bool is_scalar(const BlockArray& a, double value) {
  return a.count() == 1 && a.values()[0] == value;
}

BlockArray indicator(const BlockArray& a) {
  BlockArray out = a;
  for (double& v : out.values()) v = v > 0.0 ? 1.0 : 0.0;
  return out;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  return Plates(shape).str();
}

// Weighted sum of a 1x1 array over the full grid, skipping zero weights so
// that infinite terms of masked-out elements do not leak in.
double weighted_total(const BlockArray& values, const BlockArray& weights, const Plates& full) {
  const Plates grid = plate_broadcast(values.plates(), weights.plates());
  double sum = 0.0;
  for_each_on(
      grid,
      [&sum](std::size_t, const auto& v, const auto& w) {
        if (w(0, 0) != 0.0) sum += w(0, 0) * v(0, 0);
      },
      values, weights);
  const Plates g = grid.trimmed();
  const std::size_t n = std::max(g.ndim(), full.ndim());
  const Plates gp = g.padded(n);
  const Plates fp = full.padded(n);
  double multiplicity = 1.0;
  for (std::size_t axis = 0; axis < n; ++axis) {
    if (gp[axis] == 1) multiplicity *= static_cast<double>(fp[axis]);
  }
  return sum * multiplicity;
}

Plates tail(const Plates& p, std::size_t from) {
  return Plates(std::vector<std::size_t>(p.dims().begin() + static_cast<std::ptrdiff_t>(from),
                                         p.dims().end()));
}

// Re-expresses an array living on plates `own` = (K, rest) on (K,) ++ rest
// padded to `n` trailing axes.
BlockArray realign(const BlockArray& a, const Plates& own, std::size_t n) {
  const Plates b = a.plates().trimmed();
  if (b.ndim() == 0) return a.reshaped(Plates{});
  if (b.ndim() > own.ndim()) throw PlateMismatchError("parent moments exceed parent plates");
  const Plates full = b.padded(own.ndim());
  const Plates rest = tail(full, 1).trimmed();
  if (rest.ndim() > n) throw PlateMismatchError("component parent plates exceed mixture plates");
  return a.reshaped(rest.padded(n).prepend(full[0]));
}


// Element block k of the leading axis of an array on (K or 1,) ++ n axes.
BlockArray slice_leading(const BlockArray& a, std::size_t k, std::size_t n) {
  const Plates p = a.plates().trimmed().padded(n + 1);
  BlockArray out(tail(p, 1), a.rows(), a.cols());
  const std::size_t chunk = out.values().size();
  const std::size_t index = p[0] == 1 ? 0 : k;
  const auto src = a.values().subspan(index * chunk, chunk);
  std::copy(src.begin(), src.end(), out.values().begin());
  return out;
}

std::vector<const PlateMoments*> pointers(const std::vector<PlateMoments>& moments) {
  std::vector<const PlateMoments*> out;
  out.reserve(moments.size());
  for (const auto& m : moments) out.push_back(&m);
  return out;
}

PlateBlocks zeros_like(const PlateBlocks& blocks) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  for (const auto& b : blocks) shapes.emplace_back(b.rows(), b.cols());
  return kernels::zeros(shapes);
}

}  // namespace

const Graph::Node& Graph::at(NodeId node) const {
  if (node.index >= nodes_.size()) {
    throw ConfigurationError("unknown node id " + std::to_string(node.index));
  }
  return nodes_[node.index];
}

Graph::Node& Graph::at(NodeId node) {
  if (node.index >= nodes_.size()) {
    throw ConfigurationError("unknown node id " + std::to_string(node.index));
  }
  return nodes_[node.index];
}

NodeId Graph::push(Node node) {
  const NodeId id{nodes_.size()};
  if (node.label.empty()) node.label = "node" + std::to_string(id.index);
  for (std::size_t slot = 0; slot < node.parents.size(); ++slot) {
    nodes_[node.parents[slot].index].children.push_back({id, slot});
  }
  node.version = ++clock_;
  nodes_.push_back(std::move(node));
  masks_dirty_ = true;
  return id;
}

NodeId Graph::resolve(const ParentArg& arg, const MomentType& slot_type,
                      const std::string& context) {
  if (const NodeId* id = arg.node()) {
    if (id->index >= nodes_.size()) {
      throw CycleError(context + " refers to node " + std::to_string(id->index) +
                       ", which does not exist yet; parents must be created first");
    }
    const Node& parent = nodes_[id->index];
    if (!(parent.type == slot_type)) {
      throw SlotMismatchError(context + " accepts " + slot_type.name() + " moments, but '" +
                              parent.label + "' provides " + parent.type.name());
    }
    if (slot_type.kind == MomentKind::Fixed && parent.kind != NodeKind::Constant) {
      throw SlotMismatchError(context + " is a fixed hyperparameter and needs a constant");
    }
    return *id;
  }
  return add_constant(slot_type, *arg.literal());
}

NodeId Graph::add_constant(const MomentType& type, const BlockArray& values, std::string label) {
  Node node;
  node.kind = NodeKind::Constant;
  node.label = std::move(label);
  node.type = type;
  node.plates = values.plates();
  node.moments = kernels::constant_moments(type, values);
  return push(std::move(node));
}

NodeId Graph::add_constant(const MomentType& type, const Eigen::MatrixXd& value,
                           std::string label) {
  return add_constant(type, BlockArray::single(value), std::move(label));
}

NodeId Graph::add_stochastic(const Family& family, const std::vector<ParentArg>& parents,
                             std::optional<Plates> plates, std::string label) {
  const auto slots = parent_slots(family);
  if (parents.size() != slots.size()) {
    throw SlotMismatchError(family.name() + " takes " + std::to_string(slots.size()) +
                            " parents, got " + std::to_string(parents.size()));
  }
  Node node;
  node.kind = NodeKind::Stochastic;
  node.label = std::move(label);
  node.family = family;
  node.type = MomentType::of(family);
  Plates inferred;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const NodeId id = resolve(parents[i], slots[i], family.name() + " slot " + std::to_string(i));
    node.parents.push_back(id);
    inferred = plate_broadcast(inferred, nodes_[id.index].plates);
  }
  if (plates) {
    for (NodeId id : node.parents) {
      if (!broadcasts_to(nodes_[id.index].plates, *plates)) {
        throw PlateMismatchError("parent '" + nodes_[id.index].label + "' with plates " +
                                 nodes_[id.index].plates.str() + " does not broadcast to " +
                                 plates->str());
      }
    }
    node.plates = *plates;
  } else {
    node.plates = inferred;
  }
  const NodeId id = push(std::move(node));
  initialize_posterior(id);
  return id;
}

NodeId Graph::add_mixture(const ParentArg& gate, const Family& component,
                          const std::vector<ParentArg>& component_parents,
                          std::optional<Plates> plates, std::string label) {
  NodeId gate_id;
  if (const NodeId* id = gate.node()) {
    const Node& g = at(*id);
    if (g.type.kind != MomentKind::Probability) {
      throw SlotMismatchError("mixture gate must provide probability moments, got " +
                              g.type.name());
    }
    if (g.kind == NodeKind::Mixture) {
      throw ConfigurationError("mixture gate '" + g.label + "' is itself a mixture; nested "
                               "mixtures are not supported");
    }
    gate_id = *id;
  } else {
    const auto& value = *gate.literal();
    gate_id = add_constant({MomentKind::Probability, value.rows()}, value);
  }
  const auto clusters = static_cast<std::size_t>(nodes_[gate_id.index].type.dim);

  const auto slots = parent_slots(component);
  if (component_parents.size() != slots.size()) {
    throw SlotMismatchError(component.name() + " takes " + std::to_string(slots.size()) +
                            " parents, got " + std::to_string(component_parents.size()));
  }
  Node node;
  node.kind = NodeKind::Mixture;
  node.label = std::move(label);
  node.family = component;
  node.type = MomentType::of(component);
  node.clusters = clusters;
  node.parents.push_back(gate_id);
  Plates inferred = nodes_[gate_id.index].plates;
  std::vector<Plates> rests;
  for (std::size_t i = 0; i < component_parents.size(); ++i) {
    const NodeId id = resolve(component_parents[i], slots[i],
                              component.name() + " component slot " + std::to_string(i));
    const Node& parent = nodes_[id.index];
    Plates rest;
    if (parent.plates.ndim() > 0) {
      if (parent.plates[0] != clusters) {
        throw ClusterSizeMismatchError("component parent '" + parent.label + "' has plates " +
                                       parent.plates.str() + " but the gate has " +
                                       std::to_string(clusters) + " categories");
      }
      rest = tail(parent.plates, 1);
    }
    inferred = plate_broadcast(inferred, rest);
    rests.push_back(rest);
    node.parents.push_back(id);
  }
  if (plates) {
    if (!broadcasts_to(nodes_[gate_id.index].plates, *plates)) {
      throw PlateMismatchError("gate plates " + nodes_[gate_id.index].plates.str() +
                               " do not broadcast to " + plates->str());
    }
    for (const auto& rest : rests) {
      if (!broadcasts_to(rest, *plates)) {
        throw PlateMismatchError("component plates " + rest.str() + " do not broadcast to " +
                                 plates->str());
      }
    }
    node.plates = *plates;
  } else {
    node.plates = inferred;
  }
  const NodeId id = push(std::move(node));
  initialize_posterior(id);
  return id;
}

NodeId Graph::add_sum_product(NodeId a, NodeId b, std::string label) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.type.kind != MomentKind::Vector || nb.type.kind != MomentKind::Vector) {
    throw SlotMismatchError("sum-product operands must be Gaussian vectors");
  }
  if (na.type.dim != nb.type.dim) {
    throw DimensionMismatchError("sum-product operands have dimensions " +
                                 std::to_string(na.type.dim) + " and " +
                                 std::to_string(nb.type.dim));
  }
  if (a == b) throw ConfigurationError("sum-product operands must be distinct nodes");
  Node node;
  node.kind = NodeKind::SumProduct;
  node.label = std::move(label);
  node.type = {MomentKind::Vector, 1};
  node.plates = plate_broadcast(na.plates, nb.plates);
  node.parents = {a, b};
  return push(std::move(node));
}

void Graph::initialize_posterior(NodeId id) {
  Node& node = at(id);
  PlateBlocks phi = collect_prior(id);
  if (!broadcasting_) phi = kernels::expand(phi, node.plates);
  node.posterior_moments = kernels::moments(*node.family, phi);
  node.posterior = std::move(phi);
  refresh_moments(node);
}

void Graph::refresh_moments(Node& node) {
  if (!node.observed) {
    node.moments = node.posterior_moments;
    return;
  }
  if (is_scalar(node.observed_mask, 1.0)) {
    node.moments = node.observed_stats;
    return;
  }
  const auto& mask = node.observed_mask;
  PlateMoments merged;
  for (std::size_t b = 0; b < node.observed_stats.blocks.size(); ++b) {
    const auto& obs = node.observed_stats.blocks[b];
    merged.blocks.push_back(map_blocks_to(
        node.plates, obs.rows(), obs.cols(),
        [](auto& o, const auto& m, const auto& x, const auto& q) { o = m(0, 0) != 0.0 ? x : q; },
        mask, obs, node.posterior_moments.blocks[b]));
  }
  if (node.type.kind == MomentKind::Vector) {
    const auto& cov = node.posterior_moments.covariance;
    merged.covariance = map_blocks_to(
        node.plates, cov.rows(), cov.cols(),
        [](auto& o, const auto& m, const auto& c) {
          if (m(0, 0) != 0.0) {
            o.setZero();
          } else {
            o = c;
          }
        },
        mask, cov);
  }
  node.moments = std::move(merged);
}

void Graph::observe(NodeId id, const DataTensor& data, const std::optional<Mask>& mask) {
  Node& node = at(id);
  if (node.kind != NodeKind::Stochastic && node.kind != NodeKind::Mixture) {
    throw ConfigurationError("only stochastic nodes can be observed ('" + node.label + "')");
  }
  const Family& family = *node.family;
  std::vector<std::size_t> expected = node.plates.dims();
  const auto event = family.event_shape();
  expected.insert(expected.end(), event.begin(), event.end());
  if (data.shape != expected) {
    throw ShapeError("data for '" + node.label + "' has shape " + shape_str(data.shape) +
                     ", expected " + shape_str(expected));
  }
  const std::size_t count = node.plates.size();
  const std::size_t stride = family.event_size();
  if (data.values.size() != count * stride) {
    throw ShapeError("data for '" + node.label + "' holds " + std::to_string(data.values.size()) +
                     " values, expected " + std::to_string(count * stride));
  }
  if (mask) {
    if (mask->shape != node.plates.dims()) {
      throw ShapeError("mask for '" + node.label + "' has shape " + shape_str(mask->shape) +
                       ", expected " + node.plates.str());
    }
    if (mask->observed.size() != count) {
      throw ShapeError("mask for '" + node.label + "' has the wrong number of entries");
    }
  }

  const Eigen::Index d = family.dim();
  const Eigen::Index rows = family.kind() == FamilyKind::Gamma ||
                                    family.kind() == FamilyKind::Categorical
                                ? 1
                                : d;
  const Eigen::Index cols = family.kind() == FamilyKind::Wishart ? d : 1;
  BlockArray values(node.plates, rows, cols);
  BlockArray flags(node.plates, 1, 1);
  bool any = false;
  for (std::size_t e = 0; e < count; ++e) {
    const bool seen = !mask || mask->observed[e] != 0;
    flags.at(e)(0, 0) = seen ? 1.0 : 0.0;
    any = any || seen;
    auto v = values.at(e);
    if (seen) {
      const double* src = data.values.data() + e * stride;
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) v(i, j) = src[i * cols + j];
      }
      continue;
    }
    // Placeholder inside the support; never read.
    switch (family.kind()) {
      case FamilyKind::Gaussian:
      case FamilyKind::Categorical:
        v.setZero();
        break;
      case FamilyKind::Gamma:
        v.setOnes();
        break;
      case FamilyKind::Wishart:
        v.setIdentity();
        break;
      case FamilyKind::Dirichlet:
        v.setConstant(1.0 / static_cast<double>(d));
        break;
    }
  }
  PlateMoments stats;
  try {
    stats = kernels::statistics(family, values);
  } catch (const SupportError& e) {
    throw SupportError("data for '" + node.label + "': " + e.what());
  }
  node.observed = any;
  node.observed_mask = any ? compress_uniform(flags) : BlockArray::scalar(0.0);
  node.observed_stats = any ? std::move(stats) : PlateMoments{};
  refresh_moments(node);
  node.version = ++clock_;
  masks_dirty_ = true;
}

std::vector<const PlateMoments*> Graph::parent_moments(const Node& node, std::size_t first) const {
  std::vector<const PlateMoments*> out;
  for (std::size_t i = first; i < node.parents.size(); ++i) {
    out.push_back(&moments(node.parents[i]));
  }
  return out;
}

Plates Graph::aligned_component_plates(const Node& mixture, const Plates& parent) const {
  if (parent.ndim() == 0) return parent;
  return tail(parent, 1).trimmed().padded(mixture.plates.ndim()).prepend(parent[0]);
}

Graph::MixtureView Graph::mixture_view(const Node& node) const {
  MixtureView view;
  const std::size_t n = node.plates.ndim();
  view.extended = node.plates.prepend(node.clusters);
  for (std::size_t i = 1; i < node.parents.size(); ++i) {
    const Node& parent = nodes_[node.parents[i].index];
    const PlateMoments& source = moments(node.parents[i]);
    PlateMoments aligned;
    for (const auto& block : source.blocks) {
      aligned.blocks.push_back(realign(block, parent.plates, n));
    }
    if (!source.covariance.empty()) {
      aligned.covariance = realign(source.covariance, parent.plates, n);
    }
    view.parents.push_back(std::move(aligned));
  }
  const BlockArray& probs = moments(node.parents[0]).blocks[0];
  view.responsibilities = lift_event_axis(probs.reshaped(probs.plates().trimmed()), n);
  return view;
}

BlockArray Graph::expected_log_partition(const Node& node) const {
  if (node.kind == NodeKind::Mixture) {
    const MixtureView view = mixture_view(node);
    const auto parents = pointers(view.parents);
    const BlockArray per_cluster = kernels::expected_log_partition(*node.family, parents);
    return sum_to(weighted(per_cluster, view.responsibilities), view.extended, node.plates);
  }
  return kernels::expected_log_partition(*node.family, parent_moments(node));
}

BlockArray Graph::mixture_scores(const Node& node, const MixtureView& view) const {
  const auto parents = pointers(view.parents);
  const PlateBlocks phi = kernels::prior_natural(*node.family, parents);
  const BlockArray log_partition = kernels::expected_log_partition(*node.family, parents);
  const double h = log_base_measure(*node.family);
  return map_blocks(
      1, 1, [h](auto& o, const auto& c, const auto& a) { o(0, 0) = c(0, 0) - a(0, 0) + h; },
      kernels::dot(phi, node.moments.blocks), log_partition);
}

PlateBlocks Graph::collect_prior(NodeId id) const {
  const Node& node = at(id);
  switch (node.kind) {
    case NodeKind::Stochastic:
      return kernels::prior_natural(*node.family, parent_moments(node));
    case NodeKind::Mixture: {
      const MixtureView view = mixture_view(node);
      const auto parents = pointers(view.parents);
      const PlateBlocks per_cluster = kernels::prior_natural(*node.family, parents);
      return kernels::sum_to(kernels::weighted(per_cluster, view.responsibilities),
                             view.extended, node.plates);
    }
    default:
      throw ConfigurationError("'" + node.label + "' has no prior distribution");
  }
}

bool Graph::carries(const Plates& plates) const {
  if (!batch_) return false;
  const std::size_t axis = batch_->axis_from_end;
  return plates.ndim() >= axis && plates[plates.ndim() - axis] == batch_->weights.size();
}

bool Graph::carries_axis(NodeId node, const BatchWeighting& weighting) const {
  const Plates& plates = at(node).plates;
  const std::size_t axis = weighting.axis_from_end;
  return plates.ndim() >= axis && plates[plates.ndim() - axis] == weighting.weights.size();
}

PlateBlocks Graph::weigh_message(PlateBlocks message, const Node& child,
                                 const Plates& parent_plates, const Plates& full) const {
  if (child.kind != NodeKind::SumProduct) {
    const BlockArray& mask = child.mask;
    if (is_scalar(mask, 0.0)) return zeros_like(message);
    if (!is_scalar(mask, 1.0)) message = kernels::weighted(message, mask);
  }
  if (carries(child.plates) && !carries(parent_plates)) {
    message = kernels::weighted(message, batch_weights_);
  }
  if (!broadcasting_) message = kernels::expand(message, full);
  return message;
}

PlateBlocks Graph::message_from(const ChildLink& link, NodeId parent_id) const {
  const Node& child = nodes_[link.child.index];
  const Node& parent = nodes_[parent_id.index];
  const std::size_t slot = link.slot;
  switch (child.kind) {
    case NodeKind::Stochastic: {
      PlateBlocks m = kernels::parent_message(*child.family, slot, child.moments,
                                              parent_moments(child));
      m = weigh_message(std::move(m), child, parent.plates, child.plates);
      return kernels::sum_to(m, child.plates, parent.plates);
    }
    case NodeKind::SumProduct: {
      const PlateBlocks incoming = collect_child_messages(link.child);
      const PlateMoments& other = moments(child.parents[1 - slot]);
      const Eigen::Index d = other.blocks[0].rows();
      PlateBlocks m;
      m.push_back(map_blocks(
          d, 1, [](auto& o, const auto& g, const auto& mean) { o = g(0, 0) * mean; },
          incoming[0], other.blocks[0]));
      m.push_back(map_blocks(
          d, d, [](auto& o, const auto& g, const auto& second) { o = g(0, 0) * second; },
          incoming[1], other.blocks[1]));
      m = weigh_message(std::move(m), child, parent.plates, child.plates);
      return kernels::sum_to(m, child.plates, parent.plates);
    }
    case NodeKind::Mixture: {
      const MixtureView view = mixture_view(child);
      const std::size_t n = child.plates.ndim();
      if (slot == 0) {
        BlockArray score = mixture_scores(child, view);
        std::vector<std::size_t> lead(n + 1, 1);
        lead[0] = child.clusters;
        PlateBlocks m{std::move(score)};
        m = weigh_message(std::move(m), child, parent.plates, view.extended);
        m[0] = expand(m[0], plate_broadcast(m[0].plates(), Plates(lead)));
        const BlockArray lowered = lower_plate_axis(m[0].reshaped(m[0].plates().padded(n + 1)));
        return kernels::sum_to({lowered}, child.plates, parent.plates);
      }
      // One cluster at a time keeps the (K, plates) intermediates small.
      const bool shared = parent.plates.ndim() == 0;
      const Plates target = shared ? Plates{} : tail(parent.plates, 1);
      PlateBlocks total;
      std::vector<PlateBlocks> per_cluster;
      for (std::size_t k = 0; k < child.clusters; ++k) {
        std::vector<PlateMoments> sliced;
        for (const auto& pm : view.parents) {
          PlateMoments one;
          for (const auto& block : pm.blocks) one.blocks.push_back(slice_leading(block, k, n));
          if (!pm.covariance.empty()) one.covariance = slice_leading(pm.covariance, k, n);
          sliced.push_back(std::move(one));
        }
        PlateBlocks m = kernels::parent_message(*child.family, slot - 1, child.moments,
                                                pointers(sliced));
        m = kernels::weighted(m, slice_leading(view.responsibilities, k, n));
        m = weigh_message(std::move(m), child, target, child.plates);
        m = kernels::sum_to(m, child.plates, target);
        if (shared) {
          total = total.empty() ? std::move(m) : kernels::add(total, m);
        } else {
          per_cluster.push_back(std::move(m));
        }
      }
      if (shared) return total;
      PlateBlocks stacked;
      for (std::size_t b = 0; b < per_cluster.front().size(); ++b) {
        const BlockArray& first = per_cluster.front()[b];
        BlockArray out(first.plates().prepend(child.clusters), first.rows(), first.cols());
        const std::size_t chunk = first.values().size();
        for (std::size_t k = 0; k < child.clusters; ++k) {
          const auto src = per_cluster[k][b].values();
          std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(k * chunk));
        }
        stacked.push_back(std::move(out));
      }
      return stacked;
    }
    case NodeKind::Constant:
      break;
  }
  throw ConfigurationError("constants send no messages");
}

PlateBlocks Graph::collect_child_messages(NodeId id) const {
  const Node& node = at(id);
  if (node.kind == NodeKind::Constant) {
    throw ConfigurationError("constant '" + node.label + "' receives no messages");
  }
  refresh_masks();
  PlateBlocks total = kernels::zeros(node.type.block_shapes());
  for (const auto& link : node.children) {
    total = kernels::add(total, message_from(link, id));
  }
  return total;
}

PlateBlocks Graph::compute_posterior(NodeId id, double likelihood_scale) const {
  const Node& node = at(id);
  if (node.kind != NodeKind::Stochastic && node.kind != NodeKind::Mixture) {
    throw ConfigurationError("'" + node.label + "' has no posterior");
  }
  const PlateBlocks prior = collect_prior(id);
  PlateBlocks messages = collect_child_messages(id);
  if (likelihood_scale != 1.0) messages = kernels::scaled(messages, likelihood_scale);
  PlateBlocks phi = kernels::add(prior, messages);
  if (!broadcasting_) phi = kernels::expand(phi, node.plates);
  return phi;
}

double Graph::set_posterior(NodeId id, PlateBlocks phi) {
  Node& node = at(id);
  if (node.kind != NodeKind::Stochastic && node.kind != NodeKind::Mixture) {
    throw ConfigurationError("'" + node.label + "' has no posterior");
  }
  const auto shapes = node.family->block_shapes();
  if (phi.size() != shapes.size()) {
    throw ShapeError("posterior of '" + node.label + "' needs " + std::to_string(shapes.size()) +
                     " blocks");
  }
  for (std::size_t b = 0; b < shapes.size(); ++b) {
    if (phi[b].rows() != shapes[b].first || phi[b].cols() != shapes[b].second) {
      throw ShapeError("posterior block " + std::to_string(b) + " of '" + node.label +
                       "' has the wrong shape");
    }
    if (!broadcasts_to(phi[b].plates(), node.plates)) {
      throw PlateMismatchError("posterior block plates " + phi[b].plates().str() +
                               " do not fit node plates " + node.plates.str());
    }
  }
  PlateMoments updated;
  try {
    updated = kernels::moments(*node.family, phi);
  } catch (const DomainError& e) {
    throw NumericalError("update of '" + node.label + "' failed: " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("update of '" + node.label + "' failed: " + e.what());
  }
  const double change = kernels::max_abs_difference(phi, node.posterior);
  node.posterior = std::move(phi);
  node.posterior_moments = std::move(updated);
  refresh_moments(node);
  node.version = ++clock_;
  return change;
}

double Graph::update_node(NodeId id, double likelihood_scale) {
  if (!is_latent(id)) {
    throw ConfigurationError("'" + at(id).label + "' has no latent elements to update");
  }
  return set_posterior(id, compute_posterior(id, likelihood_scale));
}

BroadcastPlan Graph::plan_broadcast(NodeId id) const {
  const Node& node = at(id);
  const PlateBlocks phi = compute_posterior(id);
  BroadcastPlan plan;
  plan.plates = node.plates;
  const std::size_t n = node.plates.ndim();
  for (const auto& block : phi) {
    const Plates p = block.plates().trimmed().padded(n);
    std::vector<AxisMode> modes(n, AxisMode::Expanded);
    for (std::size_t axis = 0; axis < n; ++axis) {
      if (broadcasting_ && p[axis] == 1) modes[axis] = AxisMode::Shared;
    }
    plan.blocks.push_back(std::move(modes));
  }
  return plan;
}

double Graph::elbo() const {
  refresh_masks();
  double bound = 0.0;
  for (const Node& node : nodes_) {
    if (node.kind != NodeKind::Stochastic && node.kind != NodeKind::Mixture) continue;
    const BlockArray& mask = node.mask;
    if (is_scalar(mask, 0.0)) continue;
    const NodeId id{static_cast<std::size_t>(&node - nodes_.data())};
    BlockArray cross;
    if (node.kind == NodeKind::Mixture) {
      const MixtureView view = mixture_view(node);
      cross = sum_to(weighted(mixture_scores(node, view), view.responsibilities), view.extended,
                     node.plates);
    } else {
      const double h = log_base_measure(*node.family);
      cross = map_blocks(
          1, 1, [h](auto& o, const auto& c, const auto& a) { o(0, 0) = c(0, 0) - a(0, 0) + h; },
          kernels::dot(collect_prior(id), node.moments.blocks), expected_log_partition(node));
    }
    bound += weighted_total(cross, mask, node.plates);

    const BlockArray latent = map_blocks(
        1, 1, [](auto& o, const auto& m, const auto& x) { o(0, 0) = m(0, 0) - x(0, 0); }, mask,
        node.observed_mask);
    const auto values = latent.values();
    if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) continue;
    const BlockArray h_q = kernels::entropy(*node.family, node.posterior, node.posterior_moments);
    bound += weighted_total(h_q, latent, node.plates);
  }
  return bound;
}

std::uint64_t Graph::stamp(NodeId id) const {
  const Node& node = nodes_[id.index];
  if (node.kind != NodeKind::SumProduct) return node.version;
  return std::max(stamp(node.parents[0]), stamp(node.parents[1]));
}

const PlateMoments& Graph::sum_product_moments(const Node& node) const {
  const std::vector<std::uint64_t> key{stamp(node.parents[0]), stamp(node.parents[1]),
                                       broadcasting_ ? 1u : 0u};
  if (node.derived_versions == key) return node.derived;
  const PlateMoments& a = moments(node.parents[0]);
  const PlateMoments& b = moments(node.parents[1]);
  const auto& ma = a.blocks[0];
  const auto& mb = b.blocks[0];
  const auto& ca = a.covariance;
  const auto& cb = b.covariance;

  BlockArray first = map_blocks(
      1, 1, [](auto& o, const auto& x, const auto& y) { o(0, 0) = x.col(0).dot(y.col(0)); }, ma,
      mb);
  BlockArray second = map_blocks(
      1, 1, [](auto& o, const auto& s) { o(0, 0) = s(0, 0) * s(0, 0); }, first);
  // tr(Ca Cb) + mb' Ca mb + ma' Cb ma; zero covariances are skipped.
  const auto all_zero = [](const BlockArray& c) {
    const auto v = c.values();
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  const bool zero_a = all_zero(ca);
  const bool zero_b = all_zero(cb);
  if (!zero_a && !zero_b) {
    second = add(second, map_blocks(
                             1, 1,
                             [](auto& o, const auto& x, const auto& y) {
                               o(0, 0) = x.cwiseProduct(y).sum();
                             },
                             ca, cb));
  }
  if (!zero_a) {
    second = add(second, map_blocks(
                             1, 1,
                             [](auto& o, const auto& c, const auto& m) {
                               o(0, 0) = m.col(0).dot(c * m.col(0));
                             },
                             ca, mb));
  }
  if (!zero_b) {
    second = add(second, map_blocks(
                             1, 1,
                             [](auto& o, const auto& c, const auto& m) {
                               o(0, 0) = m.col(0).dot(c * m.col(0));
                             },
                             cb, ma));
  }
  PlateMoments out;
  out.covariance = map_blocks(
      1, 1, [](auto& o, const auto& s2, const auto& s) { o(0, 0) = s2(0, 0) - s(0, 0) * s(0, 0); },
      second, first);
  out.blocks.push_back(std::move(first));
  out.blocks.push_back(std::move(second));
  node.derived = std::move(out);
  node.derived_versions = key;
  return node.derived;
}

void Graph::refresh_masks() const {
  if (!masks_dirty_) return;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.kind == NodeKind::Constant) {
      node.mask = BlockArray::scalar(1.0);
      continue;
    }
    BlockArray base = node.observed ? node.observed_mask : BlockArray::scalar(0.0);
    for (const auto& link : node.children) {
      const Node& child = nodes_[link.child.index];
      if (is_scalar(child.mask, 0.0)) continue;
      BlockArray reach;
      if (child.kind == NodeKind::Mixture && link.slot >= 1) {
        if (node.plates.ndim() == 0) {
          reach = BlockArray::scalar(1.0);
        } else {
          reach = sum_to(child.mask, child.plates, tail(node.plates, 1));
          reach = reach.reshaped(reach.plates().prepend(1));
        }
      } else {
        reach = sum_to(child.mask, child.plates, node.plates);
      }
      base = map_blocks(
          1, 1,
          [](auto& o, const auto& x, const auto& r) {
            o(0, 0) = std::max(x(0, 0), r(0, 0) > 0.0 ? 1.0 : 0.0);
          },
          base, reach);
    }
    node.mask = compress_uniform(indicator(base));
  }
  masks_dirty_ = false;
}

void Graph::set_broadcasting(bool enabled) {
  if (enabled == broadcasting_) return;
  broadcasting_ = enabled;
  if (enabled) return;
  for (auto& node : nodes_) {
    if (node.kind != NodeKind::Stochastic && node.kind != NodeKind::Mixture) continue;
    node.posterior = kernels::expand(node.posterior, node.plates);
    node.posterior_moments = kernels::moments(*node.family, node.posterior);
    refresh_moments(node);
    node.version = ++clock_;
  }
}

void Graph::set_batch_weighting(std::optional<BatchWeighting> weighting) {
  if (weighting) {
    if (weighting->weights.empty() || weighting->axis_from_end == 0) {
      throw ConfigurationError("batch weighting needs a plate axis and at least one weight");
    }
    std::vector<std::size_t> dims(weighting->axis_from_end, 1);
    dims[0] = weighting->weights.size();
    BlockArray w{Plates(dims), 1, 1};
    std::copy(weighting->weights.begin(), weighting->weights.end(), w.values().begin());
    batch_weights_ = std::move(w);
  } else {
    batch_weights_ = BlockArray{};
  }
  batch_ = std::move(weighting);
}

std::optional<NodeId> Graph::find(std::string_view label) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].label == label) return NodeId{i};
  }
  return std::nullopt;
}

bool Graph::is_stochastic(NodeId id) const {
  const auto k = at(id).kind;
  return k == NodeKind::Stochastic || k == NodeKind::Mixture;
}

bool Graph::is_observed(NodeId id) const { return at(id).observed; }

bool Graph::is_fully_observed(NodeId id) const {
  const Node& node = at(id);
  return node.observed && is_scalar(node.observed_mask, 1.0);
}

bool Graph::is_latent(NodeId id) const { return is_stochastic(id) && !is_fully_observed(id); }

std::vector<NodeId> Graph::latent_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (is_latent(NodeId{i})) out.push_back(NodeId{i});
  }
  return out;
}

const PlateBlocks& Graph::posterior(NodeId id) const {
  const Node& node = at(id);
  if (node.kind != NodeKind::Stochastic && node.kind != NodeKind::Mixture) {
    throw ConfigurationError("'" + node.label + "' has no posterior");
  }
  return node.posterior;
}

const PlateMoments& Graph::moments(NodeId id) const {
  const Node& node = at(id);
  if (node.kind == NodeKind::SumProduct) return sum_product_moments(node);
  return node.moments;
}

const BlockArray& Graph::message_mask(NodeId id) const {
  refresh_masks();
  return at(id).mask;
}

}  // namespace vmp
