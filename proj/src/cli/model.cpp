#include <algorithm>
#include <cmath>
#include <limits>

#include "vmp/cli.hpp"

namespace vmp::cli {

namespace {

using nlohmann::json;

std::string where(std::size_t i, const std::string& name) {
  return "nodes[" + std::to_string(i) + "] (\"" + name + "\")";
}

ParentArg literal_arg(const Literal& l, const std::string& context) {
  switch (l.shape.size()) {
    case 0:
      return l.values[0];
    case 1:
      return Eigen::Map<const Eigen::VectorXd>(l.values.data(),
                                               static_cast<Eigen::Index>(l.shape[0]));
    case 2: {
      const auto rows = static_cast<Eigen::Index>(l.shape[0]);
      const auto cols = static_cast<Eigen::Index>(l.shape[1]);
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = l.values[static_cast<std::size_t>(r * cols + c)];
      }
      return m;
    }
    default:
      throw ValidationError(context + ": literal parents have at most two axes; "
                                      "declare a constant node for plated values");
  }
}

std::optional<Eigen::Index> parent_dim(const ParentRef& parent, const Model& model) {
  if (const auto* name = std::get_if<std::string>(&parent)) {
    return model.graph.moment_type(model.ids.at(*name)).dim;
  }
  const auto& literal = std::get<Literal>(parent);
  if (literal.shape.empty()) return 1;
  if (literal.shape.size() <= 2) return static_cast<Eigen::Index>(literal.shape[0]);
  return std::nullopt;
}

Family resolve_family(const NodeSpec& node, std::span<const ParentRef> parents, const Model& model,
                      const std::string& context) {
  const FamilyKind kind = *node.family;
  if (kind == FamilyKind::Gamma) return Family::gamma();
  std::optional<Eigen::Index> d = node.dim;
  if (!d) {
    // Slots whose moment dimension equals the family's.
    const std::vector<std::size_t> slots =
        kind == FamilyKind::Gaussian ? std::vector<std::size_t>{0, 1}
        : kind == FamilyKind::Wishart ? std::vector<std::size_t>{1}
                                      : std::vector<std::size_t>{0};
    for (std::size_t s : slots) {
      if (s < parents.size() && (d = parent_dim(parents[s], model))) break;
    }
    if (!d) throw ValidationError(context + ": cannot infer the dimension; set \"dim\"");
  }
  switch (kind) {
    case FamilyKind::Gaussian:
      return Family::gaussian(*d);
    case FamilyKind::Wishart:
      return Family::wishart(*d);
    case FamilyKind::Dirichlet:
      return Family::dirichlet(*d);
    case FamilyKind::Categorical:
      return Family::categorical(*d);
    case FamilyKind::Gamma:
      break;
  }
  return Family::gamma();
}

BlockArray constant_values(const NodeSpec& node) {
  const auto [rows, cols] = node.constant_type->block_shapes()[0];
  BlockArray values(*node.plates, rows, cols);
  const auto per = static_cast<std::size_t>(rows * cols);
  const bool scalar_event = node.constant.values.size() == values.count();
  for (std::size_t e = 0; e < values.count(); ++e) {
    auto m = values.at(e);
    if (scalar_event) {
      // A plated scalar precision or fixed value.
      m(0, 0) = node.constant.values[e];
      continue;
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = node.constant.values[e * per + static_cast<std::size_t>(r * cols + c)];
      }
    }
  }
  return values;
}

json nested(const double* data, const std::vector<std::size_t>& shape, std::size_t axis,
            std::size_t stride) {
  if (axis == shape.size()) {
    return std::isfinite(*data) ? json(*data) : json(nullptr);
  }
  json out = json::array();
  const std::size_t inner = stride / shape[axis];
  for (std::size_t i = 0; i < shape[axis]; ++i) {
    out.push_back(nested(data + i * inner, shape, axis + 1, inner));
  }
  return out;
}

std::vector<std::size_t> event_of(Eigen::Index rows, Eigen::Index cols) {
  if (cols > 1) return {static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
  if (rows > 1) return {static_cast<std::size_t>(rows)};
  return {};
}

// Blocks as nested arrays of shape plates ++ block shape.
json block_json(const BlockArray& block, const Plates& plates) {
  const BlockArray full = expand(block, plates);
  std::vector<double> flat;
  flat.reserve(full.values().size());
  for (std::size_t e = 0; e < full.count(); ++e) {
    const auto m = full.at(e);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    }
  }
  std::vector<std::size_t> shape = plates.dims();
  const auto event = event_of(full.rows(), full.cols());
  shape.insert(shape.end(), event.begin(), event.end());
  return nested(flat.data(), shape, 0, flat.size());
}

void flatten(const json& j, std::vector<double>& out, const std::string& context) {
  if (j.is_array()) {
    for (const auto& item : j) flatten(item, out, context);
  } else if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_null()) {
    out.push_back(-std::numeric_limits<double>::infinity());
  } else {
    throw ValidationError(context + ": expected numbers");
  }
}

}  // namespace

Model build_model(const ModelSpec& spec, bool broadcasting) {
  Model model;
  Graph& g = model.graph;
  g.set_broadcasting(broadcasting);
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const NodeSpec& node = spec.nodes[i];
    const std::string context = where(i, node.name);
    try {
      std::vector<ParentArg> args;
      for (std::size_t s = 0; s < node.parents.size(); ++s) {
        const auto& p = node.parents[s];
        if (const auto* name = std::get_if<std::string>(&p)) {
          args.emplace_back(model.ids.at(*name));
        } else {
          args.push_back(literal_arg(std::get<Literal>(p),
                                     context + ".parents[" + std::to_string(s) + "]"));
        }
      }
      NodeId id;
      switch (node.kind) {
        case SpecKind::Constant:
          id = g.add_constant(*node.constant_type, constant_values(node), node.name);
          break;
        case SpecKind::Stochastic:
          id = g.add_stochastic(resolve_family(node, node.parents, model, context), args,
                                node.plates, node.name);
          break;
        case SpecKind::Mixture: {
          const std::span<const ParentRef> components(node.parents.begin() + 1, node.parents.end());
          id = g.add_mixture(args[0], resolve_family(node, components, model, context),
                             std::vector<ParentArg>(args.begin() + 1, args.end()), node.plates,
                             node.name);
          break;
        }
        case SpecKind::SumProduct: {
          const NodeId* a = args[0].node();
          const NodeId* b = args[1].node();
          if (a == nullptr || b == nullptr) {
            throw ValidationError(context + ": sum_product parents must be named nodes");
          }
          id = g.add_sum_product(*a, *b, node.name);
          break;
        }
      }
      model.ids.emplace(node.name, id);
      if (node.random_init) {
        if (!g.is_latent(id)) throw ValidationError(context + ": only latent nodes can start random");
        model.random_init.push_back(id);
      }
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ValidationError(context + ": " + e.what());
    }
  }
  for (const auto& name : spec.engine.order) model.order.push_back(model.ids.at(name));
  return model;
}

void bind_data(Model& model, const std::string& node, const CsvData& data) {
  const auto it = model.ids.find(node);
  if (it == model.ids.end()) throw ValidationError("unknown node \"" + node + "\"");
  const NodeId id = it->second;
  const auto family = model.graph.family(id);
  if (!family) throw ValidationError("\"" + node + "\" is not a stochastic node");
  const Plates& plates = model.graph.plates(id);
  const std::size_t stride = family->event_size();
  const std::size_t cols = data.tensor.shape.at(1);
  if (data.tensor.values.size() != plates.size() * stride || cols % stride != 0) {
    throw ShapeError("data for \"" + node + "\" is " + std::to_string(data.tensor.shape[0]) +
                     " x " + std::to_string(cols) + " but the node holds " +
                     std::to_string(plates.size()) + " values of size " + std::to_string(stride) +
                     " (plates " + plates.str() + ")");
  }
  DataTensor tensor{plates.dims(), data.tensor.values};
  const auto event = family->event_shape();
  tensor.shape.insert(tensor.shape.end(), event.begin(), event.end());
  Mask mask{plates.dims(), std::vector<std::uint8_t>(plates.size(), 1)};
  bool complete = true;
  for (std::size_t e = 0; e < plates.size(); ++e) {
    for (std::size_t k = 0; k < stride; ++k) {
      if (data.mask.observed[e * stride + k] == 0) mask.observed[e] = 0;
    }
    complete = complete && mask.observed[e] != 0;
  }
  model.graph.observe(id, tensor, complete ? std::nullopt : std::optional<Mask>(std::move(mask)));
}

json posterior_dump(const Model& model, const FitReport& report) {
  const Graph& g = model.graph;
  json nodes = json::object();
  for (const auto& [name, id] : model.ids) {
    if (!g.is_latent(id)) continue;
    const Plates& plates = g.plates(id);
    json natural = json::array();
    for (const auto& block : g.posterior(id)) natural.push_back(block_json(block, plates));
    json moments = json::array();
    for (const auto& block : g.moments(id).blocks) moments.push_back(block_json(block, plates));
    nodes[name] = {{"family", g.family(id)->name()},
                   {"dim", g.family(id)->dim()},
                   {"plates", plates.dims()},
                   {"natural", std::move(natural)},
                   {"moments", std::move(moments)}};
  }
  return {{"nodes", std::move(nodes)},
          {"initial_elbo", report.initial_elbo},
          {"elbo_trace", report.elbo_trace},
          {"sweeps", report.sweeps},
          {"converged", report.converged},
          {"ms_per_sweep", report.sweep_ms}};
}

void apply_dump(Model& model, const json& dump) {
  if (!dump.is_object() || !dump.contains("nodes") || !dump["nodes"].is_object()) {
    throw ValidationError("dump: missing \"nodes\"");
  }
  Graph& g = model.graph;
  for (const auto& [name, id] : model.ids) {
    if (!g.is_latent(id)) continue;
    const std::string context = "dump.nodes." + name;
    if (!dump["nodes"].contains(name)) throw ValidationError(context + ": missing");
    const json& natural = dump["nodes"][name]["natural"];
    const Plates& plates = g.plates(id);
    const auto shapes = g.family(id)->block_shapes();
    if (!natural.is_array() || natural.size() != shapes.size()) {
      throw ValidationError(context + ".natural: expected " + std::to_string(shapes.size()) +
                            " blocks");
    }
    PlateBlocks phi;
    for (std::size_t b = 0; b < shapes.size(); ++b) {
      const auto [rows, cols] = shapes[b];
      std::vector<double> flat;
      flatten(natural[b], flat, context);
      if (flat.size() != plates.size() * static_cast<std::size_t>(rows * cols)) {
        throw ValidationError(context + ".natural[" + std::to_string(b) + "]: wrong size");
      }
      BlockArray block(plates, rows, cols);
      std::size_t k = 0;
      for (std::size_t e = 0; e < plates.size(); ++e) {
        auto m = block.at(e);
        for (Eigen::Index r = 0; r < rows; ++r) {
          for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
        }
      }
      phi.push_back(compress_uniform(block));
    }
    g.set_posterior(id, std::move(phi));
  }
}

FitReport fit_model(Model& model, const EngineSpec& engine) {
  Graph& g = model.graph;
  for (std::size_t i = 0; i < model.random_init.size(); ++i) {
    initialize_from_random(g, model.random_init[i], engine.seed + i);
  }
  // An explicit order cannot anticipate missing cells; observed nodes that
  // turn out partially latent are updated last.
  std::vector<NodeId> order = model.order;
  if (!order.empty()) {
    for (NodeId id : g.latent_nodes()) {
      if (g.is_observed(id) && std::find(order.begin(), order.end(), id) == order.end()) {
        order.push_back(id);
      }
    }
  }
  FitOptions options{.order = std::move(order),
                     .max_sweeps = engine.max_sweeps,
                     .tolerance = engine.tolerance,
                     .seed = engine.seed};
  switch (engine.mode) {
    case Mode::Vb:
      return run_vb(g, options);
    case Mode::Annealed:
      return run_annealed(g, options, {engine.beta});
    case Mode::Svi: {
      SviSchedule schedule;
      schedule.axis_from_end = engine.axis_from_end;
      schedule.batch_size = engine.batch_size;
      schedule.delay = engine.delay;
      schedule.forgetting = engine.forgetting;
      for (const auto& name : engine.globals) schedule.globals.push_back(model.ids.at(name));
      return run_svi(g, options, schedule);
    }
  }
  return {};
}

}  // namespace vmp::cli
