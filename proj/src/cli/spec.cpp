#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "vmp/cli.hpp"

namespace vmp::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ValidationError(path + ": " + message);
}

std::string type_name(const json& j) { return j.type_name(); }

const json& require(const json& object, const char* key, const std::string& path) {
  const auto it = object.find(key);
  if (it == object.end()) fail(path, std::string("missing required key \"") + key + "\"");
  return *it;
}

void check_keys(const json& object, std::initializer_list<const char*> allowed,
                const std::string& path) {
  if (!object.is_object()) fail(path, "expected an object, got " + type_name(object));
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(path, "unknown key \"" + key + "\"");
  }
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string, got " + type_name(j));
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number, got " + type_name(j));
  return j.get<double>();
}

std::uint64_t as_count(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) fail(path, "expected a non-negative integer, got " + j.dump());
  return j.get<std::uint64_t>();
}

std::vector<std::string> as_names(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of node names");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_string(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Literal parse_literal(const json& j, const std::string& path) {
  Literal out;
  if (j.is_number()) {
    out.values.push_back(j.get<double>());
    return out;
  }
  if (!j.is_array() || j.empty()) fail(path, "expected a number or a non-empty array");
  std::vector<Literal> items;
  for (std::size_t i = 0; i < j.size(); ++i) {
    items.push_back(parse_literal(j[i], path + "[" + std::to_string(i) + "]"));
    if (items.back().shape != items.front().shape) fail(path, "array is not rectangular");
  }
  out.shape.push_back(items.size());
  out.shape.insert(out.shape.end(), items.front().shape.begin(), items.front().shape.end());
  for (const auto& item : items) out.values.insert(out.values.end(), item.values.begin(), item.values.end());
  return out;
}

Plates parse_plates(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of plate sizes");
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = path + "[" + std::to_string(i) + "]";
    const auto size = as_count(j[i], at);
    if (size == 0) fail(at, "plate sizes must be positive");
    dims.push_back(size);
  }
  return Plates(std::move(dims));
}

FamilyKind parse_family(const json& j, const std::string& path) {
  const std::string name = as_string(j, path);
  if (name == "gaussian") return FamilyKind::Gaussian;
  if (name == "gamma") return FamilyKind::Gamma;
  if (name == "wishart") return FamilyKind::Wishart;
  if (name == "dirichlet") return FamilyKind::Dirichlet;
  if (name == "categorical") return FamilyKind::Categorical;
  fail(path, "unknown family \"" + name +
                 "\" (expected gaussian, gamma, wishart, dirichlet or categorical)");
}

// Moment type of a constant from its type name and the event part of its shape.
MomentType constant_type(const std::string& name, const std::vector<std::size_t>& event,
                         const std::string& path) {
  auto dim = [&](std::size_t rank_needed) -> Eigen::Index {
    if (event.empty()) return 1;
    if (event.size() != rank_needed) {
      fail(path, "a " + name + " constant needs " + std::to_string(rank_needed) +
                     " event axes, got " + std::to_string(event.size()));
    }
    if (rank_needed == 2 && event[0] != event[1]) fail(path, "precision must be square");
    return static_cast<Eigen::Index>(event[0]);
  };
  if (name == "vector") return {MomentKind::Vector, dim(1)};
  if (name == "precision") return {MomentKind::Precision, dim(2)};
  if (name == "probability") return {MomentKind::Probability, dim(1)};
  if (name == "log_probability") return {MomentKind::LogProbability, dim(1)};
  if (name == "fixed") return {MomentKind::Fixed, dim(1)};
  fail(path, "unknown constant type \"" + name +
                 "\" (expected vector, precision, probability, log_probability or fixed)");
}

std::size_t event_rank(const std::string& type, std::size_t rank) {
  if (type == "precision") return rank == 0 ? 0 : 2;
  if (type == "fixed") return rank == 0 ? 0 : 1;
  return 1;
}

NodeSpec parse_node(const json& j, const std::string& path) {
  check_keys(j, {"name", "kind", "family", "dim", "parents", "plates", "type", "constant", "init"},
             path);
  NodeSpec node;
  node.name = as_string(require(j, "name", path), path + ".name");
  if (node.name.empty()) fail(path + ".name", "names must not be empty");
  const std::string kind = j.contains("kind") ? as_string(j["kind"], path + ".kind") : "stochastic";
  if (kind == "stochastic") {
    node.kind = SpecKind::Stochastic;
  } else if (kind == "constant") {
    node.kind = SpecKind::Constant;
  } else if (kind == "mixture") {
    node.kind = SpecKind::Mixture;
  } else if (kind == "sum_product") {
    node.kind = SpecKind::SumProduct;
  } else {
    fail(path + ".kind", "unknown kind \"" + kind +
                             "\" (expected stochastic, constant, mixture or sum_product)");
  }

  if (j.contains("plates")) node.plates = parse_plates(j["plates"], path + ".plates");
  if (j.contains("init")) {
    const std::string init = as_string(j["init"], path + ".init");
    if (init != "random" && init != "prior") {
      fail(path + ".init", "expected \"random\" or \"prior\"");
    }
    node.random_init = init == "random";
  }

  if (node.kind == SpecKind::Constant) {
    for (const char* key : {"family", "dim", "parents", "init"}) {
      if (j.contains(key)) fail(path + "." + key, "not allowed on a constant");
    }
    const std::string type = as_string(require(j, "type", path), path + ".type");
    node.constant = parse_literal(require(j, "constant", path), path + ".constant");
    const auto& shape = node.constant.shape;
    std::vector<std::size_t> event;
    if (node.plates) {
      const auto& p = node.plates->dims();
      if (shape.size() < p.size() || !std::equal(p.begin(), p.end(), shape.begin())) {
        fail(path + ".constant", "shape does not start with the declared plates " + node.plates->str());
      }
      event.assign(shape.begin() + static_cast<std::ptrdiff_t>(p.size()), shape.end());
    } else {
      const std::size_t rank = event_rank(type, shape.size());
      if (shape.size() < rank) fail(path + ".constant", "too few axes for a " + type + " constant");
      const auto split = shape.begin() + static_cast<std::ptrdiff_t>(shape.size() - rank);
      node.plates = Plates(std::vector<std::size_t>(shape.begin(), split));
      event.assign(split, shape.end());
    }
    node.constant_type = constant_type(type, event, path + ".type");
    return node;
  }

  for (const char* key : {"type", "constant"}) {
    if (j.contains(key)) fail(path + "." + key, std::string("only constants take \"") + key + "\"");
  }
  if (node.kind == SpecKind::SumProduct) {
    for (const char* key : {"family", "dim", "init", "plates"}) {
      if (j.contains(key)) fail(path + "." + key, "not allowed on a sum_product node");
    }
  } else {
    node.family = parse_family(require(j, "family", path), path + ".family");
    if (j.contains("dim")) {
      const auto d = as_count(j["dim"], path + ".dim");
      const bool categories = *node.family == FamilyKind::Dirichlet ||
                              *node.family == FamilyKind::Categorical;
      if (d < (categories ? 2u : 1u)) fail(path + ".dim", "dimension too small");
      if (*node.family == FamilyKind::Gamma && d != 1) fail(path + ".dim", "gamma is scalar");
      node.dim = static_cast<Eigen::Index>(d);
    }
  }

  const json& parents = require(j, "parents", path);
  if (!parents.is_array()) fail(path + ".parents", "expected a list");
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const std::string at = path + ".parents[" + std::to_string(i) + "]";
    if (parents[i].is_string()) {
      node.parents.emplace_back(parents[i].get<std::string>());
    } else {
      node.parents.emplace_back(parse_literal(parents[i], at));
    }
  }
  if (node.kind == SpecKind::SumProduct && node.parents.size() != 2) {
    fail(path + ".parents", "a sum_product node takes exactly two parents");
  }
  if (node.kind == SpecKind::Mixture && node.parents.empty()) {
    fail(path + ".parents", "a mixture needs a gate as its first parent");
  }
  return node;
}

// Unknown names, cycles, and parents declared after their children.
void check_references(const std::vector<NodeSpec>& nodes) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!index.emplace(nodes[i].name, i).second) {
      fail("nodes[" + std::to_string(i) + "].name", "duplicate node name \"" + nodes[i].name + "\"");
    }
  }
  std::vector<std::vector<std::size_t>> edges(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t s = 0; s < nodes[i].parents.size(); ++s) {
      const auto* name = std::get_if<std::string>(&nodes[i].parents[s]);
      if (name == nullptr) continue;
      const auto it = index.find(*name);
      if (it == index.end()) {
        fail("nodes[" + std::to_string(i) + "].parents[" + std::to_string(s) + "]",
             "unknown node \"" + *name + "\"");
      }
      edges[i].push_back(it->second);
    }
  }

  // Depth-first search from each node along parent edges.
  std::vector<int> state(nodes.size(), 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::size_t> stack;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    state[v] = 1;
    stack.push_back(v);
    for (std::size_t p : edges[v]) {
      if (state[p] == 1) {
        std::string cycle;
        const auto start = std::find(stack.begin(), stack.end(), p);
        for (auto it = start; it != stack.end(); ++it) cycle += nodes[*it].name + " -> ";
        throw ValidationError("cycle: " + cycle + nodes[p].name);
      }
      if (state[p] == 0) visit(p);
    }
    stack.pop_back();
    state[v] = 2;
  };
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (state[v] == 0) visit(v);
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t p : edges[i]) {
      if (p > i) {
        fail("nodes[" + std::to_string(i) + "]",
             "parent \"" + nodes[p].name + "\" must be declared before \"" + nodes[i].name + "\"");
      }
    }
  }
}

void check_name(const std::map<std::string, const NodeSpec*>& nodes, const std::string& name,
                const std::string& path) {
  if (!nodes.contains(name)) fail(path, "unknown node \"" + name + "\"");
}

EngineSpec parse_engine(const json& j, const std::map<std::string, const NodeSpec*>& nodes) {
  const std::string path = "engine";
  check_keys(j, {"mode", "max_sweeps", "tol", "seed", "order", "schedule"}, path);
  EngineSpec e;
  if (j.contains("mode")) {
    const std::string mode = as_string(j["mode"], path + ".mode");
    if (mode == "vb") {
      e.mode = Mode::Vb;
    } else if (mode == "annealed") {
      e.mode = Mode::Annealed;
    } else if (mode == "svi") {
      e.mode = Mode::Svi;
    } else {
      fail(path + ".mode", "unknown mode \"" + mode + "\" (expected vb, annealed or svi)");
    }
  }
  if (j.contains("max_sweeps")) {
    e.max_sweeps = as_count(j["max_sweeps"], path + ".max_sweeps");
    if (e.max_sweeps < 1) fail(path + ".max_sweeps", "must be at least 1");
  }
  if (j.contains("tol")) {
    e.tolerance = as_number(j["tol"], path + ".tol");
    if (!(e.tolerance > 0.0)) fail(path + ".tol", "must be positive");
  }
  if (j.contains("seed")) e.seed = as_count(j["seed"], path + ".seed");
  if (j.contains("order")) {
    e.order = as_names(j["order"], path + ".order");
    for (std::size_t i = 0; i < e.order.size(); ++i) {
      check_name(nodes, e.order[i], path + ".order[" + std::to_string(i) + "]");
    }
  }

  const bool has_schedule = j.contains("schedule");
  const json schedule = has_schedule ? j["schedule"] : json::object();
  const std::string spath = path + ".schedule";
  check_keys(schedule, {"beta", "batch_size", "axis", "delay", "forgetting", "globals"}, spath);
  const bool annealing = schedule.contains("beta");
  const bool stochastic = schedule.contains("batch_size") || schedule.contains("axis") ||
                          schedule.contains("delay") || schedule.contains("forgetting") ||
                          schedule.contains("globals");
  if (annealing && stochastic) {
    throw ConfigurationError("annealing cannot be combined with stochastic updates");
  }
  switch (e.mode) {
    case Mode::Vb:
      if (has_schedule && !schedule.empty()) {
        throw ConfigurationError("mode \"vb\" takes no schedule");
      }
      break;
    case Mode::Annealed: {
      if (stochastic) throw ConfigurationError("annealing cannot be combined with stochastic updates");
      if (!annealing) throw ConfigurationError("mode \"annealed\" needs schedule.beta");
      const json& beta = schedule["beta"];
      if (!beta.is_array() || beta.empty()) fail(spath + ".beta", "expected a non-empty list");
      for (std::size_t i = 0; i < beta.size(); ++i) {
        e.beta.push_back(as_number(beta[i], spath + ".beta[" + std::to_string(i) + "]"));
      }
      break;
    }
    case Mode::Svi:
      if (annealing) throw ConfigurationError("annealing cannot be combined with stochastic updates");
      if (!schedule.contains("batch_size")) {
        throw ConfigurationError("mode \"svi\" needs schedule.batch_size");
      }
      e.batch_size = as_count(schedule["batch_size"], spath + ".batch_size");
      if (schedule.contains("axis")) e.axis_from_end = as_count(schedule["axis"], spath + ".axis");
      if (schedule.contains("delay")) e.delay = as_number(schedule["delay"], spath + ".delay");
      if (schedule.contains("forgetting")) {
        e.forgetting = as_number(schedule["forgetting"], spath + ".forgetting");
      }
      if (schedule.contains("globals")) {
        e.globals = as_names(schedule["globals"], spath + ".globals");
        for (std::size_t i = 0; i < e.globals.size(); ++i) {
          check_name(nodes, e.globals[i], spath + ".globals[" + std::to_string(i) + "]");
        }
      }
      break;
  }
  return e;
}

}  // namespace

ModelSpec parse_model_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("spec: expected a JSON object");
  check_keys(doc, {"nodes", "observe", "engine"}, "spec");
  if (!doc.contains("nodes") || !doc["nodes"].is_array() || doc["nodes"].empty()) {
    throw ValidationError("no nodes");
  }

  ModelSpec spec;
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    spec.nodes.push_back(parse_node(doc["nodes"][i], "nodes[" + std::to_string(i) + "]"));
  }
  check_references(spec.nodes);
  std::map<std::string, const NodeSpec*> by_name;
  for (const auto& n : spec.nodes) by_name.emplace(n.name, &n);

  if (doc.contains("observe")) {
    json entries = doc["observe"];
    if (entries.is_object()) entries = json::array({entries});
    if (!entries.is_array()) throw ValidationError("observe: expected a list");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const std::string path = "observe[" + std::to_string(i) + "]";
      check_keys(entries[i], {"node", "data", "missing_token"}, path);
      ObserveSpec o;
      o.node = as_string(require(entries[i], "node", path), path + ".node");
      check_name(by_name, o.node, path + ".node");
      const SpecKind kind = by_name.at(o.node)->kind;
      if (kind != SpecKind::Stochastic && kind != SpecKind::Mixture) {
        fail(path + ".node", "\"" + o.node + "\" is not a stochastic node");
      }
      if (!seen.insert(o.node).second) fail(path + ".node", "\"" + o.node + "\" observed twice");
      if (entries[i].contains("data")) o.data = as_string(entries[i]["data"], path + ".data");
      if (entries[i].contains("missing_token")) {
        o.missing_token = as_string(entries[i]["missing_token"], path + ".missing_token");
      }
      spec.observe.push_back(std::move(o));
    }
  }
  spec.engine = parse_engine(doc.contains("engine") ? doc["engine"] : json::object(), by_name);
  return spec;
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read spec file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ModelSpec spec = parse_model_spec(text.str());
  spec.base_dir = path.parent_path();
  return spec;
}

}  // namespace vmp::cli
