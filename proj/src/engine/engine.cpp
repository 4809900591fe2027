#include "vmp/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "vmp/special.hpp"

namespace vmp {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_options(const Graph& graph, const FitOptions& options) {
  if (options.max_sweeps < 1) throw ConfigurationError("max sweeps must be at least 1");
  if (!(options.tolerance > 0.0)) throw ConfigurationError("tolerance must be positive");
  bool observed = false;
  for (std::size_t i = 0; i < graph.size(); ++i) observed = observed || graph.is_observed({i});
  if (!observed) throw ConfigurationError("the model has no observed nodes");
}

std::vector<NodeId> resolve_order(const Graph& graph, const FitOptions& options) {
  const auto latent = graph.latent_nodes();
  if (options.order.empty()) return latent;
  std::set<NodeId> seen;
  for (NodeId id : options.order) {
    if (!graph.is_latent(id)) {
      throw ConfigurationError("update order lists '" + graph.label(id) +
                               "', which is not a latent stochastic node");
    }
    if (!seen.insert(id).second) {
      throw ConfigurationError("update order lists '" + graph.label(id) + "' twice");
    }
  }
  for (NodeId id : latent) {
    if (!seen.contains(id)) {
      throw ConfigurationError("update order is missing latent node '" + graph.label(id) + "'");
    }
  }
  return options.order;
}

bool has_converged(double previous, double current, double tolerance) {
  const double delta = std::abs(current - previous);
  return delta == 0.0 || delta < tolerance * std::abs(current);
}

FitReport sweep_loop(Graph& graph, const FitOptions& options, const std::vector<double>& beta) {
  check_options(graph, options);
  const auto order = resolve_order(graph, options);
  FitReport report;
  try {
    report.initial_elbo = elbo(graph);
  } catch (const NumericalError& e) {
    throw FitAborted(e.what(), report);
  }
  double previous = report.initial_elbo;
  for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
    const double b = sweep < beta.size() ? beta[sweep] : 1.0;
    const auto start = Clock::now();
    double value = 0.0;
    try {
      for (NodeId id : order) graph.update_node(id, b);
      value = elbo(graph);
    } catch (const NumericalError& e) {
      throw FitAborted(e.what(), report);
    } catch (const DomainError& e) {
      throw FitAborted(e.what(), report);
    }
    report.sweep_ms.push_back(elapsed_ms(start));
    report.elbo_trace.push_back(value);
    report.sweeps = sweep + 1;
    if (b == 1.0 && has_converged(previous, value, options.tolerance)) {
      report.converged = true;
      break;
    }
    previous = value;
  }
  return report;
}

// Clears minibatch weighting however the SVI loop exits.
struct BatchGuard {
  Graph& graph;
  ~BatchGuard() { graph.set_batch_weighting(std::nullopt); }
};

}  // namespace

double FitReport::median_ms() const {
  if (sweep_ms.empty()) return 0.0;
  std::vector<double> times(sweep_ms.begin() + (sweep_ms.size() > 1 ? 1 : 0), sweep_ms.end());
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  return times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

double SviSchedule::step_size(std::size_t t) const {
  return std::pow(static_cast<double>(t) + delay, -forgetting);
}

double elbo(const Graph& graph) {
  const double value = graph.elbo();
  if (!std::isfinite(value)) throw NumericalError("the evidence lower bound is not finite");
  return value;
}

FitReport run_vb(Graph& graph, const FitOptions& options) {
  return sweep_loop(graph, options, {});
}

FitReport run_annealed(Graph& graph, const FitOptions& options,
                       const AnnealingSchedule& schedule) {
  const auto& beta = schedule.beta;
  if (beta.empty()) throw ConfigurationError("annealing schedule is empty");
  for (std::size_t t = 0; t < beta.size(); ++t) {
    if (!(beta[t] > 0.0 && beta[t] <= 1.0)) {
      throw ConfigurationError("inverse temperature " + std::to_string(beta[t]) +
                               " outside (0, 1]");
    }
    if (t > 0 && beta[t] < beta[t - 1]) {
      throw ConfigurationError("inverse temperatures must not decrease");
    }
  }
  if (beta.back() != 1.0) throw ConfigurationError("annealing schedule must end at 1");
  return sweep_loop(graph, options, beta);
}

FitReport run_svi(Graph& graph, const FitOptions& options, const SviSchedule& schedule) {
  check_options(graph, options);
  if (!(schedule.forgetting > 0.5 && schedule.forgetting <= 1.0)) {
    throw ConfigurationError("forgetting rate must lie in (0.5, 1]");
  }
  if (!(schedule.delay >= 0.0)) throw ConfigurationError("delay must be non-negative");
  if (schedule.axis_from_end == 0) throw ConfigurationError("minibatch axis must be positive");

  std::size_t total = schedule.total;
  bool axis_found = false;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (!graph.is_observed({i})) continue;
    const Plates& p = graph.plates({i});
    if (p.ndim() < schedule.axis_from_end) continue;
    const std::size_t extent = p[p.ndim() - schedule.axis_from_end];
    if (total == 0) total = extent;
    axis_found = axis_found || extent == total;
  }
  if (!axis_found) {
    throw ConfigurationError("no observed node carries the minibatch axis");
  }
  if (schedule.batch_size < 1 || schedule.batch_size > total) {
    throw ConfigurationError("batch size must lie in [1, " + std::to_string(total) + "]");
  }

  BatchWeighting weighting{schedule.axis_from_end, std::vector<double>(total, 0.0)};
  const auto order = resolve_order(graph, options);
  std::vector<NodeId> globals;
  if (schedule.globals.empty()) {
    for (NodeId id : order) {
      if (!graph.carries_axis(id, weighting)) globals.push_back(id);
    }
  } else {
    globals = schedule.globals;
    for (NodeId id : globals) {
      if (!graph.is_latent(id)) {
        throw ConfigurationError("global node '" + graph.label(id) + "' is not latent");
      }
      if (graph.carries_axis(id, weighting)) {
        throw ConfigurationError("global node '" + graph.label(id) +
                                 "' carries the minibatch axis");
      }
    }
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> permutation(total);
  std::iota(permutation.begin(), permutation.end(), std::size_t{0});
  std::size_t position = total;
  const double scale = static_cast<double>(total) / static_cast<double>(schedule.batch_size);

  FitReport report;
  try {
    report.initial_elbo = elbo(graph);
  } catch (const NumericalError& e) {
    throw FitAborted(e.what(), report);
  }
  BatchGuard guard{graph};
  for (std::size_t t = 1; t <= options.max_sweeps; ++t) {
    const auto start = Clock::now();
    if (position + schedule.batch_size > total) {
      std::shuffle(permutation.begin(), permutation.end(), rng);
      position = 0;
    }
    std::fill(weighting.weights.begin(), weighting.weights.end(), 0.0);
    for (std::size_t i = 0; i < schedule.batch_size; ++i) {
      weighting.weights[permutation[position + i]] = scale;
    }
    position += schedule.batch_size;

    double value = 0.0;
    try {
      graph.set_batch_weighting(weighting);
      // Sweep order is kept so that a randomly initialized local is not
      // overwritten before any global has seen it.
      const double rho = schedule.step_size(t);
      for (NodeId id : order) {
        if (std::find(globals.begin(), globals.end(), id) == globals.end()) {
          graph.update_node(id);
          continue;
        }
        PlateBlocks estimate = graph.compute_posterior(id);
        if (rho != 1.0) {
          estimate = kernels::add(kernels::scaled(graph.posterior(id), 1.0 - rho),
                                  kernels::scaled(estimate, rho));
        }
        graph.set_posterior(id, std::move(estimate));
      }
      graph.set_batch_weighting(std::nullopt);
      value = elbo(graph);
    } catch (const NumericalError& e) {
      throw FitAborted(e.what(), report);
    } catch (const DomainError& e) {
      throw FitAborted(e.what(), report);
    }
    report.sweep_ms.push_back(elapsed_ms(start));
    report.elbo_trace.push_back(value);
    report.sweeps = t;
  }
  // A stochastic schedule has no convergence test; running it to the end
  // counts as completion.
  report.converged = true;
  return report;
}

void initialize_from_random(Graph& graph, NodeId node, std::uint64_t seed) {
  if (!graph.is_latent(node)) {
    throw ConfigurationError("'" + graph.label(node) + "' is not a latent stochastic node");
  }
  const Family family = *graph.family(node);
  const Plates& plates = graph.plates(node);
  const PlateBlocks prior = kernels::expand(graph.collect_prior(node), plates);
  PlateBlocks phi = prior;
  std::mt19937_64 rng(seed);
  const Eigen::Index d = family.dim();
  for (std::size_t e = 0; e < plates.size(); ++e) {
    if (family.kind() == FamilyKind::Categorical) {
      std::gamma_distribution<double> unit(1.0, 1.0);
      Eigen::VectorXd r(d);
      for (Eigen::Index k = 0; k < d; ++k) {
        r(k) = std::max(unit(rng), std::numeric_limits<double>::min());
      }
      phi[0].at(e) = (r / r.sum()).array().log().matrix();
      continue;
    }
    NaturalParams element{family, {}};
    for (const auto& block : prior) element.blocks.emplace_back(block.at(e));
    const Eigen::MatrixXd draw = draw_sample(element, rng());
    switch (family.kind()) {
      case FamilyKind::Gaussian:
        phi[0].at(e) = -2.0 * element.blocks[1] * draw;
        break;
      case FamilyKind::Gamma: {
        const double shape = element.blocks[1](0, 0) + 1.0;
        phi[0].at(e)(0, 0) = -shape / draw(0, 0);
        break;
      }
      case FamilyKind::Wishart: {
        const double dof = 2.0 * element.blocks[1](0, 0) + static_cast<double>(d) + 1.0;
        phi[0].at(e) = -0.5 * dof * special::factor_spd(draw).inverse;
        break;
      }
      case FamilyKind::Dirichlet:
        phi[0].at(e) = element.blocks[0] + draw;
        break;
      case FamilyKind::Categorical:
        break;
    }
  }
  graph.set_posterior(node, std::move(phi));
}

}  // namespace vmp
