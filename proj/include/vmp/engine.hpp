#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vmp/errors.hpp"
#include "vmp/graph.hpp"

namespace vmp {

struct FitOptions {
  std::vector<NodeId> order;  // empty: latent nodes in construction order
  std::size_t max_sweeps = 200;
  double tolerance = 1e-6;  // relative change of the bound
  std::uint64_t seed = 0;
};

struct FitReport {
  double initial_elbo = 0.0;
  std::vector<double> elbo_trace;  // one entry per sweep
  std::size_t sweeps = 0;
  bool converged = false;
  std::vector<double> sweep_ms;

  /// Median wall time per sweep, ignoring the first (warm-up) sweep when
  /// more than one ran.
  double median_ms() const;
};

/// Inverse temperatures per sweep; sweeps past the end run at 1.
struct AnnealingSchedule {
  std::vector<double> beta;
};

struct SviSchedule {
  std::size_t axis_from_end = 1;  // minibatch axis, counted from the end of the data plates
  std::size_t batch_size = 1;
  std::size_t total = 0;  // 0: taken from the observed nodes
  double delay = 1.0;
  double forgetting = 0.7;
  std::vector<NodeId> globals;  // empty: latent nodes without the batch axis

  double step_size(std::size_t t) const;
};

/// Raised when an update fails mid-fit; carries the sweeps completed so far.
class FitAborted : public NumericalError {
 public:
  FitAborted(const std::string& what, FitReport partial)
      : NumericalError(what), report_(std::move(partial)) {}
  const FitReport& report() const noexcept { return report_; }

 private:
  FitReport report_;
};

/// The bound of the current approximation; NumericalError when not finite.
double elbo(const Graph& graph);

FitReport run_vb(Graph& graph, const FitOptions& options);
FitReport run_annealed(Graph& graph, const FitOptions& options,
                       const AnnealingSchedule& schedule);
FitReport run_svi(Graph& graph, const FitOptions& options, const SviSchedule& schedule);

/// Random symmetry breaking: categorical nodes get flat-Dirichlet
/// responsibilities per element, continuous nodes are centred on a draw
/// from their prior.
void initialize_from_random(Graph& graph, NodeId node, std::uint64_t seed);

}  // namespace vmp
