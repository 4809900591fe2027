#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vmp/engine.hpp"
#include "vmp/graph.hpp"

namespace vmp {

/// Gaussian mixture with Dirichlet weights, Gaussian means and Wishart
/// precisions under vague priors; assignments start from a random draw.
struct GmmModel {
  Graph graph;
  NodeId alpha, z, mu, lambda, y;
  std::vector<NodeId> order;
};

GmmModel build_gmm(const Eigen::MatrixXd& data, std::size_t clusters, std::uint64_t seed,
                   bool broadcasting = true);

/// 500 two-dimensional points: 200 around (2, 2) and 300 around the origin,
/// unit covariance.
Eigen::MatrixXd two_cluster_data(std::uint64_t seed);

/// N points from `clusters` unit-covariance Gaussians with means drawn from
/// N(0, 9 I) and uniform memberships.
Eigen::MatrixXd synthetic_gmm_data(std::size_t clusters, std::size_t n, std::size_t d,
                                   std::uint64_t seed);

/// Y (N x D) ~ N(X W^T, 1/tau) with X, W standard normal rows and a
/// Gamma(1e-3, 1e-3) noise precision; W starts from a random draw.
struct PcaModel {
  Graph graph;
  NodeId x, w, f, tau, y;
  std::vector<NodeId> order;
};

PcaModel build_pca(const Eigen::MatrixXd& data, std::size_t latent, std::uint64_t seed,
                   bool broadcasting = true);

/// Data from the PCA model with unit noise variance.
Eigen::MatrixXd synthetic_pca_data(std::size_t latent, std::size_t n, std::size_t d,
                                   std::uint64_t seed);

struct BenchmarkConfig {
  enum class Kind { Gmm, Pca };
  std::string name;
  Kind kind = Kind::Gmm;
  std::size_t components = 0;  // clusters or latent dimensions
  std::size_t n = 0;
  std::size_t d = 0;
  std::uint64_t data_seed = 0;
};

std::optional<BenchmarkConfig> benchmark_config(std::string_view name);
std::vector<std::string> benchmark_names();

struct BenchmarkRow {
  std::string name;
  bool broadcasting = true;
  FitReport report;
};

BenchmarkRow run_benchmark(const BenchmarkConfig& config, bool broadcasting,
                           const FitOptions& options);

}  // namespace vmp
