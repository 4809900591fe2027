#include "vmp/models.hpp"

#include <random>

namespace vmp {

namespace {

DataTensor row_major(const Eigen::MatrixXd& data, std::vector<std::size_t> shape) {
  DataTensor out{std::move(shape), {}};
  out.values.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) out.values.push_back(data(i, j));
  }
  return out;
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return out;
}

}  // namespace

GmmModel build_gmm(const Eigen::MatrixXd& data, std::size_t clusters, std::uint64_t seed,
                   bool broadcasting) {
  const auto k = static_cast<Eigen::Index>(clusters);
  const auto n = static_cast<std::size_t>(data.rows());
  const auto d = static_cast<std::size_t>(data.cols());
  const auto di = static_cast<Eigen::Index>(d);
  GmmModel m;
  Graph& g = m.graph;
  g.set_broadcasting(broadcasting);
  m.alpha = g.add_stochastic(Family::dirichlet(k), {Eigen::VectorXd::Constant(k, 0.01)}, {},
                             "alpha");
  m.z = g.add_stochastic(Family::categorical(k), {m.alpha}, Plates{n}, "z");
  m.mu = g.add_stochastic(Family::gaussian(di),
                          {Eigen::VectorXd::Zero(di), 1e-5 * Eigen::MatrixXd::Identity(di, di)},
                          Plates{clusters}, "mu");
  m.lambda = g.add_stochastic(Family::wishart(di),
                              {static_cast<double>(d), 1e-5 * Eigen::MatrixXd::Identity(di, di)},
                              Plates{clusters}, "Lambda");
  m.y = g.add_mixture(m.z, Family::gaussian(di), {m.mu, m.lambda}, {}, "Y");
  g.observe(m.y, row_major(data, {n, d}));
  initialize_from_random(g, m.z, seed);
  m.order = {m.mu, m.z, m.lambda, m.alpha};
  return m;
}

Eigen::MatrixXd two_cluster_data(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd y = standard_normal(500, 2, rng);
  y.topRows(200).array() += 2.0;
  return y;
}

Eigen::MatrixXd synthetic_gmm_data(std::size_t clusters, std::size_t n, std::size_t d,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd means =
      3.0 * standard_normal(static_cast<Eigen::Index>(clusters), static_cast<Eigen::Index>(d), rng);
  std::uniform_int_distribution<Eigen::Index> pick(0, static_cast<Eigen::Index>(clusters) - 1);
  Eigen::MatrixXd y = standard_normal(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d),
                                      rng);
  for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i) += means.row(pick(rng));
  return y;
}

PcaModel build_pca(const Eigen::MatrixXd& data, std::size_t latent, std::uint64_t seed,
                   bool broadcasting) {
  const auto l = static_cast<Eigen::Index>(latent);
  const auto n = static_cast<std::size_t>(data.rows());
  const auto d = static_cast<std::size_t>(data.cols());
  PcaModel m;
  Graph& g = m.graph;
  g.set_broadcasting(broadcasting);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(l);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(l, l);
  m.x = g.add_stochastic(Family::gaussian(l), {zero, eye}, Plates{n, 1}, "X");
  m.w = g.add_stochastic(Family::gaussian(l), {zero, eye}, Plates{d}, "W");
  m.f = g.add_sum_product(m.x, m.w, "F");
  m.tau = g.add_stochastic(Family::gamma(), {1e-3, 1e-3}, {}, "tau");
  m.y = g.add_stochastic(Family::gaussian(1), {m.f, m.tau}, {}, "Y");
  g.observe(m.y, row_major(data, {n, d, 1}));
  initialize_from_random(g, m.w, seed);
  m.order = {m.x, m.w, m.tau};
  return m;
}

Eigen::MatrixXd synthetic_pca_data(std::size_t latent, std::size_t n, std::size_t d,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto l = static_cast<Eigen::Index>(latent);
  const Eigen::MatrixXd x = standard_normal(static_cast<Eigen::Index>(n), l, rng);
  const Eigen::MatrixXd w = standard_normal(static_cast<Eigen::Index>(d), l, rng);
  const Eigen::MatrixXd noise =
      standard_normal(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng);
  return x * w.transpose() + noise;
}

std::optional<BenchmarkConfig> benchmark_config(std::string_view name) {
  using Kind = BenchmarkConfig::Kind;
  if (name == "gmm-small") return BenchmarkConfig{"gmm-small", Kind::Gmm, 10, 200, 2, 101};
  if (name == "gmm-large") return BenchmarkConfig{"gmm-large", Kind::Gmm, 40, 2000, 10, 102};
  if (name == "pca-small") return BenchmarkConfig{"pca-small", Kind::Pca, 10, 500, 20, 201};
  if (name == "pca-large") return BenchmarkConfig{"pca-large", Kind::Pca, 40, 2000, 100, 202};
  return std::nullopt;
}

std::vector<std::string> benchmark_names() {
  return {"gmm-small", "gmm-large", "pca-small", "pca-large"};
}

BenchmarkRow run_benchmark(const BenchmarkConfig& config, bool broadcasting,
                           const FitOptions& options) {
  BenchmarkRow row{config.name, broadcasting, {}};
  FitOptions fit = options;
  if (config.kind == BenchmarkConfig::Kind::Gmm) {
    const auto data = synthetic_gmm_data(config.components, config.n, config.d, config.data_seed);
    auto model = build_gmm(data, config.components, options.seed, broadcasting);
    if (fit.order.empty()) fit.order = model.order;
    row.report = run_vb(model.graph, fit);
  } else {
    const auto data = synthetic_pca_data(config.components, config.n, config.d, config.data_seed);
    auto model = build_pca(data, config.components, options.seed, broadcasting);
    if (fit.order.empty()) fit.order = model.order;
    row.report = run_vb(model.graph, fit);
  }
  return row;
}

}  // namespace vmp
