#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>

#include "vmp/engine.hpp"
#include "vmp/models.hpp"

using namespace vmp;

namespace {

DataTensor tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  return {std::move(shape), std::move(values)};
}

double max_diff(const PlateBlocks& a, const PlateBlocks& b) {
  return kernels::max_abs_difference(a, b);
}

// Gaussian with unknown mean and Gamma precision.
struct NormalGamma {
  Graph graph;
  NodeId mu, tau, y;
};

NormalGamma normal_gamma(const std::vector<double>& data) {
  NormalGamma m;
  m.mu = m.graph.add_stochastic(Family::gaussian(1), {0.0, 0.01}, {}, "mu");
  m.tau = m.graph.add_stochastic(Family::gamma(), {1.0, 1.0}, {}, "tau");
  m.y = m.graph.add_stochastic(Family::gaussian(1), {m.mu, m.tau}, Plates{data.size()}, "y");
  m.graph.observe(m.y, tensor({data.size(), 1}, data));
  return m;
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("options are validated") {
    Graph g;
    g.add_stochastic(Family::gaussian(1), {0.0, 1.0});
    CHECK_THROWS_AS(run_vb(g, {}), ConfigurationError);

    auto m = normal_gamma({0.5, 1.5});
    CHECK_THROWS_AS(run_vb(m.graph, {.order = {m.mu}}), ConfigurationError);
    CHECK_THROWS_AS(run_vb(m.graph, {.order = {m.mu, m.mu, m.tau}}), ConfigurationError);
    CHECK_THROWS_AS(run_vb(m.graph, {.order = {m.mu, m.y, m.tau}}), ConfigurationError);
    CHECK_THROWS_AS(run_vb(m.graph, {.order = {}, .max_sweeps = 0}), ConfigurationError);
    CHECK_THROWS_AS(run_vb(m.graph, {.order = {}, .max_sweeps = 5, .tolerance = 0.0}),
                    ConfigurationError);
    CHECK_THROWS_AS(run_annealed(m.graph, {}, {{0.5, 0.2, 1.0}}), ConfigurationError);
    CHECK_THROWS_AS(run_annealed(m.graph, {}, {{0.5, 0.8}}), ConfigurationError);
    CHECK_THROWS_AS(run_annealed(m.graph, {}, {{0.0, 1.0}}), ConfigurationError);
  }

  TEST_CASE("infinite tolerance runs one sweep") {
    auto m = normal_gamma({0.5, 1.5, -0.2});
    const auto report = run_vb(
        m.graph, {.order = {}, .max_sweeps = 50, .tolerance = std::numeric_limits<double>::infinity()});
    CHECK(report.sweeps == 1);
    CHECK(report.converged);
    CHECK(report.elbo_trace.size() == 1);
    CHECK(report.sweep_ms.size() == 1);
  }

  TEST_CASE("conditionally independent latents reach the fixed point in one sweep") {
    Graph g;
    const auto mu = g.add_stochastic(Family::gaussian(2), {Eigen::Vector2d::Zero(),
                                                           Eigen::Matrix2d::Identity()});
    const auto lambda = g.add_stochastic(Family::wishart(2), {3.0, Eigen::Matrix2d::Identity()});
    const auto y1 = g.add_stochastic(Family::gaussian(2), {mu, Eigen::Matrix2d::Identity()},
                                     Plates{2});
    const auto y2 = g.add_stochastic(Family::gaussian(2), {Eigen::Vector2d::Zero(), lambda},
                                     Plates{2});
    g.observe(y1, tensor({2, 2}, {1.0, 2.0, 0.5, -1.0}));
    g.observe(y2, tensor({2, 2}, {0.3, 0.1, -0.4, 0.9}));
    const auto report = run_vb(g, {.order = {}, .max_sweeps = 10, .tolerance = 1e-15});
    CHECK(report.sweeps == 2);
    CHECK(report.elbo_trace[1] == report.elbo_trace[0]);
    CHECK(g.update_node(mu) == 0.0);
    CHECK(g.update_node(lambda) == 0.0);
  }

  TEST_CASE("update order does not matter at the fixed point") {
    auto m = normal_gamma({0.5, 1.5, -0.2, 2.2, 0.9});
    run_vb(m.graph, {.order = {}, .max_sweeps = 5000, .tolerance = 1e-15});
    const double converged = elbo(m.graph);
    run_vb(m.graph, {.order = {m.tau, m.mu}, .max_sweeps = 3, .tolerance = 1e-15});
    CHECK(std::abs(elbo(m.graph) - converged) < 1e-10);
  }

  TEST_CASE("numerical failure aborts with a partial report") {
    auto m = normal_gamma({1e200, -1e200});
    try {
      run_vb(m.graph, {});
      FAIL("expected the fit to abort");
    } catch (const FitAborted& e) {
      CHECK(e.report().sweeps == 0);
      CHECK(e.report().elbo_trace.empty());
    }
  }

  TEST_CASE("random initialization") {
    const auto data = two_cluster_data(3);
    auto a = build_gmm(data, 5, 11);
    auto b = build_gmm(data, 5, 11);
    auto c = build_gmm(data, 5, 12);
    CHECK(max_diff(a.graph.posterior(a.z), b.graph.posterior(b.z)) == 0.0);
    CHECK(max_diff(a.graph.posterior(a.z), c.graph.posterior(c.z)) > 0.0);
    const auto& r = a.graph.moments(a.z).blocks[0];
    for (std::size_t e = 0; e < r.count(); ++e) {
      CHECK(r.at(e).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Continuous nodes are centred on a prior draw with the prior spread.
    Graph g;
    const auto w = g.add_stochastic(Family::gaussian(3), {Eigen::Vector3d::Zero(),
                                                          Eigen::Matrix3d::Identity()},
                                    Plates{4});
    const auto tau = g.add_stochastic(Family::gamma(), {2.0, 1.0});
    const auto lambda = g.add_stochastic(Family::wishart(2), {4.0, Eigen::Matrix2d::Identity()});
    const auto p = g.add_stochastic(Family::dirichlet(3), {Eigen::Vector3d::Ones()});
    for (NodeId id : {w, tau, lambda, p}) {
      const auto before = g.posterior(id);
      initialize_from_random(g, id, 5);
      CHECK(max_diff(before, g.posterior(id)) > 0.0);
    }
    CHECK(g.posterior(w)[1].at(0).isApprox(-0.5 * Eigen::Matrix3d::Identity()));
    CHECK(g.posterior(tau)[1].at(0)(0, 0) == 1.0);
    CHECK(g.posterior(lambda)[1].at(0)(0, 0) == 0.5);
  }

  TEST_CASE("without symmetry breaking all clusters stay identical") {
    auto m = build_gmm(two_cluster_data(3), 5, 0);
    m.graph.set_posterior(m.z, m.graph.collect_prior(m.z));
    run_vb(m.graph, {.order = m.order});
    const auto& means = m.graph.moments(m.mu).blocks[0];
    REQUIRE(means.count() == 5);
    for (std::size_t k = 1; k < 5; ++k) {
      CHECK((means.at(k) - means.at(0)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("two-cluster mixture separates the clusters") {
    auto m = build_gmm(two_cluster_data(7), 5, 0);
    const auto report = run_vb(m.graph, {.order = m.order});
    CHECK(report.converged);
    CHECK(report.sweeps < 200);
    const auto alpha = m.graph.posterior(m.alpha)[0].at(0);
    int big = 0;
    for (Eigen::Index k = 0; k < 5; ++k) big += alpha(k) + 1.0 - 0.01 > 50.0 ? 1 : 0;
    CHECK(big == 2);
  }

  TEST_CASE("stochastic steps keep the random symmetry breaking") {
    auto m = build_gmm(two_cluster_data(7), 5, 0);
    SviSchedule schedule;
    schedule.batch_size = 125;
    run_svi(m.graph, {.order = m.order, .max_sweeps = 20}, schedule);
    const auto alpha = m.graph.posterior(m.alpha)[0].at(0);
    CHECK(alpha.maxCoeff() - alpha.minCoeff() > 50.0);
  }

  TEST_CASE("constant unit schedule reproduces plain VB") {
    auto a = build_gmm(two_cluster_data(7), 5, 4);
    auto b = build_gmm(two_cluster_data(7), 5, 4);
    const auto plain = run_vb(a.graph, {.order = a.order});
    const auto annealed = run_annealed(b.graph, {.order = b.order}, {{1.0, 1.0, 1.0}});
    CHECK(plain.elbo_trace == annealed.elbo_trace);
    CHECK(plain.sweeps == annealed.sweeps);
    CHECK(plain.converged == annealed.converged);
    CHECK(plain.initial_elbo == annealed.initial_elbo);
    for (NodeId id : a.order) CHECK(max_diff(a.graph.posterior(id), b.graph.posterior(id)) == 0.0);
  }

  TEST_CASE("annealing scales child messages") {
    auto a = build_gmm(two_cluster_data(7), 5, 4);
    const PlateBlocks prior = a.graph.collect_prior(a.mu);
    const PlateBlocks messages = a.graph.collect_child_messages(a.mu);
    const PlateBlocks expected = kernels::add(prior, kernels::scaled(messages, 0.1));
    run_annealed(a.graph, {.order = a.order, .max_sweeps = 1}, {{0.1, 1.0}});
    CHECK(max_diff(a.graph.posterior(a.mu), expected) < 1e-12 * 1e3);

    // Tempered counts shrink the weight posterior toward its prior.
    auto b = build_gmm(two_cluster_data(7), 5, 4);
    run_vb(b.graph, {.order = b.order, .max_sweeps = 1});
    const double tempered = a.graph.posterior(a.alpha)[0].at(0).sum();
    const double plain = b.graph.posterior(b.alpha)[0].at(0).sum();
    CHECK(tempered < plain);
    CHECK(tempered == doctest::Approx(0.1 * plain + 0.9 * (5 * (0.01 - 1.0))).epsilon(1e-12));
  }

  TEST_CASE("full-batch stochastic step equals a batch sweep") {
    const auto data = two_cluster_data(7);
    auto a = build_gmm(data, 5, 4);
    auto b = build_gmm(data, 5, 4);
    run_vb(a.graph, {.order = {a.z, a.mu, a.lambda, a.alpha}, .max_sweeps = 1});
    SviSchedule schedule;
    schedule.batch_size = 500;
    schedule.delay = 0.0;
    schedule.forgetting = 1.0;
    CHECK(schedule.step_size(1) == 1.0);
    run_svi(b.graph, {.order = {b.z, b.mu, b.lambda, b.alpha}, .max_sweeps = 1}, schedule);
    for (NodeId id : {a.mu, a.lambda, a.alpha}) {
      CHECK(max_diff(a.graph.posterior(id), b.graph.posterior(id)) < 1e-12);
    }
  }

  TEST_CASE("minibatch scaling on duplicated data") {
    auto build = [] {
      auto g = std::make_unique<Graph>();
      const auto mu = g->add_stochastic(Family::gaussian(1), {0.0, 0.01});
      const auto y = g->add_stochastic(Family::gaussian(1), {mu, 2.0}, Plates{8});
      g->observe(y, tensor({8, 1}, std::vector<double>(8, 1.5)));
      return std::pair{std::move(g), mu};
    };
    auto [a, mu_a] = build();
    auto [b, mu_b] = build();
    a->update_node(mu_a);
    SviSchedule schedule;
    schedule.batch_size = 4;
    schedule.delay = 0.0;
    schedule.forgetting = 1.0;
    run_svi(*b, {.order = {}, .max_sweeps = 1}, schedule);
    CHECK(max_diff(a->posterior(mu_a), b->posterior(mu_b)) < 1e-12);
  }

  TEST_CASE("stochastic runs are deterministic and validated") {
    const auto data = synthetic_gmm_data(4, 120, 2, 9);
    auto a = build_gmm(data, 4, 1);
    auto b = build_gmm(data, 4, 1);
    SviSchedule schedule;
    schedule.batch_size = 30;
    const auto ra = run_svi(a.graph, {.order = a.order, .max_sweeps = 25, .tolerance = 1e-6, .seed = 3},
                            schedule);
    const auto rb = run_svi(b.graph, {.order = b.order, .max_sweeps = 25, .tolerance = 1e-6, .seed = 3},
                            schedule);
    CHECK(ra.elbo_trace == rb.elbo_trace);
    CHECK(ra.sweeps == 25);

    auto c = build_gmm(data, 4, 1);
    schedule.globals = {c.z};
    CHECK_THROWS_AS(run_svi(c.graph, {.order = c.order}, schedule), ConfigurationError);
    schedule.globals.clear();
    schedule.batch_size = 500;
    CHECK_THROWS_AS(run_svi(c.graph, {.order = c.order}, schedule), ConfigurationError);
    schedule.batch_size = 10;
    schedule.forgetting = 0.5;
    CHECK_THROWS_AS(run_svi(c.graph, {.order = c.order}, schedule), ConfigurationError);
  }

  TEST_CASE("broadcast elision does not change the bound") {
    const auto data = synthetic_pca_data(3, 40, 6, 5);
    auto on = build_pca(data, 3, 2, true);
    auto off = build_pca(data, 3, 2, false);
    const auto r_on = run_vb(on.graph, {.order = on.order, .max_sweeps = 15});
    const auto r_off = run_vb(off.graph, {.order = off.order, .max_sweeps = 15});
    REQUIRE(r_on.sweeps == r_off.sweeps);
    for (std::size_t i = 0; i < r_on.sweeps; ++i) {
      CHECK(std::abs(r_on.elbo_trace[i] - r_off.elbo_trace[i]) <=
            1e-10 * std::abs(r_on.elbo_trace[i]));
    }
    const auto plan_on = on.graph.plan_broadcast(on.x);
    const auto plan_off = off.graph.plan_broadcast(off.x);
    CHECK(plan_on.shared(1, 0));
    CHECK_FALSE(plan_on.shared(0, 0));
    CHECK_FALSE(plan_off.shared(1, 0));
  }

  TEST_CASE("median sweep time skips the warm-up sweep") {
    FitReport r;
    r.sweep_ms = {100.0, 1.0, 3.0, 2.0};
    CHECK(r.median_ms() == 2.0);
    r.sweep_ms = {5.0};
    CHECK(r.median_ms() == 5.0);
  }
}
