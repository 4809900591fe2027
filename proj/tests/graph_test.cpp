#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "vmp/engine.hpp"
#include "vmp/graph.hpp"

using namespace vmp;

namespace {

DataTensor tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  return {std::move(shape), std::move(values)};
}

double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
}

double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& m,
                        const Eigen::MatrixXd& precision) {
  const double d = static_cast<double>(x.size());
  const Eigen::VectorXd r = x - m;
  return -0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(precision.determinant()) -
         0.5 * r.dot(precision * r);
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("prior of a gaussian with constant parents") {
    Graph g;
    const auto mu = g.add_stochastic(Family::gaussian(2),
                                     {Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity() * 0.01},
                                     Plates{5});
    const auto prior = g.collect_prior(mu);
    REQUIRE(prior.size() == 2);
    CHECK(prior[0].at(0).isZero());
    CHECK(rel_err(prior[1].at(0), -0.005 * Eigen::Matrix2d::Identity()) == 0.0);
    // Shared across the plate axis.
    CHECK(prior[1].count() == 1);
  }

  TEST_CASE("gaussian mean posterior is exact") {
    Graph g;
    const Eigen::Vector2d m0(1.0, -1.0);
    Eigen::Matrix2d l0;
    l0 << 2.0, 0.5, 0.5, 1.0;
    Eigen::Matrix2d lambda;
    lambda << 1.5, -0.2, -0.2, 0.7;
    const auto mu = g.add_stochastic(Family::gaussian(2), {m0, l0});
    const auto y = g.add_stochastic(Family::gaussian(2), {mu, lambda}, Plates{3});
    const std::vector<double> data{0.3, 1.2, -0.7, 2.5, 1.1, 0.4};
    g.observe(y, tensor({3, 2}, data));
    g.update_node(mu);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (int n = 0; n < 3; ++n) sum += Eigen::Vector2d(data[2 * n], data[2 * n + 1]);
    const auto& phi = g.posterior(mu);
    CHECK(rel_err(phi[0].at(0), l0 * m0 + lambda * sum) < 1e-12);
    CHECK(rel_err(phi[1].at(0), -0.5 * (l0 + 3.0 * lambda)) < 1e-12);
  }

  TEST_CASE("gamma precision of a scalar gaussian is exact") {
    Graph g;
    const auto tau = g.add_stochastic(Family::gamma(), {2.0, 3.0});
    const auto y = g.add_stochastic(Family::gaussian(1), {1.0, tau}, Plates{4});
    const std::vector<double> data{0.5, 2.0, 1.5, -0.25};
    g.observe(y, tensor({4, 1}, data));
    g.update_node(tau);
    double ss = 0.0;
    for (double v : data) ss += (v - 1.0) * (v - 1.0);
    const auto& phi = g.posterior(tau);
    CHECK(phi[0].at(0)(0, 0) == doctest::Approx(-(3.0 + 0.5 * ss)).epsilon(1e-14));
    CHECK(phi[1].at(0)(0, 0) == doctest::Approx(2.0 + 2.0 - 1.0).epsilon(1e-14));
  }

  TEST_CASE("wishart precision posterior is exact") {
    Graph g;
    Eigen::Matrix2d v0;
    v0 << 2.0, 0.3, 0.3, 1.0;
    const Eigen::Vector2d m(0.5, -0.5);
    const auto lambda = g.add_stochastic(Family::wishart(2), {4.0, v0});
    const auto y = g.add_stochastic(Family::gaussian(2), {m, lambda}, Plates{3});
    const std::vector<double> data{0.3, 1.2, -0.7, 2.5, 1.1, 0.4};
    g.observe(y, tensor({3, 2}, data));
    g.update_node(lambda);
    Eigen::Matrix2d v = v0;
    for (int n = 0; n < 3; ++n) {
      const Eigen::Vector2d r = Eigen::Vector2d(data[2 * n], data[2 * n + 1]) - m;
      v += r * r.transpose();
    }
    const auto& phi = g.posterior(lambda);
    CHECK(rel_err(phi[0].at(0), -0.5 * v) < 1e-12);
    CHECK(phi[1].at(0)(0, 0) == doctest::Approx(0.5 * (7.0 - 3.0)).epsilon(1e-14));
  }

  TEST_CASE("dirichlet categorical posterior and evidence") {
    Graph g;
    const auto p = g.add_stochastic(Family::dirichlet(2), {Eigen::Vector2d(1.0, 1.0)});
    const auto z = g.add_stochastic(Family::categorical(2), {p});
    g.observe(z, tensor({}, {0.0}));
    g.update_node(p);
    CHECK(g.posterior(p)[0].at(0)(0, 0) == 1.0);
    CHECK(g.posterior(p)[0].at(0)(1, 0) == 0.0);
    CHECK(std::abs(g.elbo() - std::log(0.5)) < 1e-12);
  }

  TEST_CASE("fully observed model scores the exact log density") {
    Graph g;
    const Eigen::Vector2d m(0.2, -0.1);
    Eigen::Matrix2d lambda;
    lambda << 2.0, 0.4, 0.4, 1.0;
    const auto y = g.add_stochastic(Family::gaussian(2), {m, lambda}, Plates{2});
    g.observe(y, tensor({2, 2}, {1.0, 0.5, -0.3, 0.8}));
    const double want = gaussian_log_pdf(Eigen::Vector2d(1.0, 0.5), m, lambda) +
                        gaussian_log_pdf(Eigen::Vector2d(-0.3, 0.8), m, lambda);
    CHECK(g.elbo() == doctest::Approx(want).epsilon(1e-13));
  }

  TEST_CASE("latent node at its prior with no children contributes nothing") {
    Graph g;
    g.add_stochastic(Family::gamma(), {2.0, 1.0});
    const auto y = g.add_stochastic(Family::gaussian(1), {0.0, 1.0});
    g.observe(y, tensor({1}, {0.5}));
    CHECK(g.elbo() == doctest::Approx(gaussian_log_pdf(Eigen::VectorXd::Constant(1, 0.5),
                                                       Eigen::VectorXd::Zero(1),
                                                       Eigen::MatrixXd::Identity(1, 1))));
  }

  TEST_CASE("missing elements are ignored") {
    // Observing three values with the middle one missing must match a model
    // holding only the two present values.
    auto build = [](bool masked) {
      Graph g;
      const auto mu = g.add_stochastic(Family::gaussian(1), {0.0, 0.1});
      const auto y = g.add_stochastic(Family::gaussian(1), {mu, 2.0},
                                      Plates{masked ? std::size_t{3} : std::size_t{2}});
      if (masked) {
        g.observe(y, tensor({3, 1}, {1.0, 99.0, -0.5}), Mask{{3}, {1, 0, 1}});
      } else {
        g.observe(y, tensor({2, 1}, {1.0, -0.5}));
      }
      run_vb(g, {});
      return std::pair{g.posterior(mu)[0].at(0)(0, 0), g.elbo()};
    };
    const auto [phi_masked, elbo_masked] = build(true);
    const auto [phi_plain, elbo_plain] = build(false);
    CHECK(phi_masked == doctest::Approx(phi_plain).epsilon(1e-14));
    CHECK(elbo_masked == doctest::Approx(elbo_plain).epsilon(1e-12));
  }

  TEST_CASE("an all-false mask behaves as unobserved") {
    auto build = [](bool observe) {
      Graph g;
      const auto mu = g.add_stochastic(Family::gaussian(1), {0.0, 0.1});
      const auto y = g.add_stochastic(Family::gaussian(1), {mu, 2.0}, Plates{2});
      const auto x = g.add_stochastic(Family::gaussian(1), {mu, 1.0});
      g.observe(x, tensor({1}, {0.7}));
      if (observe) g.observe(y, tensor({2, 1}, {5.0, 6.0}), Mask{{2}, {0, 0}});
      g.update_node(mu);
      return g.elbo();
    };
    CHECK(build(true) == build(false));
  }

  TEST_CASE("missing elements of a latent-child node keep their posterior") {
    Graph g;
    const auto mu = g.add_stochastic(Family::gaussian(1), {0.0, 1.0});
    const auto y = g.add_stochastic(Family::gaussian(1), {mu, 1.0}, Plates{2});
    g.observe(y, tensor({2, 1}, {1.0, 0.0}), Mask{{2}, {1, 0}});
    CHECK(g.is_latent(y));
    CHECK(g.is_observed(y));
    CHECK_FALSE(g.is_fully_observed(y));
    const auto mask = g.message_mask(y);
    CHECK(mask.count() == 2);
    CHECK(mask.values()[1] == 0.0);
  }

  TEST_CASE("construction errors") {
    Graph g;
    const auto tau = g.add_stochastic(Family::gamma(), {1.0, 1.0});
    CHECK_THROWS_AS(g.add_stochastic(Family::gaussian(2), {Eigen::Vector2d::Zero(), tau}),
                    SlotMismatchError);
    CHECK_THROWS_AS(g.add_stochastic(Family::gaussian(1), {0.0}), SlotMismatchError);
    CHECK_THROWS_AS(g.add_stochastic(Family::categorical(2), {tau}), SlotMismatchError);
    CHECK_THROWS_AS(g.add_stochastic(Family::gamma(), {tau, 1.0}), SlotMismatchError);
    CHECK_THROWS_AS(g.add_stochastic(Family::gaussian(1), {NodeId{99}, 1.0}), CycleError);

    const auto a = g.add_stochastic(Family::gaussian(1), {0.0, 1.0}, Plates{3});
    const auto b = g.add_stochastic(Family::gamma(), {1.0, 1.0}, Plates{4});
    CHECK_THROWS_AS(g.add_stochastic(Family::gaussian(1), {a, b}), PlateMismatchError);
    CHECK_THROWS_AS(g.add_stochastic(Family::gaussian(1), {a, 1.0}, Plates{2}),
                    PlateMismatchError);
    CHECK(g.plates(g.add_stochastic(Family::gaussian(1), {a, 1.0}, Plates{2, 3})) ==
          Plates{2, 3});

    const auto v2 = g.add_stochastic(Family::gaussian(2), {Eigen::Vector2d::Zero(),
                                                           Eigen::Matrix2d::Identity()});
    CHECK_THROWS_AS(g.add_sum_product(a, v2), DimensionMismatchError);
    CHECK_THROWS_AS(g.add_sum_product(tau, a), SlotMismatchError);
    CHECK_THROWS_AS(g.observe(a, tensor({2, 1}, {1.0, 2.0})), ShapeError);
    CHECK_THROWS_AS(g.observe(b, tensor({4}, {1.0, 2.0, -1.0, 3.0})), SupportError);
    CHECK_THROWS_AS(g.add_stochastic(Family::gamma(), {-1.0, 1.0}), DomainError);
  }

  TEST_CASE("mixture construction errors") {
    Graph g;
    const auto p = g.add_stochastic(Family::dirichlet(3), {Eigen::Vector3d::Ones()});
    const auto z = g.add_stochastic(Family::categorical(3), {p}, Plates{10});
    const auto mu = g.add_stochastic(Family::gaussian(1), {0.0, 1.0}, Plates{4});
    CHECK_THROWS_AS(g.add_mixture(z, Family::gaussian(1), {mu, 1.0}), ClusterSizeMismatchError);
    const auto p2 = g.add_stochastic(Family::dirichlet(2), {Eigen::Vector2d::Ones()});
    const auto mixed_gate = g.add_mixture(z, Family::categorical(2), {p2}, Plates{10});
    const auto mu2 = g.add_stochastic(Family::gaussian(1), {0.0, 1.0}, Plates{2});
    CHECK_THROWS_AS(g.add_mixture(mixed_gate, Family::gaussian(1), {mu2, 1.0}),
                    ConfigurationError);
    CHECK_THROWS_AS(g.add_mixture(mu, Family::gaussian(1), {mu, 1.0}), SlotMismatchError);
  }

  TEST_CASE("a single-cluster mixture equals the plain node") {
    auto build = [](bool mixture) {
      Graph g;
      const auto mu = g.add_stochastic(Family::gaussian(2), {Eigen::Vector2d::Zero(),
                                                             Eigen::Matrix2d::Identity()},
                                       mixture ? Plates{1} : Plates{});
      const auto lambda = g.add_stochastic(Family::wishart(2), {3.0, Eigen::Matrix2d::Identity()},
                                           mixture ? Plates{1} : Plates{});
      const NodeId y =
          mixture ? g.add_mixture(Eigen::MatrixXd::Ones(1, 1), Family::gaussian(2), {mu, lambda},
                                  Plates{3})
                  : g.add_stochastic(Family::gaussian(2), {mu, lambda}, Plates{3});
      g.observe(y, tensor({3, 2}, {0.5, 1.0, -1.0, 0.2, 0.3, 0.3}));
      run_vb(g, {.order = {}, .max_sweeps = 20});
      return std::tuple{g.elbo(), Eigen::MatrixXd(g.posterior(mu)[0].at(0)),
                        Eigen::MatrixXd(g.posterior(lambda)[0].at(0))};
    };
    const auto [e1, m1, l1] = build(true);
    const auto [e2, m2, l2] = build(false);
    CHECK(e1 == doctest::Approx(e2).epsilon(1e-12));
    CHECK(rel_err(m1, m2) < 1e-12);
    CHECK(rel_err(l1, l2) < 1e-12);
  }

  TEST_CASE("mixture gate update uses component log densities") {
    Graph g;
    const Eigen::Vector3d alpha(1.0, 2.0, 3.0);
    const auto p = g.add_stochastic(Family::dirichlet(3), {alpha});
    const auto z = g.add_stochastic(Family::categorical(3), {p}, Plates{2});
    Eigen::MatrixXd means(3, 1);
    means << -1.0, 0.0, 2.0;
    BlockArray mean_values(Plates{3}, 1, 1);
    for (int k = 0; k < 3; ++k) mean_values.at(k)(0, 0) = means(k);
    const auto mu = g.add_constant({MomentKind::Vector, 1}, mean_values);
    const auto tau = g.add_stochastic(Family::gamma(), {3.0, 2.0}, Plates{3});
    const auto y = g.add_mixture(z, Family::gaussian(1), {mu, tau});
    const std::vector<double> data{0.4, 1.7};
    g.observe(y, tensor({2, 1}, data));
    g.update_node(z);

    // E[log pi_k] + E[log N(y | mu_k, tau_k)] per element, via the
    // single-element API.
    const auto log_pi =
        moments_from_natural({Family::dirichlet(3), {alpha - Eigen::Vector3d::Ones()}});
    const auto tau_u =
        moments_from_natural({Family::gamma(), {Eigen::MatrixXd::Constant(1, 1, -2.0),
                                                Eigen::MatrixXd::Constant(1, 1, 2.0)}});
    for (int n = 0; n < 2; ++n) {
      const auto [u, h] = statistics_of_value(Family::gaussian(1),
                                              Eigen::MatrixXd::Constant(1, 1, data[n]));
      for (int k = 0; k < 3; ++k) {
        const std::vector<MomentVector> parents{
            moments_of_constant({MomentKind::Vector, 1}, means.row(k)), tau_u};
        const auto phi = natural_from_parent_moments(Family::gaussian(1), parents);
        const double score =
            expected_log_pdf(phi, u, expected_log_partition(Family::gaussian(1), parents), h);
        const double want = log_pi.blocks[0](k, 0) + score;
        CHECK(g.posterior(z)[0].at(n)(k, 0) == doctest::Approx(want).epsilon(1e-13));
      }
    }
  }

  TEST_CASE("plate broadcasting") {
    CHECK(plate_broadcast(Plates{5}, Plates{}) == Plates{5});
    CHECK(plate_broadcast(Plates{7, 1}, Plates{5}) == Plates{7, 5});
    CHECK_THROWS_AS(plate_broadcast(Plates{3}, Plates{4}), PlateMismatchError);
    CHECK(broadcasts_to(Plates{1, 5}, Plates{3, 5}));
    CHECK_FALSE(broadcasts_to(Plates{3, 5}, Plates{5}));
  }

  TEST_CASE("sum product moments") {
    SUBCASE("constant vectors") {
      Graph g;
      const auto a = g.add_constant({MomentKind::Vector, 2}, Eigen::MatrixXd(Eigen::Vector2d(1.0, 1.0)));
      const auto b = g.add_constant({MomentKind::Vector, 2}, Eigen::MatrixXd(Eigen::Vector2d(2.0, 3.0)));
      const auto s = g.add_sum_product(a, b);
      CHECK(g.moments(s).blocks[0].at(0)(0, 0) == 5.0);
      CHECK(g.moments(s).blocks[1].at(0)(0, 0) == 25.0);
    }

    SUBCASE("zero means and monte carlo") {
      Graph g;
      Eigen::Matrix2d la, lb;
      la << 2.0, 0.4, 0.4, 1.0;
      lb << 0.7, -0.2, -0.2, 1.5;
      const Eigen::Vector2d ma(0.5, -1.0), mb(1.2, 0.3);
      for (const bool centred : {true, false}) {
        CAPTURE(centred);
        const Eigen::Vector2d ca = centred ? Eigen::Vector2d::Zero() : ma;
        const Eigen::Vector2d cb = centred ? Eigen::Vector2d::Zero() : mb;
        const auto a = g.add_stochastic(Family::gaussian(2), {ca, la});
        const auto b = g.add_stochastic(Family::gaussian(2), {cb, lb});
        const auto s = g.add_sum_product(a, b);
        const Eigen::Matrix2d sa = la.inverse(), sb = lb.inverse();
        if (centred) {
          CHECK(g.moments(s).blocks[0].at(0)(0, 0) == 0.0);
          CHECK(g.moments(s).blocks[1].at(0)(0, 0) ==
                doctest::Approx((sa * sb).trace()).epsilon(1e-14));
        }
        // Brute-force sample of a^T b.
        std::mt19937_64 rng(21);
        std::normal_distribution<double> normal(0.0, 1.0);
        const Eigen::Matrix2d fa = sa.llt().matrixL(), fb = sb.llt().matrixL();
        constexpr int kDraws = 1'000'000;
        double m1 = 0.0, m2 = 0.0;
        for (int i = 0; i < kDraws; ++i) {
          const Eigen::Vector2d za(normal(rng), normal(rng)), zb(normal(rng), normal(rng));
          const double v = (ca + fa * za).dot(cb + fb * zb);
          m1 += v;
          m2 += v * v;
        }
        m1 /= kDraws;
        m2 /= kDraws;
        CHECK(std::abs(g.moments(s).blocks[0].at(0)(0, 0) - m1) < 1e-2);
        CHECK(std::abs(g.moments(s).blocks[1].at(0)(0, 0) - m2) < 1e-2 * std::max(1.0, m2));
      }
    }
  }

  TEST_CASE("sum product forwards child messages") {
    Graph g;
    Eigen::Matrix2d lb;
    lb << 0.7, -0.2, -0.2, 1.5;
    const Eigen::Vector2d mb(1.2, 0.3);
    const auto a = g.add_stochastic(Family::gaussian(2), {Eigen::Vector2d::Zero(),
                                                          Eigen::Matrix2d::Identity()});
    const auto b = g.add_stochastic(Family::gaussian(2), {mb, lb});
    const auto s = g.add_sum_product(a, b);
    const auto y = g.add_stochastic(Family::gaussian(1), {s, 2.0});
    g.observe(y, tensor({1}, {1.3}));
    // Child message to s is (tau y, -tau / 2); a receives (m1 E[b], m2 E[b b^T]).
    const Eigen::Matrix2d bb = lb.inverse() + mb * mb.transpose();
    const auto msg = g.collect_child_messages(a);
    CHECK(rel_err(msg[0].at(0), 2.0 * 1.3 * mb) < 1e-14);
    CHECK(rel_err(msg[1].at(0), -1.0 * bb) < 1e-14);
  }

  TEST_CASE("count messages to a dirichlet parent") {
    Graph g;
    const auto alpha = g.add_stochastic(Family::dirichlet(5), {Eigen::VectorXd::Constant(5, 0.01)});
    const auto z = g.add_stochastic(Family::categorical(5), {alpha}, Plates{500});
    std::vector<double> labels(500, 1.0);
    std::fill(labels.begin(), labels.begin() + 200, 0.0);
    g.observe(z, tensor({500}, labels));
    const auto msg = g.collect_child_messages(alpha);
    CHECK(msg[0].at(0) == Eigen::MatrixXd(Eigen::VectorXd{{200.0, 300.0, 0.0, 0.0, 0.0}}));
    g.update_node(alpha);
    const Eigen::VectorXd want{{200.01, 300.01, 0.01, 0.01, 0.01}};
    CHECK(rel_err(g.posterior(alpha)[0].at(0).array() + 1.0, want) < 1e-14);
    CHECK(g.update_node(alpha) == 0.0);
  }

  TEST_CASE("child messages are linear in the mask") {
    const std::vector<double> labels{0, 1, 2, 1, 1, 0, 2, 2, 2, 1};
    auto message = [&](std::vector<std::uint8_t> mask) {
      Graph g;
      const auto p = g.add_stochastic(Family::dirichlet(3), {Eigen::Vector3d::Ones()});
      const auto z = g.add_stochastic(Family::categorical(3), {p}, Plates{10});
      g.observe(z, tensor({10}, labels), Mask{{10}, std::move(mask)});
      return Eigen::MatrixXd(g.collect_child_messages(p)[0].at(0));
    };
    const auto m1 = message({1, 1, 0, 0, 1, 0, 0, 0, 0, 0});
    const auto m2 = message({0, 0, 1, 0, 0, 0, 1, 1, 0, 1});
    const auto both = message({1, 1, 1, 0, 1, 0, 1, 1, 0, 1});
    CHECK(both == m1 + m2);
    // Brute-force count over the present elements.
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (int i : {0, 1, 4}) counts(static_cast<int>(labels[i])) += 1.0;
    CHECK(m1 == Eigen::MatrixXd(counts));
  }

  TEST_CASE("mixture prior averages component parameters") {
    auto prior = [](const Eigen::Vector3d& r, const Eigen::Vector3d& means) {
      Graph g;
      BlockArray values(Plates{3}, 1, 1);
      for (int k = 0; k < 3; ++k) values.at(k)(0, 0) = means(k);
      const auto mu = g.add_constant({MomentKind::Vector, 1}, values);
      const auto tau = g.add_stochastic(Family::gamma(), {2.0, 1.0}, Plates{3});
      const auto y = g.add_mixture(Eigen::MatrixXd(r), Family::gaussian(1), {mu, tau});
      return g.collect_prior(y);
    };
    const Eigen::Vector3d means(-1.0, 0.5, 2.0);
    const auto one_hot = prior({0.0, 1.0, 0.0}, means);
    // Gaussian(0.5, E[tau] = 2).
    CHECK(one_hot[0].at(0)(0, 0) == 2.0 * 0.5);
    CHECK(one_hot[1].at(0)(0, 0) == -1.0);
    const auto tied = prior({0.2, 0.3, 0.5}, Eigen::Vector3d::Constant(0.7));
    CHECK(tied[0].at(0)(0, 0) == doctest::Approx(2.0 * 0.7).epsilon(1e-15));
    CHECK(tied[1].at(0)(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  }

  TEST_CASE("a missing cell forces expanded covariances") {
    auto plan = [](bool missing) {
      Graph g;
      const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
      const Eigen::Matrix2d eye = Eigen::Matrix2d::Identity();
      const auto x = g.add_stochastic(Family::gaussian(2), {zero, eye}, Plates{4, 1});
      const auto w = g.add_stochastic(Family::gaussian(2), {zero, eye}, Plates{3});
      const auto f = g.add_sum_product(x, w);
      const auto y = g.add_stochastic(Family::gaussian(1), {f, 1.0});
      std::vector<double> values(12);
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.1 * static_cast<double>(i);
      std::vector<std::uint8_t> mask(12, 1);
      if (missing) mask[5] = 0;
      g.observe(y, tensor({4, 3, 1}, values), Mask{{4, 3}, mask});
      return std::pair{g.plan_broadcast(x), g.plan_broadcast(w)};
    };
    const auto [full_x, full_w] = plan(false);
    CHECK(full_x.shared(1, 0));
    CHECK(full_w.shared(1, 0));
    const auto [gap_x, gap_w] = plan(true);
    CHECK_FALSE(gap_x.shared(1, 0));
    CHECK_FALSE(gap_w.shared(1, 0));
  }
}
