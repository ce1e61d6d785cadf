#include <doctest.h>

#include <cmath>

#include "eot/error.hpp"
#include "eot/oracle.hpp"
#include "eot/sinkhorn.hpp"
#include "test_support.hpp"

using namespace eot;
using testing::vec;

namespace {

const double kE = std::exp(-1.0);

// P = Q = uniform{a, b}, c = 0 on the diagonal and 1 off it.
struct Symmetric {
  DiscreteMeasure p = DiscreteMeasure::uniform({{0.0}, {1.0}});
  CostFunction cost = CostFunction::indicator(0.5);
};

double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("single atoms") {
  const auto p = DiscreteMeasure::uniform({{0.0}});
  const auto q = DiscreteMeasure::uniform({{1.0}});
  const auto fit = fit_transport(p, q, CostFunction::constant(0.7), 1.0);
  CHECK(fit.report.converged);
  CHECK(fit.potentials.f[0] == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(std::abs(fit.potentials.g[0]) < 1e-15);
  CHECK(fit.entropic_cost() == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(fit.plan.xi(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("zero cost gives zero potentials and the product plan") {
  const auto p = DiscreteMeasure::uniform({{0.0}, {1.0}, {2.0}, {3.0}});
  const auto q = DiscreteMeasure::uniform({{0.5}, {-1.0}});
  const auto fit = fit_transport(p, q, CostFunction::constant(0.0), 1.0);
  CHECK(fit.potentials.f.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.potentials.g.cwiseAbs().maxCoeff() == 0.0);
  CHECK(max_abs(fit.plan.xi.array() - 1.0) == 0.0);
  CHECK(fit.entropic_cost() == 0.0);
  CHECK(fit.sinkhorn_cost() == 0.0);
  CHECK(sinkhorn_divergence(p, q, CostFunction::constant(0.0), 1.0) == 0.0);
}

TEST_CASE("zero cost with arbitrary weights is zero up to weight rounding") {
  std::mt19937_64 rng(1);
  const auto p = testing::random_measure(rng, 5);
  const auto q = testing::random_measure(rng, 4);
  const auto fit = fit_transport(p, q, CostFunction::constant(0.0), 1.0);
  CHECK(fit.potentials.f.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(fit.potentials.g.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(std::abs(fit.entropic_cost()) <= 1e-15);
}

TEST_CASE("constant cost") {
  std::mt19937_64 rng(2);
  const auto p = testing::random_measure(rng, 3);
  const auto q = testing::random_measure(rng, 6);
  const auto fit = fit_transport(p, q, CostFunction::constant(2.5), 0.3);
  CHECK(fit.sinkhorn_cost() == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(fit.entropic_cost() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("symmetric two-point problem in closed form") {
  const Symmetric s;
  const auto fit = fit_transport(s.p, s.p, s.cost, 1.0);
  const double f = -std::log((1.0 + kE) / 2.0);
  CHECK(f == doctest::Approx(0.3799).epsilon(1e-4));
  CHECK(max_abs(fit.potentials.f.array() - f) < 1e-10);
  CHECK(max_abs(fit.potentials.g) < 1e-10);
  CHECK(fit.entropic_cost() == doctest::Approx(f).epsilon(1e-10));
  CHECK(fit.sinkhorn_cost() == doctest::Approx(kE / (1.0 + kE)).epsilon(1e-10));
  CHECK(fit.sinkhorn_cost() == doctest::Approx(0.2689).epsilon(1e-4));
  Eigen::MatrixXd xi(2, 2);
  xi << 2.0 / (1.0 + kE), 2.0 * kE / (1.0 + kE), 2.0 * kE / (1.0 + kE), 2.0 / (1.0 + kE);
  CHECK(max_abs(fit.plan.xi - xi) < 1e-10);
  CHECK(max_abs(fit.plan.row_average.array() - 1.0) < 1e-10);
  CHECK(max_abs(fit.plan.col_average.array() - 1.0) < 1e-10);
  CHECK(plan_expectation(fit.plan, fit.ctx.cost()) == doctest::Approx(fit.sinkhorn_cost()).epsilon(1e-15));

  // The closed form satisfies both optimality equations.
  PotentialPair exact{Eigen::VectorXd::Constant(2, f), Eigen::VectorXd::Zero(2)};
  const auto residual = fixed_point_residual(exact, s.p, s.p, fit.ctx);
  CHECK(residual.f < 1e-15);
  CHECK(residual.g < 1e-15);
}

TEST_CASE("symmetric two-point problem against the Bregman primal") {
  const Symmetric s;
  const auto pop = oracle::make_population("sym", s.p, s.p, s.cost, 1.0, 0.5);
  const auto primal = oracle::brute_force_plan(pop);
  CHECK(primal.converged);
  const auto fit = fit_transport(s.p, s.p, s.cost, 1.0);
  CHECK(max_abs(primal.xi - fit.plan.xi) < 1e-10);
}

TEST_CASE("solver report") {
  const auto pop = oracle::fixture_f2();
  SolveOptions options;
  options.max_iter = 1;
  const auto fit = fit_transport(pop.p, pop.q, pop.cost, 1.0, options);
  CHECK_FALSE(fit.report.converged);
  CHECK(fit.report.iterations == 1);
  CHECK(fit.report.final_residual > options.tol);

  const auto good = fit_transport(pop.p, pop.q, pop.cost, 1.0);
  CHECK(good.report.converged);
  CHECK(good.report.final_residual <= 1e-10);
  CHECK(good.report.iterations > 1);

  options.tol = 0.0;
  CHECK_THROWS_AS(solve(pop.p, pop.q, pop.context(), options), InputError);
}

TEST_CASE("potentials normalization and fixed-point residuals") {
  const auto pop = oracle::fixture_f2();
  const auto fit = fit_transport(pop.p, pop.q, pop.cost, 1.0);
  CHECK(std::abs(pop.q.weights().dot(fit.potentials.g)) <= 1e-10);
  const auto r = fixed_point_residual(fit.potentials, pop.p, pop.q, fit.ctx);
  CHECK(r.f <= 1e-10);
  CHECK(r.g <= 1e-10);
}

TEST_CASE("plan density rejects non-optimal potentials") {
  const auto pop = oracle::fixture_f2();
  PotentialPair zero{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4)};
  CHECK_THROWS_WITH_AS(plan_density(zero, pop.p, pop.q, pop.context(), 1e-10), "non-optimal potentials",
                       NumericError);
}

TEST_CASE("duality, marginals and potential bounds on random bounded costs") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> size(1, 30);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = size(rng);
    const std::size_t m = size(rng);
    const auto p = testing::random_labels(rng, n);
    const auto q = testing::random_labels(rng, m);
    const auto cost = CostFunction::table(testing::random_table(rng, n, m, 5.0));
    for (double eps : {0.25, 1.0, 4.0}) {
      const auto fit = fit_transport(p, q, cost, eps);
      REQUIRE(fit.report.converged);
      const double s = fit.entropic_cost();
      CHECK(fit.report.duality_gap <= 1e-8 * (1.0 + std::abs(s)));
      CHECK(fit.plan.marginal_error() <= 1e-8);
      const double bound = 3.0 * fit.ctx.scaled_sup_bound();
      CHECK(fit.potentials.f.cwiseAbs().maxCoeff() <= bound + 1e-10);
      CHECK(fit.potentials.g.cwiseAbs().maxCoeff() <= bound + 1e-10);
      CHECK(fit.plan.xi.minCoeff() >= std::exp(-bound));
      CHECK(fit.plan.xi.maxCoeff() <= std::exp(bound));
      CHECK(std::abs(primal_cost(fit.plan, fit.ctx) - s) <= 1e-8 * (1.0 + std::abs(s)));
    }
  }
}

TEST_CASE("cost shift moves the value and leaves the plan") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testing::random_labels(rng, 7);
    const auto q = testing::random_labels(rng, 5);
    const Eigen::MatrixXd c = testing::random_table(rng, 7, 5, 3.0);
    const double kappa = 1.75;
    const auto a = fit_transport(p, q, CostFunction::table(c), 0.5);
    const auto b = fit_transport(p, q, CostFunction::table(c.array() + kappa), 0.5);
    CHECK(b.entropic_cost() - a.entropic_cost() == doctest::Approx(kappa).epsilon(1e-10));
    CHECK(max_abs(a.plan.xi - b.plan.xi) < 1e-10);
  }
}

TEST_CASE("epsilon rescaling") {
  std::mt19937_64 rng(13);
  SolveOptions tight;
  tight.tol = 1e-13;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testing::random_labels(rng, 6);
    const auto q = testing::random_labels(rng, 8);
    const Eigen::MatrixXd c = testing::random_table(rng, 6, 8, 5.0);
    for (double eps : {0.25, 4.0}) {
      const double s_eps = fit_transport(p, q, CostFunction::table(c), eps, tight).entropic_cost();
      const double s_one = fit_transport(p, q, CostFunction::table(c / eps), 1.0, tight).entropic_cost();
      CHECK(std::abs(s_eps - eps * s_one) <= 1e-12 * std::max(1.0, std::abs(s_eps)));
    }
  }
}

TEST_CASE("canonical extensions") {
  const auto pop = oracle::fixture_f2();
  const auto fit = fit_transport(pop.p, pop.q, pop.cost, 1.0);
  for (std::size_t i = 0; i < pop.p.size(); ++i) {
    CHECK(std::abs(extend_f(fit.potentials, pop.p.atom(i), pop.q, pop.cost, 1.0) -
                   fit.potentials.f[static_cast<Eigen::Index>(i)]) <= 10 * 1e-10);
  }
  for (std::size_t j = 0; j < pop.q.size(); ++j) {
    CHECK(std::abs(extend_g(fit.potentials, pop.q.atom(j), pop.p, pop.cost, 1.0) -
                   fit.potentials.g[static_cast<Eigen::Index>(j)]) <= 10 * 1e-10);
  }
  const auto zero = fit_transport(pop.p, pop.q, CostFunction::constant(0.0), 1.0);
  CHECK(extend_f(zero.potentials, {17.0}, pop.q, CostFunction::constant(0.0), 1.0) == 0.0);
}

TEST_CASE("plan and conditional expectations") {
  const auto pop = oracle::fixture_f2();
  const auto fit = fit_transport(pop.p, pop.q, pop.cost, 1.0);
  CHECK(plan_expectation(fit.plan, Eigen::MatrixXd::Ones(3, 4)) == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(3, 4);
  bad(1, 1) = NAN;
  CHECK_THROWS_AS(plan_expectation(fit.plan, bad), InputError);
  CHECK_THROWS_AS(plan_expectation(fit.plan, Eigen::MatrixXd::Ones(2, 4)), InputError);
  CHECK(cond_expectation(fit.potentials, {0.7}, Eigen::VectorXd::Ones(4), pop.q, pop.cost, 1.0) ==
        doctest::Approx(1.0).epsilon(1e-10));

  const auto zero_cost = CostFunction::constant(0.0);
  const auto zero = fit_transport(pop.p, pop.q, zero_cost, 1.0);
  const Eigen::MatrixXd eta = fit.ctx.cost();
  const double product = pop.p.weights().dot(eta * pop.q.weights());
  CHECK(plan_expectation(zero.plan, eta) == doctest::Approx(product).epsilon(1e-14));
  const Eigen::VectorXd row = vec({4.0, -1.0, 2.0, 0.5});
  CHECK(cond_expectation(zero.potentials, {0.3}, row, pop.q, zero_cost, 1.0) ==
        doctest::Approx(pop.q.weights().dot(row)).epsilon(1e-14));
}

TEST_CASE("entropic map") {
  const auto pop = oracle::fixture_f2();
  const auto zero = fit_transport(pop.p, pop.q, CostFunction::constant(0.0), 1.0);
  CHECK(entropic_map(zero.potentials, {2.0}, pop.q, CostFunction::constant(0.0), 1.0)[0] ==
        doctest::Approx(1.25).epsilon(1e-14));

  const auto dirac = DiscreteMeasure::uniform({{1.5, -2.0}});
  const auto p = DiscreteMeasure::uniform({{0.0, 0.0}, {1.0, 1.0}});
  const auto fit = fit_transport(p, dirac, CostFunction::sq_euclidean(), 1.0);
  for (const Point& x : {Point{0.0, 0.0}, Point{5.0, -3.0}}) {
    const auto mx = entropic_map(fit.potentials, x, dirac, CostFunction::sq_euclidean(), 1.0);
    CHECK(mx[0] == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(mx[1] == doctest::Approx(-2.0).epsilon(1e-14));
  }

  Eigen::MatrixXd table(2, 2);
  table << 0, 1, 1, 0;
  const auto labels = DiscreteMeasure::uniform({{0.0}, {1.0}});
  const auto lf = fit_transport(labels, labels, CostFunction::table(table), 1.0);
  CHECK_THROWS_WITH_AS(entropic_map(lf.potentials, {0.0}, labels, CostFunction::table(table), 1.0),
                       "map requires coordinate data", InputError);
}

TEST_CASE("Sinkhorn divergence") {
  std::mt19937_64 rng(21);
  const auto p = testing::random_measure(rng, 6, 2);
  CHECK(std::abs(sinkhorn_divergence(p, p, CostFunction::sq_euclidean(), 0.5)) <= 1e-9);
  const auto q = testing::random_measure(rng, 4, 2);
  const auto d = solve_divergence(p, q, CostFunction::sq_euclidean(), 0.5);
  CHECK(d.converged());
  CHECK(d.value == doctest::Approx(d.pq.entropic_cost() - 0.5 * (d.pp.entropic_cost() + d.qq.entropic_cost())));
  CHECK(d.value > 0.0);
}
