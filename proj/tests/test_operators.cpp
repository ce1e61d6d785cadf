#include <doctest.h>

#include <cmath>

#include "eot/error.hpp"
#include "eot/operators.hpp"
#include "test_support.hpp"

using namespace eot;
using testing::vec;

namespace {

TransportFit random_fit(std::mt19937_64& rng, std::size_t n, std::size_t m, double bound, double eps,
                        double tol = 1e-10) {
  SolveOptions options;
  options.tol = tol;
  return fit_transport(testing::random_labels(rng, n), testing::random_labels(rng, m),
                       CostFunction::table(testing::random_table(rng, n, m, bound)), eps, options);
}

double l2(const Eigen::VectorXd& weights, const Eigen::VectorXd& h) {
  return std::sqrt(weights.dot(h.cwiseProduct(h)));
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> z;
  Eigen::VectorXd h(n);
  for (auto& x : h) x = z(rng);
  return h;
}

}  // namespace

TEST_CASE("operators fix constants") {
  std::mt19937_64 rng(1);
  const auto fit = random_fit(rng, 5, 7, 3.0, 1.0);
  const OperatorContext ops(fit);
  CHECK((ops.apply_AP(Eigen::VectorXd::Ones(5)).array() - 1.0).abs().maxCoeff() <= 1e-8);
  CHECK((ops.apply_AQ(Eigen::VectorXd::Ones(7)).array() - 1.0).abs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(ops.apply_AP(Eigen::VectorXd::Ones(7)), InputError);
  CHECK_THROWS_AS(ops.apply_AQ(Eigen::VectorXd::Ones(5)), InputError);
}

TEST_CASE("operators under zero cost average") {
  std::mt19937_64 rng(2);
  const auto p = testing::random_labels(rng, 4);
  const auto q = testing::random_labels(rng, 3);
  const auto fit = fit_transport(p, q, CostFunction::constant(0.0), 1.0);
  const OperatorContext ops(fit);
  const Eigen::VectorXd h = vec({1.0, -2.0, 0.5, 4.0});
  const Eigen::VectorXd k = vec({3.0, 0.0, -1.0});
  CHECK((ops.apply_AP(h).array() - p.weights().dot(h)).abs().maxCoeff() < 1e-14);
  CHECK((ops.apply_AQ(k).array() - q.weights().dot(k)).abs().maxCoeff() < 1e-14);
}

TEST_CASE("operators match a loop evaluation") {
  std::mt19937_64 rng(3);
  const auto fit = random_fit(rng, 3, 4, 2.0, 1.0);
  const OperatorContext ops(fit);
  const Eigen::VectorXd h = random_vector(rng, 3);
  const Eigen::VectorXd k = random_vector(rng, 4);
  const Eigen::VectorXd ap = ops.apply_AP(h);
  const Eigen::VectorXd aq = ops.apply_AQ(k);
  for (Eigen::Index j = 0; j < 4; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) s += fit.plan.v[i] * fit.plan.xi(i, j) * h[i];
    CHECK(std::abs(ap[j] - s) <= 1e-14);
  }
  for (Eigen::Index i = 0; i < 3; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < 4; ++j) s += fit.plan.w[j] * fit.plan.xi(i, j) * k[j];
    CHECK(std::abs(aq[i] - s) <= 1e-14);
  }
  CHECK((ops.composite(Side::P) * h - ops.apply_AQ(ops.apply_AP(h))).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((ops.composite(Side::Q) * k - ops.apply_AP(ops.apply_AQ(k))).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("centering") {
  const Eigen::VectorXd uniform = vec({0.5, 0.5});
  CHECK(center(uniform, vec({2.0, 2.0})).cwiseAbs().maxCoeff() == 0.0);
  CHECK(center(uniform, vec({1.0, 3.0})) == vec({-1.0, 1.0}));
  CHECK(center(uniform, vec({-1.0, 1.0})) == vec({-1.0, 1.0}));
  CHECK_THROWS_AS(center(uniform, vec({1.0})), InputError);
}

TEST_CASE("mass transfer and contraction") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    // The identity holds up to the marginal error of the plan.
    const auto fit = random_fit(rng, 6, 5, 2.0, 1.0, 1e-13);
    const OperatorContext ops(fit);
    const Eigen::VectorXd h = random_vector(rng, 6);
    CHECK(std::abs(ops.w().dot(ops.apply_AP(h)) - ops.v().dot(h)) <= 1e-12);
    const Eigen::VectorXd k = random_vector(rng, 5);
    CHECK(std::abs(ops.v().dot(ops.apply_AQ(k)) - ops.w().dot(k)) <= 1e-12);
    const Eigen::VectorXd hc = center(ops.v(), h);
    CHECK(l2(ops.v(), ops.apply_composite(Side::P, hc)) <= ops.delta() * l2(ops.v(), hc) + 1e-12);
  }
}

TEST_CASE("Neumann solves") {
  std::mt19937_64 rng(5);
  const auto fit = random_fit(rng, 3, 4, 1.5, 1.0);
  const OperatorContext ops(fit);
  for (Side side : {Side::P, Side::Q}) {
    const Eigen::VectorXd& wts = ops.weights(side);
    const Eigen::VectorXd rhs = center(wts, random_vector(rng, wts.size()));
    CHECK(ops.neumann_solve(Eigen::VectorXd::Zero(wts.size()), side, std::nullopt).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ops.neumann_solve(Eigen::VectorXd::Zero(wts.size()), side, 7).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::VectorXd direct = ops.neumann_solve(rhs, side, std::nullopt);
    const Eigen::MatrixXd& t = ops.composite(side);
    CHECK((direct - t * direct - rhs).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(std::abs(wts.dot(direct)) <= 1e-12);

    const double rate = ops.spectral_gap(side).value;
    for (std::size_t n : {5, 10, 20, 40}) {
      const Eigen::VectorXd truncated = ops.neumann_solve(rhs, side, n);
      const double tail = std::pow(rate, static_cast<double>(n + 1)) / (1.0 - rate);
      CHECK(l2(wts, truncated - direct) <= tail * l2(wts, rhs) + 1e-12);
    }
    CHECK(ops.neumann_solve(rhs, side, 0) == rhs);
    CHECK_THROWS_WITH_AS(ops.neumann_solve(rhs.array() + 1.0, side, std::nullopt), "rhs not centered",
                         InputError);
    CHECK_THROWS_WITH_AS(ops.neumann_solve(rhs.array() + 1.0, side, 3), "rhs not centered", InputError);
  }
}

TEST_CASE("Neumann solve is the identity under zero cost") {
  std::mt19937_64 rng(6);
  const auto fit = fit_transport(testing::random_labels(rng, 4), testing::random_labels(rng, 5),
                                 CostFunction::constant(0.0), 1.0);
  const OperatorContext ops(fit);
  const Eigen::VectorXd rhs = center(ops.v(), random_vector(rng, 4));
  CHECK((ops.neumann_solve(rhs, Side::P, std::nullopt) - rhs).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((ops.neumann_solve(rhs, Side::P, 12) - rhs).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("spectral gap") {
  std::mt19937_64 rng(7);
  const auto zero = fit_transport(testing::random_labels(rng, 4), testing::random_labels(rng, 5),
                                  CostFunction::constant(0.0), 1.0);
  CHECK(OperatorContext(zero).spectral_gap(Side::P).value <= 1e-10);
  CHECK(OperatorContext(zero).spectral_gap(Side::Q).value <= 1e-10);

  const auto single = fit_transport(DiscreteMeasure::uniform({{0.0}}), DiscreteMeasure::uniform({{1.0}, {2.0}}),
                                    CostFunction::sq_euclidean(), 1.0);
  CHECK(OperatorContext(single).spectral_gap(Side::P).value == 0.0);

  for (int trial = 0; trial < 30; ++trial) {
    const auto fit = random_fit(rng, 8, 6, 2.0, 0.5);
    const OperatorContext ops(fit);
    for (Side side : {Side::P, Side::Q}) {
      const auto gap = ops.spectral_gap(side);
      CHECK(gap.converged);
      CHECK(gap.value >= 0.0);
      CHECK(gap.value <= ops.delta() + 1e-8);
    }
    // Both composites share their nonzero spectrum.
    CHECK(ops.spectral_gap(Side::P).value == doctest::Approx(ops.spectral_gap(Side::Q).value).epsilon(1e-8));
  }
}

TEST_CASE("truncation schedules") {
  CHECK(proof_schedule_terms(2000, 2000) == 3);
  CHECK(proof_schedule_terms(1, 1) == 0);
  CHECK(proof_schedule_terms(2, 2) == 0);
  CHECK(proof_schedule_terms(100, 100) == 2);
  // tail rate^(N+1)/(1-rate) <= 1e-8 at rate 0.5 needs N >= 26
  CHECK(adaptive_terms(0.5, 100, 100) >= 26);
  CHECK(std::pow(0.5, static_cast<double>(adaptive_terms(0.5, 100, 100) + 1)) / 0.5 <= 1e-8);
  CHECK(adaptive_terms(0.0, 2000, 2000) == proof_schedule_terms(2000, 2000));
}

TEST_CASE("operator context rejects inconsistent plans") {
  PlanDensity plan;
  plan.xi = Eigen::MatrixXd::Constant(2, 2, 1.5);
  plan.v = vec({0.5, 0.5});
  plan.w = vec({0.5, 0.5});
  CHECK_THROWS_AS(OperatorContext(plan, 1.0), NumericError);
  plan.xi.setOnes();
  plan.w = vec({1.0});
  CHECK_THROWS_AS(OperatorContext(plan, 1.0), InputError);
}
