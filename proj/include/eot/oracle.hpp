#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "eot/inference.hpp"
#include "eot/measures.hpp"
#include "eot/sinkhorn.hpp"

namespace eot::oracle {

/// A finite population with strictly positive true weights.
struct FinitePopulation {
  std::string name;
  DiscreteMeasure p;
  DiscreteMeasure q;
  CostFunction cost;
  double epsilon = 1.0;
  double lambda = 0.5;

  CostContext context() const { return build_cost(cost, p, q, epsilon); }
};

FinitePopulation make_population(std::string name, DiscreteMeasure p, DiscreteMeasure q,
                                 CostFunction cost, double epsilon, double lambda);

/// P uniform on {0, 1}, Q uniform on {0, 2}, squared Euclidean, eps = 1.
FinitePopulation fixture_f1();
/// P = (0.5, 0.3, 0.2) on {0, 1, 2}, Q uniform on {0, 0.5, 1.5, 3},
/// squared Euclidean, eps = 1, lambda = 1/2.
FinitePopulation fixture_f2();

nlohmann::json to_json(const FinitePopulation& pop);
FinitePopulation population_from_json(const nlohmann::json& doc);
FinitePopulation load_population(const std::filesystem::path& path);

constexpr double kExactTolerance = 1e-13;

PotentialPair exact_solve(const FinitePopulation& pop);
PlanDensity exact_plan(const FinitePopulation& pop);

double exact_cost(const FinitePopulation& pop);
double exact_sinkhorn_cost(const FinitePopulation& pop);
double exact_plan_expectation(const FinitePopulation& pop, const EtaFunction& eta);
double exact_cond_expectation(const FinitePopulation& pop, const Point& x, const EtaFunction& eta);
Eigen::VectorXd exact_map(const FinitePopulation& pop, const Point& x);
double exact_divergence(const FinitePopulation& pop);

/// lambda Var_P[f] + (1 - lambda) Var_Q[g], times eps^2.
double exact_sigma_cost(const FinitePopulation& pop);
double exact_sigma_plan(const FinitePopulation& pop, const Eigen::MatrixXd& eta);
double exact_sigma_plan(const FinitePopulation& pop, const EtaFunction& eta);
double exact_sigma_cond(const FinitePopulation& pop, const Point& x, const EtaFunction& eta);
/// Asymptotic covariance of the entropic map at x (d x d).
Eigen::MatrixXd exact_map_covariance(const FinitePopulation& pop, const Point& x);
/// Asymptotic covariance of the colocalization values at the thresholds.
Eigen::MatrixXd exact_coloc_covariance(const FinitePopulation& pop,
                                       const std::vector<double>& thresholds);
double exact_sigma_divergence(const FinitePopulation& pop);

struct BregmanResult {
  Eigen::MatrixXd coupling;  ///< pi_ij
  Eigen::MatrixXd xi;        ///< pi_ij / (v_i w_j)
  std::size_t iterations = 0;
  double marginal_error = 0.0;
  bool converged = false;
};

/// Minimizes <c, pi> + eps KL(pi | P x Q) over couplings by alternating
/// Bregman (KL) projections onto the two marginal constraints, acting on
/// the coupling itself. Requires n * m <= 400.
BregmanResult brute_force_plan(const FinitePopulation& pop, std::size_t max_iter = 1000000,
                               double tol = 1e-12);

}  // namespace eot::oracle
