#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "eot/operators.hpp"
#include "eot/sinkhorn.hpp"

namespace eot {

enum class VarianceMethod { cost, plan, conditional, divergence };

std::string_view to_string(VarianceMethod method);

/// Plug-in asymptotic variance together with the quantities needed to turn
/// it into an interval. `n`, `m` are sample sizes (not atom counts).
struct VarianceEstimate {
  double value = 0.0;
  double lambda_hat = 0.5;  ///< m / (n + m)
  double scale = 1.0;       ///< sqrt(n m / (n + m))
  VarianceMethod method = VarianceMethod::cost;
  NeumannTerms terms_used;  ///< nullopt for the direct inverse
  std::size_t n = 0;
  std::size_t m = 0;
};

VarianceEstimate make_variance(double value, std::size_t n, std::size_t m, VarianceMethod method,
                               NeumannTerms terms = std::nullopt);

struct ConfidenceInterval {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  double std_error = 0.0;  ///< sqrt(variance) / scale
  bool degenerate = false; ///< zero variance; the interval collapses to a point

  double width() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

/// Variances at or below this are reported as degenerate.
inline constexpr double kDegenerateVariance = 1e-16;

/// estimate +/- z_{(1+level)/2} sqrt(var) / sqrt(nm/(n+m)).
ConfidenceInterval ci(double estimate, const VarianceEstimate& var, double level);

/// How many Neumann terms the plan/conditional estimators use.
struct NeumannPolicy {
  enum class Kind { direct, fixed, schedule, proof_schedule };
  Kind kind = Kind::direct;
  std::size_t terms = 0;

  static NeumannPolicy direct() { return {Kind::direct, 0}; }
  static NeumannPolicy fixed(std::size_t n) { return {Kind::fixed, n}; }
  /// Proof schedule raised until the measured geometric tail is below 1e-8.
  static NeumannPolicy schedule() { return {Kind::schedule, 0}; }
  /// ceil(sqrt(log_+(nm/(n+m)))) exactly.
  static NeumannPolicy proof_schedule() { return {Kind::proof_schedule, 0}; }
  /// "direct", "auto", "proof", or a nonnegative integer.
  static NeumannPolicy parse(std::string_view text);
  std::string to_string() const;
};

NeumannTerms resolve_terms(const OperatorContext& ops, const NeumannPolicy& policy);

struct EtaHat {
  Eigen::VectorXd eta_x;  ///< sum_j w_j xi_ij eta_ij
  Eigen::VectorXd eta_y;  ///< sum_i v_i xi_ij eta_ij
};

EtaHat eta_hat(const OperatorContext& ops, const Eigen::MatrixXd& eta);

/// Neumann-solved influence vectors of a plan functional: `a` lives on the
/// atoms of P, `b` on the atoms of Q.
struct InfluenceVectors {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  NeumannTerms terms;
};

InfluenceVectors plan_influence(const OperatorContext& ops, const Eigen::MatrixXd& eta,
                                const NeumannPolicy& policy);
InfluenceVectors cond_influence(const TransportFit& fit, const OperatorContext& ops,
                                const Point& x, const Eigen::VectorXd& eta_row,
                                const NeumannPolicy& policy);

/// lambda Var_{P_n}[f] + (1 - lambda) Var_{Q_m}[g], times eps^2.
VarianceEstimate var_cost(const PotentialPair& pot, const DiscreteMeasure& p,
                          const DiscreteMeasure& q, double epsilon = 1.0);
VarianceEstimate var_cost(const TransportFit& fit);

VarianceEstimate var_plan(const OperatorContext& ops, const Eigen::MatrixXd& eta,
                          const NeumannPolicy& policy = NeumannPolicy::direct());

VarianceEstimate var_cond(const TransportFit& fit, const OperatorContext& ops, const Point& x,
                          const Eigen::VectorXd& eta_row,
                          const NeumannPolicy& policy = NeumannPolicy::direct());

struct DivergenceInference {
  double estimate = 0.0;
  VarianceEstimate variance;
  ConfidenceInterval interval;
  bool converged = true;
};

DivergenceInference divergence_ci(const DiscreteMeasure& p, const DiscreteMeasure& q,
                                  const CostFunction& cost, double epsilon, double level,
                                  const SolveOptions& options = {});
DivergenceInference divergence_ci(const DivergenceResult& solves, double level);

struct MapInference {
  Eigen::VectorXd value;
  Eigen::MatrixXd covariance;  ///< plug-in asymptotic covariance (unscaled)
  std::vector<ConfidenceInterval> intervals;
  NeumannTerms terms_used;
};

MapInference map_ci(const TransportFit& fit, const OperatorContext& ops, const Point& x,
                    double level, const NeumannPolicy& policy = NeumannPolicy::direct());

struct ColocResult {
  std::vector<double> thresholds;
  Eigen::VectorXd values;
  Eigen::MatrixXd covariance;  ///< plug-in asymptotic covariance (unscaled)
  Eigen::VectorXd pointwise;   ///< per-threshold half-widths at `level`
  Eigen::VectorXd band;        ///< Bonferroni simultaneous half-widths
  std::vector<ConfidenceInterval> intervals;  ///< pointwise
  double level = 0.95;
};

/// Plan mass on {c <= t} for each threshold (ascending), with covariance.
ColocResult coloc_curve(const TransportFit& fit, const OperatorContext& ops,
                        const std::vector<double>& thresholds, double level,
                        const NeumannPolicy& policy = NeumannPolicy::direct());

using ScalarMap = std::function<double(double)>;

/// F(t) = exp(-t^2).
double gaussian_map(double t);

/// F(Var_{U_n}[g_{P_n,U_n} - g_{Q_m,U_n}]) with potentials in cost units.
double kernel_point(const DiscreteMeasure& p, const DiscreteMeasure& q, const DiscreteMeasure& u,
                    const CostFunction& cost, double epsilon, const ScalarMap& map = gaussian_map,
                    const SolveOptions& options = {});

// ---------------------------------------------------------------------------
// Evaluation functions eta(x, y)

using EtaFunction = std::function<double(const Point&, const Point&)>;

/// "cost", "indicator:T" (1 when c <= T) or "coord:K" (the K-th coordinate of y).
EtaFunction parse_eta(std::string_view spec, const CostFunction& cost);

Eigen::MatrixXd eta_table(const EtaFunction& eta, const DiscreteMeasure& p,
                          const DiscreteMeasure& q);
Eigen::VectorXd eta_row(const EtaFunction& eta, const Point& x, const DiscreteMeasure& q);

}  // namespace eot
