#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "eot/measures.hpp"

namespace eot {

/// Dual potentials in units of c/epsilon, normalized so that the
/// Q-weighted mean of g is zero.
struct PotentialPair {
  Eigen::VectorXd f;
  Eigen::VectorXd g;
};

struct SolveOptions {
  double tol = 1e-10;
  std::size_t max_iter = 10000;
};

struct SolveReport {
  std::size_t iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  double duality_gap = 0.0;
};

struct SolveResult {
  PotentialPair potentials;
  SolveReport report;
};

/// Log-domain Sinkhorn. Stops when the sup-norm of both fixed-point
/// residuals is at most `options.tol`; throws NumericError on NaN.
SolveResult solve(const DiscreteMeasure& p, const DiscreteMeasure& q, const CostContext& ctx,
                  const SolveOptions& options = {});

/// Sup-norm residuals of the two fixed-point equations.
struct FixedPointResidual {
  double f = 0.0;
  double g = 0.0;
};
FixedPointResidual fixed_point_residual(const PotentialPair& pot, const DiscreteMeasure& p,
                                        const DiscreteMeasure& q, const CostContext& ctx);

/// Plan density xi = C e^{f + g} together with the weights it integrates
/// against and its weighted row/column averages (both should be 1).
struct PlanDensity {
  Eigen::MatrixXd xi;
  Eigen::VectorXd v;  ///< weights of P
  Eigen::VectorXd w;  ///< weights of Q
  Eigen::VectorXd row_average;  ///< sum_j w_j xi_ij
  Eigen::VectorXd col_average;  ///< sum_i v_i xi_ij

  Eigen::Index rows() const { return xi.rows(); }
  Eigen::Index cols() const { return xi.cols(); }
  double marginal_error() const;
};

/// Throws NumericError("non-optimal potentials") when a marginal is off by
/// more than 100 * tol.
PlanDensity plan_density(const PotentialPair& pot, const DiscreteMeasure& p,
                         const DiscreteMeasure& q, const CostContext& ctx, double tol = 1e-10);

/// Dual value eps * (<f,P> + <g,Q> + 1 - <xi, P x Q>).
double entropic_cost(const PotentialPair& pot, const DiscreteMeasure& p, const DiscreteMeasure& q,
                     const CostContext& ctx);
/// Primal value <c, pi> + eps * KL(pi | P x Q) for pi = xi (P x Q).
double primal_cost(const PlanDensity& plan, const CostContext& ctx);

/// E_pi[c(X, Y)].
double sinkhorn_cost(const PlanDensity& plan, const CostContext& ctx);

/// E_pi[eta] for a table of eta(x_i, y_j).
double plan_expectation(const PlanDensity& plan, const Eigen::MatrixXd& eta);

/// Canonical extension f(x) = -log sum_j w_j exp(g_j - c(x, y_j)/eps).
double extend_f(const PotentialPair& pot, const Point& x, const DiscreteMeasure& q,
                const CostFunction& cost, double epsilon);
/// Canonical extension g(y) = -log sum_i v_i exp(f_i - c(x_i, y)/eps).
double extend_g(const PotentialPair& pot, const Point& y, const DiscreteMeasure& p,
                const CostFunction& cost, double epsilon);

/// xi(x, y_j) for every atom of Q, using the extended f.
Eigen::VectorXd conditional_density(const PotentialPair& pot, const Point& x,
                                    const DiscreteMeasure& q, const CostFunction& cost,
                                    double epsilon);

/// E_pi[eta(X, Y) | X = x], with eta_row_j = eta(x, y_j).
double cond_expectation(const PotentialPair& pot, const Point& x, const Eigen::VectorXd& eta_row,
                        const DiscreteMeasure& q, const CostFunction& cost, double epsilon);

/// E_pi[Y | X = x].
Eigen::VectorXd entropic_map(const PotentialPair& pot, const Point& x, const DiscreteMeasure& q,
                             const CostFunction& cost, double epsilon);

/// One solved problem with everything downstream inference needs.
struct TransportFit {
  DiscreteMeasure p;
  DiscreteMeasure q;
  CostFunction cost;
  CostContext ctx;
  PotentialPair potentials;
  SolveReport report;
  PlanDensity plan;

  double epsilon() const { return ctx.epsilon(); }
  double entropic_cost() const;
  double sinkhorn_cost() const;
};

/// Solves and builds the plan. If the solve does not converge the fit is
/// still returned (report.converged == false) and its plan is unchecked.
TransportFit fit_transport(DiscreteMeasure p, DiscreteMeasure q, CostFunction cost, double epsilon,
                           const SolveOptions& options = {});

struct DivergenceResult {
  double value = 0.0;
  TransportFit pq;
  TransportFit pp;
  TransportFit qq;
  bool converged() const {
    return pq.report.converged && pp.report.converged && qq.report.converged;
  }
};

/// S(P,Q) - (S(P,P) + S(Q,Q)) / 2 from three independent solves.
DivergenceResult solve_divergence(const DiscreteMeasure& p, const DiscreteMeasure& q,
                                  const CostFunction& cost, double epsilon,
                                  const SolveOptions& options = {});
double sinkhorn_divergence(const DiscreteMeasure& p, const DiscreteMeasure& q,
                           const CostFunction& cost, double epsilon,
                           const SolveOptions& options = {});

}  // namespace eot
