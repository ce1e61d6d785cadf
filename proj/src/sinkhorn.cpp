#include "eot/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eot/error.hpp"

namespace eot {

namespace {

void check_shapes(const DiscreteMeasure& p, const DiscreteMeasure& q, const CostContext& ctx) {
  if (ctx.rows() != static_cast<Eigen::Index>(p.size()) ||
      ctx.cols() != static_cast<Eigen::Index>(q.size())) {
    throw InputError("cost table does not match the supports");
  }
}

// log sum_t exp(a_t - k_t), max-shifted.
double log_sum_exp(const double* a, const double* k, Eigen::Index len) {
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < len; ++t) top = std::max(top, a[t] - k[t]);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (Eigen::Index t = 0; t < len; ++t) sum += std::exp(a[t] - k[t] - top);
  return top + std::log(sum);
}

// Updates driven by a fixed scaled cost; `kt` is K^T so that both passes
// read contiguous memory.
struct Updater {
  const Eigen::MatrixXd& k;
  Eigen::MatrixXd kt;
  Eigen::VectorXd log_v;
  Eigen::VectorXd log_w;

  Updater(const DiscreteMeasure& p, const DiscreteMeasure& q, const CostContext& ctx)
      : k(ctx.scaled()),
        kt(ctx.scaled().transpose()),
        log_v(p.weights().array().log()),
        log_w(q.weights().array().log()) {}

  // f_i = -log sum_j w_j exp(g_j - K_ij)
  void f_from_g(const Eigen::VectorXd& g, Eigen::VectorXd& f, Eigen::VectorXd& scratch) const {
    scratch = log_w + g;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      f[i] = -log_sum_exp(scratch.data(), kt.col(i).data(), scratch.size());
    }
  }

  // g_j = -log sum_i v_i exp(f_i - K_ij)
  void g_from_f(const Eigen::VectorXd& f, Eigen::VectorXd& g, Eigen::VectorXd& scratch) const {
    scratch = log_v + f;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      g[j] = -log_sum_exp(scratch.data(), k.col(j).data(), scratch.size());
    }
  }
};

void require_finite(const Eigen::VectorXd& x) {
  if (!x.allFinite()) throw NumericError("numeric failure");
}

PlanDensity build_plan(const PotentialPair& pot, const DiscreteMeasure& p, const DiscreteMeasure& q,
                       const CostContext& ctx) {
  PlanDensity plan;
  plan.xi = ((-ctx.scaled()).colwise() + pot.f).rowwise() + pot.g.transpose();
  plan.xi = plan.xi.array().exp().matrix();
  plan.v = p.weights();
  plan.w = q.weights();
  plan.row_average = plan.xi * plan.w;
  plan.col_average = plan.xi.transpose() * plan.v;
  return plan;
}

double dual_value(const PotentialPair& pot, const DiscreteMeasure& p, const DiscreteMeasure& q,
                  const PlanDensity& plan, double epsilon) {
  const double mass = plan.v.dot(plan.row_average);
  return epsilon * (p.weights().dot(pot.f) + q.weights().dot(pot.g) + 1.0 - mass);
}

}  // namespace

SolveResult solve(const DiscreteMeasure& p, const DiscreteMeasure& q, const CostContext& ctx,
                  const SolveOptions& options) {
  check_shapes(p, q, ctx);
  if (!(options.tol > 0.0)) throw InputError("tolerance must be positive");

  const Updater upd(p, q, ctx);
  const auto n = static_cast<Eigen::Index>(p.size());
  const auto m = static_cast<Eigen::Index>(q.size());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g(m);
  Eigen::VectorXd f_next(n);
  Eigen::VectorXd scratch_n(n);
  Eigen::VectorXd scratch_m(m);

  // Invariant at the top of the loop: g solves its equation given f, and
  // f_next is the f-update given g, so |f_next - f| is the only residual.
  upd.g_from_f(f, g, scratch_n);
  upd.f_from_g(g, f_next, scratch_m);
  require_finite(g);
  require_finite(f_next);

  SolveReport report;
  report.iterations = 1;
  double residual = (f_next - f).cwiseAbs().maxCoeff();
  while (residual > options.tol && report.iterations < options.max_iter) {
    f.swap(f_next);
    upd.g_from_f(f, g, scratch_n);
    upd.f_from_g(g, f_next, scratch_m);
    require_finite(g);
    require_finite(f_next);
    residual = (f_next - f).cwiseAbs().maxCoeff();
    ++report.iterations;
  }
  report.final_residual = residual;
  report.converged = residual <= options.tol;

  const double shift = q.weights().dot(g);
  PotentialPair pot{f.array() + shift, g.array() - shift};

  const PlanDensity plan = build_plan(pot, p, q, ctx);
  report.duality_gap = std::abs(primal_cost(plan, ctx) - dual_value(pot, p, q, plan, ctx.epsilon()));
  return {std::move(pot), report};
}

FixedPointResidual fixed_point_residual(const PotentialPair& pot, const DiscreteMeasure& p,
                                        const DiscreteMeasure& q, const CostContext& ctx) {
  check_shapes(p, q, ctx);
  const Updater upd(p, q, ctx);
  Eigen::VectorXd f(pot.f.size());
  Eigen::VectorXd g(pot.g.size());
  Eigen::VectorXd scratch_n(pot.f.size());
  Eigen::VectorXd scratch_m(pot.g.size());
  upd.f_from_g(pot.g, f, scratch_m);
  upd.g_from_f(pot.f, g, scratch_n);
  return {(f - pot.f).cwiseAbs().maxCoeff(), (g - pot.g).cwiseAbs().maxCoeff()};
}

double PlanDensity::marginal_error() const {
  return std::max((row_average.array() - 1.0).abs().maxCoeff(),
                  (col_average.array() - 1.0).abs().maxCoeff());
}

PlanDensity plan_density(const PotentialPair& pot, const DiscreteMeasure& p,
                         const DiscreteMeasure& q, const CostContext& ctx, double tol) {
  check_shapes(p, q, ctx);
  PlanDensity plan = build_plan(pot, p, q, ctx);
  if (!(plan.marginal_error() <= 100.0 * tol)) throw NumericError("non-optimal potentials");
  return plan;
}

double entropic_cost(const PotentialPair& pot, const DiscreteMeasure& p, const DiscreteMeasure& q,
                     const CostContext& ctx) {
  check_shapes(p, q, ctx);
  return dual_value(pot, p, q, build_plan(pot, p, q, ctx), ctx.epsilon());
}

double primal_cost(const PlanDensity& plan, const CostContext& ctx) {
  double transport = 0.0;
  double kl = 0.0;
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double mass = plan.v[i] * plan.w[j] * plan.xi(i, j);
      if (mass == 0.0) continue;
      transport += mass * ctx.cost()(i, j);
      kl += mass * std::log(plan.xi(i, j));
    }
  }
  return transport + ctx.epsilon() * kl;
}

double sinkhorn_cost(const PlanDensity& plan, const CostContext& ctx) {
  return plan_expectation(plan, ctx.cost());
}

double plan_expectation(const PlanDensity& plan, const Eigen::MatrixXd& eta) {
  if (eta.rows() != plan.rows() || eta.cols() != plan.cols()) {
    throw InputError("eta table does not match the plan");
  }
  if (!eta.allFinite()) throw InputError("eta must be finite");
  return plan.v.dot(plan.xi.cwiseProduct(eta) * plan.w);
}

double extend_f(const PotentialPair& pot, const Point& x, const DiscreteMeasure& q,
                const CostFunction& cost, double epsilon) {
  const auto m = static_cast<Eigen::Index>(q.size());
  Eigen::VectorXd a(m);
  Eigen::VectorXd k(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    a[j] = std::log(q.weights()[j]) + pot.g[j];
    k[j] = cost(x, q.atom(static_cast<std::size_t>(j))) / epsilon;
  }
  if (!k.allFinite()) throw InputError("unbounded cost");
  return -log_sum_exp(a.data(), k.data(), m);
}

double extend_g(const PotentialPair& pot, const Point& y, const DiscreteMeasure& p,
                const CostFunction& cost, double epsilon) {
  const auto n = static_cast<Eigen::Index>(p.size());
  Eigen::VectorXd a(n);
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[i] = std::log(p.weights()[i]) + pot.f[i];
    k[i] = cost(p.atom(static_cast<std::size_t>(i)), y) / epsilon;
  }
  if (!k.allFinite()) throw InputError("unbounded cost");
  return -log_sum_exp(a.data(), k.data(), n);
}

Eigen::VectorXd conditional_density(const PotentialPair& pot, const Point& x,
                                    const DiscreteMeasure& q, const CostFunction& cost,
                                    double epsilon) {
  const double fx = extend_f(pot, x, q, cost, epsilon);
  Eigen::VectorXd out(static_cast<Eigen::Index>(q.size()));
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    out[j] = std::exp(fx + pot.g[j] - cost(x, q.atom(static_cast<std::size_t>(j))) / epsilon);
  }
  return out;
}

double cond_expectation(const PotentialPair& pot, const Point& x, const Eigen::VectorXd& eta_row,
                        const DiscreteMeasure& q, const CostFunction& cost, double epsilon) {
  if (eta_row.size() != static_cast<Eigen::Index>(q.size())) {
    throw InputError("eta row does not match the support of Q");
  }
  if (!eta_row.allFinite()) throw InputError("eta must be finite");
  const Eigen::VectorXd density = conditional_density(pot, x, q, cost, epsilon);
  return q.weights().dot(density.cwiseProduct(eta_row));
}

Eigen::VectorXd entropic_map(const PotentialPair& pot, const Point& x, const DiscreteMeasure& q,
                             const CostFunction& cost, double epsilon) {
  // Label points under a lookup-table cost carry no coordinates.
  if (cost.name() == "table") throw InputError("map requires coordinate data");
  const Eigen::VectorXd density = conditional_density(pot, x, q, cost, epsilon);
  const Eigen::VectorXd mass = q.weights().cwiseProduct(density);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q.dim()));
  for (std::size_t j = 0; j < q.size(); ++j) {
    const Point& y = q.atom(j);
    for (std::size_t k = 0; k < y.size(); ++k) {
      out[static_cast<Eigen::Index>(k)] += mass[static_cast<Eigen::Index>(j)] * y[k];
    }
  }
  return out;
}

double TransportFit::entropic_cost() const { return eot::entropic_cost(potentials, p, q, ctx); }

double TransportFit::sinkhorn_cost() const { return eot::sinkhorn_cost(plan, ctx); }

TransportFit fit_transport(DiscreteMeasure p, DiscreteMeasure q, CostFunction cost, double epsilon,
                           const SolveOptions& options) {
  CostContext ctx = build_cost(cost, p, q, epsilon);
  SolveResult result = solve(p, q, ctx, options);
  PlanDensity plan = result.report.converged
                         ? plan_density(result.potentials, p, q, ctx, options.tol)
                         : build_plan(result.potentials, p, q, ctx);
  return TransportFit{std::move(p),         std::move(q),  std::move(cost), std::move(ctx),
                      std::move(result.potentials), result.report, std::move(plan)};
}

DivergenceResult solve_divergence(const DiscreteMeasure& p, const DiscreteMeasure& q,
                                  const CostFunction& cost, double epsilon,
                                  const SolveOptions& options) {
  TransportFit pq = fit_transport(p, q, cost, epsilon, options);
  TransportFit pp = fit_transport(p, p, cost, epsilon, options);
  TransportFit qq = fit_transport(q, q, cost, epsilon, options);
  const double value = pq.entropic_cost() - 0.5 * (pp.entropic_cost() + qq.entropic_cost());
  return DivergenceResult{value, std::move(pq), std::move(pp), std::move(qq)};
}

double sinkhorn_divergence(const DiscreteMeasure& p, const DiscreteMeasure& q,
                           const CostFunction& cost, double epsilon, const SolveOptions& options) {
  return solve_divergence(p, q, cost, epsilon, options).value;
}

}  // namespace eot
