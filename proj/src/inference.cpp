#include "eot/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "eot/error.hpp"
#include "eot/stats.hpp"

namespace eot {

using stats::weighted_covariance;
using stats::weighted_variance;

std::string_view to_string(VarianceMethod method) {
  switch (method) {
    case VarianceMethod::cost: return "cost";
    case VarianceMethod::plan: return "plan";
    case VarianceMethod::conditional: return "conditional";
    case VarianceMethod::divergence: return "divergence";
  }
  return "unknown";
}

VarianceEstimate make_variance(double value, std::size_t n, std::size_t m, VarianceMethod method,
                               NeumannTerms terms) {
  if (n == 0 || m == 0) throw InputError("sample sizes must be positive");
  if (!std::isfinite(value)) throw NumericError("numeric failure: variance is not finite");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  VarianceEstimate out;
  // Tiny negative values come only from roundoff in the weighted sums.
  out.value = std::max(0.0, value);
  out.lambda_hat = md / (nd + md);
  out.scale = std::sqrt(nd * md / (nd + md));
  out.method = method;
  out.terms_used = terms;
  out.n = n;
  out.m = m;
  return out;
}

ConfidenceInterval ci(double estimate, const VarianceEstimate& var, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
  if (!(var.value >= 0.0)) throw InputError("variance must be nonnegative");
  ConfidenceInterval out;
  out.estimate = estimate;
  out.level = level;
  if (var.value <= kDegenerateVariance) {
    out.lower = out.upper = estimate;
    out.degenerate = true;
    return out;
  }
  out.std_error = std::sqrt(var.value) / var.scale;
  const double half = stats::two_sided_z(level) * out.std_error;
  out.lower = estimate - half;
  out.upper = estimate + half;
  return out;
}

NeumannPolicy NeumannPolicy::parse(std::string_view text) {
  if (text == "direct") return direct();
  if (text == "auto") return schedule();
  if (text == "proof") return proof_schedule();
  std::size_t terms = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), terms);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw InputError("Neumann depth must be 'direct', 'auto', 'proof' or an integer");
  }
  return fixed(terms);
}

std::string NeumannPolicy::to_string() const {
  switch (kind) {
    case Kind::direct: return "direct";
    case Kind::fixed: return std::to_string(terms);
    case Kind::schedule: return "auto";
    case Kind::proof_schedule: return "proof";
  }
  return "direct";
}

NeumannTerms resolve_terms(const OperatorContext& ops, const NeumannPolicy& policy) {
  switch (policy.kind) {
    case NeumannPolicy::Kind::direct: return std::nullopt;
    case NeumannPolicy::Kind::fixed: return policy.terms;
    case NeumannPolicy::Kind::proof_schedule:
      return proof_schedule_terms(ops.n_samples(), ops.m_samples());
    case NeumannPolicy::Kind::schedule: {
      const double rate = std::max(ops.spectral_gap(Side::P).value, ops.spectral_gap(Side::Q).value);
      return adaptive_terms(rate, ops.n_samples(), ops.m_samples());
    }
  }
  return std::nullopt;
}

EtaHat eta_hat(const OperatorContext& ops, const Eigen::MatrixXd& eta) {
  if (eta.rows() != ops.n() || eta.cols() != ops.m()) {
    throw InputError("eta table does not match the plan");
  }
  if (!eta.allFinite()) throw InputError("eta must be finite");
  const Eigen::MatrixXd weighted = ops.xi().cwiseProduct(eta);
  return {weighted * ops.w(), weighted.transpose() * ops.v()};
}

InfluenceVectors plan_influence(const OperatorContext& ops, const Eigen::MatrixXd& eta,
                                const NeumannPolicy& policy) {
  // The influence vectors do not depend on adding a constant to eta, but
  // with a plan that is optimal only to the solver tolerance they do so
  // only approximately. Anchoring eta at one entry makes the invariance
  // hold to rounding and sends constant eta to exactly zero.
  const double anchor = eta.size() > 0 ? eta(0, 0) : 0.0;
  const EtaHat hat = eta_hat(ops, eta.array() - anchor);
  const Eigen::VectorXd a = hat.eta_x - ops.apply_AQ(hat.eta_y);
  const Eigen::VectorXd b = hat.eta_y - ops.apply_AP(hat.eta_x);
  const NeumannTerms terms = resolve_terms(ops, policy);
  return {ops.neumann_solve(a, Side::P, terms), ops.neumann_solve(b, Side::Q, terms), terms};
}

InfluenceVectors cond_influence(const TransportFit& fit, const OperatorContext& ops,
                                const Point& x, const Eigen::VectorXd& eta_row,
                                const NeumannPolicy& policy) {
  if (eta_row.size() != ops.m()) throw InputError("eta row does not match the support of Q");
  if (!eta_row.allFinite()) throw InputError("eta must be finite");
  const Eigen::VectorXd density =
      conditional_density(fit.potentials, x, fit.q, fit.cost, fit.epsilon());
  const Eigen::VectorXd anchored = eta_row.array() - eta_row[0];
  const double mean = ops.w().dot(density.cwiseProduct(anchored));
  const Eigen::VectorXd h = (anchored.array() - mean).matrix().cwiseProduct(density);
  const NeumannTerms terms = resolve_terms(ops, policy);
  return {ops.neumann_solve(ops.apply_AQ(h), Side::P, terms), ops.neumann_solve(h, Side::Q, terms),
          terms};
}

VarianceEstimate var_cost(const PotentialPair& pot, const DiscreteMeasure& p,
                          const DiscreteMeasure& q, double epsilon) {
  const std::size_t n = p.sample_size();
  const std::size_t m = q.sample_size();
  const double lambda = static_cast<double>(m) / static_cast<double>(n + m);
  const double value = epsilon * epsilon *
                       (lambda * weighted_variance(p.weights(), pot.f) +
                        (1.0 - lambda) * weighted_variance(q.weights(), pot.g));
  return make_variance(value, n, m, VarianceMethod::cost);
}

VarianceEstimate var_cost(const TransportFit& fit) {
  return var_cost(fit.potentials, fit.p, fit.q, fit.epsilon());
}

namespace {

double combine(const OperatorContext& ops, const InfluenceVectors& inf) {
  const double lambda = static_cast<double>(ops.m_samples()) /
                        static_cast<double>(ops.n_samples() + ops.m_samples());
  return lambda * weighted_variance(ops.v(), inf.a) +
         (1.0 - lambda) * weighted_variance(ops.w(), inf.b);
}

double combine_cov(const OperatorContext& ops, const InfluenceVectors& x,
                   const InfluenceVectors& y) {
  const double lambda = static_cast<double>(ops.m_samples()) /
                        static_cast<double>(ops.n_samples() + ops.m_samples());
  return lambda * weighted_covariance(ops.v(), x.a, y.a) +
         (1.0 - lambda) * weighted_covariance(ops.w(), x.b, y.b);
}

}  // namespace

VarianceEstimate var_plan(const OperatorContext& ops, const Eigen::MatrixXd& eta,
                          const NeumannPolicy& policy) {
  const InfluenceVectors inf = plan_influence(ops, eta, policy);
  return make_variance(combine(ops, inf), ops.n_samples(), ops.m_samples(), VarianceMethod::plan,
                       inf.terms);
}

VarianceEstimate var_cond(const TransportFit& fit, const OperatorContext& ops, const Point& x,
                          const Eigen::VectorXd& eta_row, const NeumannPolicy& policy) {
  const InfluenceVectors inf = cond_influence(fit, ops, x, eta_row, policy);
  return make_variance(combine(ops, inf), ops.n_samples(), ops.m_samples(),
                       VarianceMethod::conditional, inf.terms);
}

DivergenceInference divergence_ci(const DivergenceResult& solves, double level) {
  const TransportFit& pq = solves.pq;
  const TransportFit& pp = solves.pp;
  const TransportFit& qq = solves.qq;
  // Each empirical measure enters S(P,P) through both arguments, so its
  // first-order term is the sum of that problem's two potentials, which
  // both live on the same atoms.
  const Eigen::VectorXd on_p = pq.potentials.f - 0.5 * (pp.potentials.f + pp.potentials.g);
  const Eigen::VectorXd on_q = pq.potentials.g - 0.5 * (qq.potentials.f + qq.potentials.g);
  const std::size_t n = pq.p.sample_size();
  const std::size_t m = pq.q.sample_size();
  const double lambda = static_cast<double>(m) / static_cast<double>(n + m);
  const double eps = pq.epsilon();
  const double value = eps * eps *
                       (lambda * weighted_variance(pq.p.weights(), on_p) +
                        (1.0 - lambda) * weighted_variance(pq.q.weights(), on_q));
  DivergenceInference out;
  out.estimate = solves.value;
  out.variance = make_variance(value, n, m, VarianceMethod::divergence);
  out.interval = ci(out.estimate, out.variance, level);
  out.converged = solves.converged();
  return out;
}

DivergenceInference divergence_ci(const DiscreteMeasure& p, const DiscreteMeasure& q,
                                  const CostFunction& cost, double epsilon, double level,
                                  const SolveOptions& options) {
  return divergence_ci(solve_divergence(p, q, cost, epsilon, options), level);
}

MapInference map_ci(const TransportFit& fit, const OperatorContext& ops, const Point& x,
                    double level, const NeumannPolicy& policy) {
  const std::size_t d = fit.q.dim();
  MapInference out;
  out.value = entropic_map(fit.potentials, x, fit.q, fit.cost, fit.epsilon());
  std::vector<InfluenceVectors> inf;
  inf.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    Eigen::VectorXd row(ops.m());
    for (Eigen::Index j = 0; j < ops.m(); ++j) row[j] = fit.q.atom(static_cast<std::size_t>(j))[k];
    inf.push_back(cond_influence(fit, ops, x, row, policy));
  }
  out.terms_used = inf.empty() ? NeumannTerms{} : inf.front().terms;
  const auto dd = static_cast<Eigen::Index>(d);
  out.covariance.resize(dd, dd);
  for (Eigen::Index k = 0; k < dd; ++k) {
    for (Eigen::Index l = 0; l <= k; ++l) {
      const double c = combine_cov(ops, inf[static_cast<std::size_t>(k)], inf[static_cast<std::size_t>(l)]);
      out.covariance(k, l) = out.covariance(l, k) = c;
    }
  }
  for (Eigen::Index k = 0; k < dd; ++k) {
    const VarianceEstimate var = make_variance(out.covariance(k, k), ops.n_samples(),
                                               ops.m_samples(), VarianceMethod::conditional,
                                               out.terms_used);
    out.intervals.push_back(ci(out.value[k], var, level));
  }
  return out;
}

ColocResult coloc_curve(const TransportFit& fit, const OperatorContext& ops,
                        const std::vector<double>& thresholds, double level,
                        const NeumannPolicy& policy) {
  for (double t : thresholds) {
    if (!std::isfinite(t)) throw InputError("thresholds must be finite");
  }
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw InputError("thresholds must be sorted ascending");
  }
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
  const auto l = static_cast<Eigen::Index>(thresholds.size());
  const Eigen::MatrixXd& cost = fit.ctx.cost();

  ColocResult out;
  out.thresholds = thresholds;
  out.level = level;
  out.values.resize(l);
  std::vector<InfluenceVectors> inf;
  const NeumannTerms terms = resolve_terms(ops, policy);
  const NeumannPolicy resolved = terms ? NeumannPolicy::fixed(*terms) : NeumannPolicy::direct();
  for (Eigen::Index i = 0; i < l; ++i) {
    const double t = thresholds[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd eta = (cost.array() <= t).cast<double>().matrix();
    out.values[i] = std::clamp(plan_expectation(fit.plan, eta), 0.0, 1.0);
    inf.push_back(plan_influence(ops, eta, resolved));
  }
  out.covariance.resize(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = combine_cov(ops, inf[static_cast<std::size_t>(i)], inf[static_cast<std::size_t>(j)]);
      out.covariance(i, j) = out.covariance(j, i) = c;
    }
  }
  const double bonferroni = 1.0 - (1.0 - level) / static_cast<double>(std::max<Eigen::Index>(l, 1));
  const double z_band = stats::two_sided_z(bonferroni);
  out.pointwise.resize(l);
  out.band.resize(l);
  for (Eigen::Index i = 0; i < l; ++i) {
    const VarianceEstimate var = make_variance(out.covariance(i, i), ops.n_samples(),
                                               ops.m_samples(), VarianceMethod::plan, terms);
    out.intervals.push_back(ci(out.values[i], var, level));
    out.pointwise[i] = 0.5 * out.intervals.back().width();
    out.band[i] = var.value <= kDegenerateVariance ? 0.0 : z_band * std::sqrt(var.value) / var.scale;
  }
  return out;
}

double gaussian_map(double t) { return std::exp(-t * t); }

double kernel_point(const DiscreteMeasure& p, const DiscreteMeasure& q, const DiscreteMeasure& u,
                    const CostFunction& cost, double epsilon, const ScalarMap& map,
                    const SolveOptions& options) {
  const TransportFit pu = fit_transport(p, u, cost, epsilon, options);
  const TransportFit qu = fit_transport(q, u, cost, epsilon, options);
  if (!pu.report.converged || !qu.report.converged) {
    throw NumericError("kernel: Sinkhorn did not converge");
  }
  const Eigen::VectorXd diff = epsilon * (pu.potentials.g - qu.potentials.g);
  return map(weighted_variance(u.weights(), diff));
}

EtaFunction parse_eta(std::string_view spec, const CostFunction& cost) {
  const auto colon = spec.find(':');
  const std::string_view head = spec.substr(0, colon);
  const std::string arg = colon == std::string_view::npos ? std::string{} : std::string(spec.substr(colon + 1));
  if (head == "cost" && arg.empty()) {
    return [cost](const Point& x, const Point& y) { return cost(x, y); };
  }
  if (head == "indicator" && !arg.empty()) {
    std::size_t used = 0;
    double t = 0.0;
    try {
      t = std::stod(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size() || !std::isfinite(t)) throw InputError("bad indicator threshold in eta spec");
    return [cost, t](const Point& x, const Point& y) { return cost(x, y) <= t ? 1.0 : 0.0; };
  }
  if (head == "coord" && !arg.empty()) {
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
    if (ec != std::errc{} || ptr != arg.data() + arg.size()) throw InputError("bad coordinate in eta spec");
    return [k](const Point&, const Point& y) {
      if (k >= y.size()) throw InputError("eta coordinate out of range");
      return y[k];
    };
  }
  throw InputError("unknown eta spec '" + std::string(spec) + "'");
}

Eigen::MatrixXd eta_table(const EtaFunction& eta, const DiscreteMeasure& p,
                          const DiscreteMeasure& q) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eta(p.atom(i), q.atom(j));
    }
  }
  return out;
}

Eigen::VectorXd eta_row(const EtaFunction& eta, const Point& x, const DiscreteMeasure& q) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(q.size()));
  for (std::size_t j = 0; j < q.size(); ++j) out[static_cast<Eigen::Index>(j)] = eta(x, q.atom(j));
  return out;
}

}  // namespace eot
