#include "eot/oracle.hpp"

#include <cmath>
#include <fstream>

#include "eot/error.hpp"

namespace eot::oracle {

namespace {

// Neumaier-compensated dot product.
double compensated_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double sum = 0.0;
  double comp = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double term = a[i] * b[i];
    const double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return sum + comp;
}

double population_variance(const Eigen::VectorXd& weights, const Eigen::VectorXd& h) {
  const double mu = compensated_dot(weights, h);
  const Eigen::VectorXd dev = h.array() - mu;
  return compensated_dot(weights, dev.cwiseProduct(dev));
}

double population_covariance(const Eigen::VectorXd& weights, const Eigen::VectorXd& a,
                             const Eigen::VectorXd& b) {
  const Eigen::VectorXd da = a.array() - compensated_dot(weights, a);
  const Eigen::VectorXd db = b.array() - compensated_dot(weights, b);
  return compensated_dot(weights, da.cwiseProduct(db));
}

// Population operators assembled entry by entry.
struct Population {
  Eigen::VectorXd v;
  Eigen::VectorXd w;
  Eigen::MatrixXd xi;
  Eigen::MatrixXd tp;  // A_Q A_P on P-functions
  Eigen::MatrixXd tq;  // A_P A_Q on Q-functions

  explicit Population(const FinitePopulation& pop) {
    const PlanDensity plan = exact_plan(pop);
    v = plan.v;
    w = plan.w;
    xi = plan.xi;
    const Eigen::Index n = xi.rows();
    const Eigen::Index m = xi.cols();
    tp.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) s += w[j] * xi(i, j) * v[k] * xi(k, j);
        tp(i, k) = s;
      }
    }
    tq.resize(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index l = 0; l < m; ++l) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += v[i] * xi(i, j) * w[l] * xi(i, l);
        tq(j, l) = s;
      }
    }
  }

  Eigen::VectorXd ap(const Eigen::VectorXd& h) const {
    Eigen::VectorXd out(xi.cols());
    for (Eigen::Index j = 0; j < xi.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < xi.rows(); ++i) s += v[i] * xi(i, j) * h[i];
      out[j] = s;
    }
    return out;
  }

  Eigen::VectorXd aq(const Eigen::VectorXd& h) const {
    Eigen::VectorXd out(xi.rows());
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < xi.cols(); ++j) s += w[j] * xi(i, j) * h[j];
      out[i] = s;
    }
    return out;
  }

  // (I - T) x = rhs with <weights, x> = 0, as the bordered system
  // [[I - T, 1], [weights^T, 0]] [x; mu] = [rhs; 0].
  static Eigen::VectorXd inverse(const Eigen::MatrixXd& t, const Eigen::VectorXd& weights,
                                 const Eigen::VectorXd& rhs) {
    const Eigen::Index k = t.rows();
    if (std::abs(compensated_dot(weights, rhs)) > 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) {
      throw NumericError("oracle: centering violation");
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k + 1, k + 1);
    a.topLeftCorner(k, k) = Eigen::MatrixXd::Identity(k, k) - t;
    a.topRightCorner(k, 1).setOnes();
    a.bottomLeftCorner(1, k) = weights.transpose();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k + 1);
    b.head(k) = rhs;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw NumericError("oracle: singular bordered system");
    return lu.solve(b).head(k);
  }
};

DiscreteMeasure measure_from_json(const nlohmann::json& doc, const char* which) {
  if (!doc.contains("atoms") || !doc.contains("weights")) {
    throw InputError(std::string("population.") + which + " needs 'atoms' and 'weights'");
  }
  std::vector<Point> atoms;
  for (const auto& a : doc.at("atoms")) {
    if (a.is_number()) {
      atoms.push_back({a.get<double>()});
    } else {
      atoms.push_back(a.get<Point>());
    }
  }
  const auto w = doc.at("weights").get<std::vector<double>>();
  return DiscreteMeasure(std::move(atoms),
                         Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())));
}

nlohmann::json measure_to_json(const DiscreteMeasure& m) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : m.atoms()) atoms.push_back(a);
  std::vector<double> w(m.weights().data(), m.weights().data() + m.weights().size());
  return {{"atoms", atoms}, {"weights", w}};
}

}  // namespace

FinitePopulation make_population(std::string name, DiscreteMeasure p, DiscreteMeasure q,
                                 CostFunction cost, double epsilon, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw InputError("lambda must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if ((p.weights().array() <= 0.0).any() || (q.weights().array() <= 0.0).any()) {
    throw InputError("population weights must be strictly positive");
  }
  return FinitePopulation{std::move(name), std::move(p), std::move(q), std::move(cost), epsilon, lambda};
}

FinitePopulation fixture_f1() {
  return make_population("F1", DiscreteMeasure::uniform({{0.0}, {1.0}}),
                         DiscreteMeasure::uniform({{0.0}, {2.0}}), CostFunction::sq_euclidean(), 1.0,
                         0.5);
}

FinitePopulation fixture_f2() {
  Eigen::VectorXd v(3);
  v << 0.5, 0.3, 0.2;
  return make_population("F2", DiscreteMeasure({{0.0}, {1.0}, {2.0}}, v),
                         DiscreteMeasure::uniform({{0.0}, {0.5}, {1.5}, {3.0}}),
                         CostFunction::sq_euclidean(), 1.0, 0.5);
}

nlohmann::json to_json(const FinitePopulation& pop) {
  return {{"name", pop.name},       {"P", measure_to_json(pop.p)}, {"Q", measure_to_json(pop.q)},
          {"cost", pop.cost.name()}, {"epsilon", pop.epsilon},      {"lambda", pop.lambda}};
}

FinitePopulation population_from_json(const nlohmann::json& doc) {
  try {
    if (doc.is_string()) {
      const auto name = doc.get<std::string>();
      if (name == "F1") return fixture_f1();
      if (name == "F2") return fixture_f2();
      throw InputError("unknown fixture '" + name + "'");
    }
    return make_population(doc.value("name", std::string("custom")), measure_from_json(doc.at("P"), "P"),
                           measure_from_json(doc.at("Q"), "Q"),
                           CostFunction::parse(doc.value("cost", std::string("sq_euclidean"))),
                           doc.value("epsilon", 1.0), doc.value("lambda", 0.5));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("population: ") + e.what());
  }
}

FinitePopulation load_population(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return population_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
}

PotentialPair exact_solve(const FinitePopulation& pop) {
  SolveOptions options;
  options.tol = kExactTolerance;
  options.max_iter = 1000000;
  SolveResult result = solve(pop.p, pop.q, pop.context(), options);
  if (!result.report.converged) throw NumericError("oracle: exact solve did not converge");
  return std::move(result.potentials);
}

PlanDensity exact_plan(const FinitePopulation& pop) {
  return plan_density(exact_solve(pop), pop.p, pop.q, pop.context(), kExactTolerance);
}

double exact_cost(const FinitePopulation& pop) {
  return entropic_cost(exact_solve(pop), pop.p, pop.q, pop.context());
}

double exact_sinkhorn_cost(const FinitePopulation& pop) {
  const CostContext ctx = pop.context();
  return sinkhorn_cost(exact_plan(pop), ctx);
}

double exact_plan_expectation(const FinitePopulation& pop, const EtaFunction& eta) {
  return plan_expectation(exact_plan(pop), eta_table(eta, pop.p, pop.q));
}

double exact_cond_expectation(const FinitePopulation& pop, const Point& x, const EtaFunction& eta) {
  return cond_expectation(exact_solve(pop), x, eta_row(eta, x, pop.q), pop.q, pop.cost, pop.epsilon);
}

Eigen::VectorXd exact_map(const FinitePopulation& pop, const Point& x) {
  return entropic_map(exact_solve(pop), x, pop.q, pop.cost, pop.epsilon);
}

double exact_divergence(const FinitePopulation& pop) {
  const auto value = [&](const DiscreteMeasure& a, const DiscreteMeasure& b) {
    FinitePopulation sub = pop;
    sub.p = a;
    sub.q = b;
    return exact_cost(sub);
  };
  return value(pop.p, pop.q) - 0.5 * (value(pop.p, pop.p) + value(pop.q, pop.q));
}

double exact_sigma_cost(const FinitePopulation& pop) {
  const PotentialPair pot = exact_solve(pop);
  return pop.epsilon * pop.epsilon *
         (pop.lambda * population_variance(pop.p.weights(), pot.f) +
          (1.0 - pop.lambda) * population_variance(pop.q.weights(), pot.g));
}

namespace {

struct Influence {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
};

Influence plan_influence(const Population& pop, const Eigen::MatrixXd& eta) {
  const Eigen::Index n = pop.xi.rows();
  const Eigen::Index m = pop.xi.cols();
  Eigen::VectorXd ex(n);
  Eigen::VectorXd ey(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) s += pop.w[j] * pop.xi(i, j) * eta(i, j);
    ex[i] = s;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += pop.v[i] * pop.xi(i, j) * eta(i, j);
    ey[j] = s;
  }
  return {Population::inverse(pop.tp, pop.v, ex - pop.aq(ey)),
          Population::inverse(pop.tq, pop.w, ey - pop.ap(ex))};
}

Influence cond_influence(const FinitePopulation& fp, const Population& pop, const Point& x,
                         const Eigen::VectorXd& row) {
  const PotentialPair pot = exact_solve(fp);
  const Eigen::VectorXd density = conditional_density(pot, x, fp.q, fp.cost, fp.epsilon);
  const double mean = compensated_dot(pop.w, density.cwiseProduct(row));
  const Eigen::VectorXd h = (row.array() - mean).matrix().cwiseProduct(density);
  return {Population::inverse(pop.tp, pop.v, pop.aq(h)), Population::inverse(pop.tq, pop.w, h)};
}

double combine(const FinitePopulation& fp, const Population& pop, const Influence& x,
               const Influence& y) {
  return fp.lambda * population_covariance(pop.v, x.a, y.a) +
         (1.0 - fp.lambda) * population_covariance(pop.w, x.b, y.b);
}

}  // namespace

double exact_sigma_plan(const FinitePopulation& fp, const Eigen::MatrixXd& eta) {
  const Population pop(fp);
  if (eta.rows() != pop.xi.rows() || eta.cols() != pop.xi.cols()) {
    throw InputError("oracle: eta table does not match the population");
  }
  const Influence inf = plan_influence(pop, eta);
  return combine(fp, pop, inf, inf);
}

double exact_sigma_plan(const FinitePopulation& fp, const EtaFunction& eta) {
  return exact_sigma_plan(fp, eta_table(eta, fp.p, fp.q));
}

double exact_sigma_cond(const FinitePopulation& fp, const Point& x, const EtaFunction& eta) {
  const Population pop(fp);
  const Influence inf = cond_influence(fp, pop, x, eta_row(eta, x, fp.q));
  return combine(fp, pop, inf, inf);
}

Eigen::MatrixXd exact_map_covariance(const FinitePopulation& fp, const Point& x) {
  const Population pop(fp);
  const std::size_t d = fp.q.dim();
  std::vector<Influence> inf;
  for (std::size_t k = 0; k < d; ++k) {
    Eigen::VectorXd row(static_cast<Eigen::Index>(fp.q.size()));
    for (std::size_t j = 0; j < fp.q.size(); ++j) row[static_cast<Eigen::Index>(j)] = fp.q.atom(j)[k];
    inf.push_back(cond_influence(fp, pop, x, row));
  }
  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd out(dd, dd);
  for (Eigen::Index k = 0; k < dd; ++k) {
    for (Eigen::Index l = 0; l < dd; ++l) {
      out(k, l) = combine(fp, pop, inf[static_cast<std::size_t>(k)], inf[static_cast<std::size_t>(l)]);
    }
  }
  return out;
}

Eigen::MatrixXd exact_coloc_covariance(const FinitePopulation& fp,
                                       const std::vector<double>& thresholds) {
  const Population pop(fp);
  const Eigen::MatrixXd cost = fp.context().cost();
  std::vector<Influence> inf;
  for (double t : thresholds) {
    inf.push_back(plan_influence(pop, (cost.array() <= t).cast<double>().matrix()));
  }
  const auto l = static_cast<Eigen::Index>(thresholds.size());
  Eigen::MatrixXd out(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    for (Eigen::Index j = 0; j < l; ++j) {
      out(i, j) = combine(fp, pop, inf[static_cast<std::size_t>(i)], inf[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

double exact_sigma_divergence(const FinitePopulation& fp) {
  const auto solve_pair = [&](const DiscreteMeasure& a, const DiscreteMeasure& b) {
    FinitePopulation sub = fp;
    sub.p = a;
    sub.q = b;
    return exact_solve(sub);
  };
  const PotentialPair pq = solve_pair(fp.p, fp.q);
  const PotentialPair pp = solve_pair(fp.p, fp.p);
  const PotentialPair qq = solve_pair(fp.q, fp.q);
  const Eigen::VectorXd on_p = pq.f - 0.5 * (pp.f + pp.g);
  const Eigen::VectorXd on_q = pq.g - 0.5 * (qq.f + qq.g);
  return fp.epsilon * fp.epsilon *
         (fp.lambda * population_variance(fp.p.weights(), on_p) +
          (1.0 - fp.lambda) * population_variance(fp.q.weights(), on_q));
}

BregmanResult brute_force_plan(const FinitePopulation& pop, std::size_t max_iter, double tol) {
  const Eigen::Index n = static_cast<Eigen::Index>(pop.p.size());
  const Eigen::Index m = static_cast<Eigen::Index>(pop.q.size());
  if (n * m > 400) throw InputError("brute_force_plan is limited to n * m <= 400");
  const Eigen::VectorXd& v = pop.p.weights();
  const Eigen::VectorXd& w = pop.q.weights();
  const CostContext ctx = pop.context();

  // KL projection of the Gibbs coupling exp(-c/eps) (P x Q) onto the
  // couplings. Shift by the minimum cost so the largest entry is O(1).
  const double cmin = ctx.scaled().minCoeff();
  BregmanResult out;
  out.coupling.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      out.coupling(i, j) = v[i] * w[j] * std::exp(cmin - ctx.scaled()(i, j));
    }
  }
  for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
    // project onto {pi 1 = v}
    for (Eigen::Index i = 0; i < n; ++i) out.coupling.row(i) *= v[i] / out.coupling.row(i).sum();
    // project onto {pi^T 1 = w}
    for (Eigen::Index j = 0; j < m; ++j) out.coupling.col(j) *= w[j] / out.coupling.col(j).sum();
    // Column constraint now holds; check the rows relative to their targets.
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      err = std::max(err, std::abs(out.coupling.row(i).sum() / v[i] - 1.0));
    }
    out.marginal_error = err;
    if (err <= tol) {
      out.converged = true;
      break;
    }
  }
  if (out.iterations > max_iter) out.iterations = max_iter;
  out.xi.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out.xi(i, j) = out.coupling(i, j) / (v[i] * w[j]);
  }
  return out;
}

}  // namespace eot::oracle
