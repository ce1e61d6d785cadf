#include "eot/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "eot/error.hpp"
#include "eot/json_format.hpp"
#include "eot/stats.hpp"

namespace eot::mc {

namespace {

constexpr std::array<std::pair<Target, std::string_view>, 7> kTargetNames{{
    {Target::cost, "cost"},
    {Target::sinkhorn_cost, "sinkhorn_cost"},
    {Target::plan, "plan"},
    {Target::cond, "cond"},
    {Target::map, "map"},
    {Target::divergence, "divergence"},
    {Target::coloc, "coloc"},
}};

struct EntrySpec {
  std::string name;
  Target target;
  std::size_t index = 0;  // map coordinate or coloc threshold
  double truth = 0.0;
  double sigma2 = 0.0;
};

bool has(const SimConfig& config, Target t) {
  return std::find(config.targets.begin(), config.targets.end(), t) != config.targets.end();
}

std::vector<EntrySpec> plan_entries(const SimConfig& config) {
  const auto& pop = config.population;
  const Point x0 = config.evaluation_point();
  std::vector<EntrySpec> out;
  for (const auto& [target, name] : kTargetNames) {
    if (!has(config, target)) continue;
    switch (target) {
      case Target::cost:
        out.push_back({"cost", target, 0, oracle::exact_cost(pop), oracle::exact_sigma_cost(pop)});
        break;
      case Target::sinkhorn_cost: {
        const EtaFunction eta = parse_eta("cost", pop.cost);
        out.push_back({"sinkhorn_cost", target, 0, oracle::exact_sinkhorn_cost(pop),
                       oracle::exact_sigma_plan(pop, eta)});
        break;
      }
      case Target::plan: {
        const EtaFunction eta = parse_eta(config.eta, pop.cost);
        out.push_back({"plan", target, 0, oracle::exact_plan_expectation(pop, eta),
                       oracle::exact_sigma_plan(pop, eta)});
        break;
      }
      case Target::cond: {
        const EtaFunction eta = parse_eta(config.eta, pop.cost);
        out.push_back({"cond", target, 0, oracle::exact_cond_expectation(pop, x0, eta),
                       oracle::exact_sigma_cond(pop, x0, eta)});
        break;
      }
      case Target::map: {
        const Eigen::VectorXd truth = oracle::exact_map(pop, x0);
        const Eigen::MatrixXd cov = oracle::exact_map_covariance(pop, x0);
        for (Eigen::Index k = 0; k < truth.size(); ++k) {
          out.push_back({"map[" + std::to_string(k) + "]", target, static_cast<std::size_t>(k), truth[k],
                         cov(k, k)});
        }
        break;
      }
      case Target::divergence:
        out.push_back({"divergence", target, 0, oracle::exact_divergence(pop),
                       oracle::exact_sigma_divergence(pop)});
        break;
      case Target::coloc: {
        const Eigen::MatrixXd cov = oracle::exact_coloc_covariance(pop, config.thresholds);
        for (std::size_t k = 0; k < config.thresholds.size(); ++k) {
          const double t = config.thresholds[k];
          const EtaFunction eta = parse_eta("indicator:" + short_double(t), pop.cost);
          const auto kk = static_cast<Eigen::Index>(k);
          out.push_back({"coloc[" + short_double(t) + "]", target, k,
                         oracle::exact_plan_expectation(pop, eta), cov(kk, kk)});
        }
        break;
      }
    }
  }
  return out;
}

std::vector<double> probabilities(const DiscreteMeasure& m) {
  return {m.weights().data(), m.weights().data() + m.weights().size()};
}

DiscreteMeasure empirical(const DiscreteMeasure& population, std::size_t size, std::uint64_t seed,
                          bool compress) {
  const auto counts = draw_counts(probabilities(population), size, seed);
  if (compress) return DiscreteMeasure::from_counts(population.atoms(), counts);
  std::vector<Point> draws;
  draws.reserve(size);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t c = 0; c < counts[i]; ++c) draws.push_back(population.atom(i));
  }
  return DiscreteMeasure::uniform(std::move(draws));
}

Draw draw_from(const ConfidenceInterval& interval, const VarianceEstimate& var) {
  return {interval.estimate, var.value, interval.lower, interval.upper, interval.degenerate};
}

Replication replicate(const SimConfig& config, const std::vector<EntrySpec>& entries,
                      std::size_t index) {
  Replication rep;
  rep.index = index;
  const auto& pop = config.population;
  const std::uint64_t seed = stats::child_seed(config.seed, index);
  const DiscreteMeasure pn = empirical(pop.p, config.n, stats::child_seed(seed, 0), config.compress);
  const DiscreteMeasure qm = empirical(pop.q, config.m, stats::child_seed(seed, 1), config.compress);
  const std::size_t n = pn.sample_size();
  const std::size_t m = qm.sample_size();
  const double level = config.level;
  const Point x0 = config.evaluation_point();

  const TransportFit fit = fit_transport(pn, qm, pop.cost, pop.epsilon, config.solve);
  if (!fit.report.converged) return rep;
  std::optional<OperatorContext> ops;
  std::optional<MapInference> map;
  std::optional<ColocResult> coloc;

  for (const auto& e : entries) {
    if (e.target != Target::cost && e.target != Target::divergence && !ops) ops.emplace(fit);
    switch (e.target) {
      case Target::cost: {
        const auto var = var_cost(fit);
        rep.draws.push_back(draw_from(ci(fit.entropic_cost(), var, level), var));
        break;
      }
      case Target::sinkhorn_cost: {
        const auto var = var_plan(*ops, fit.ctx.cost(), config.policy);
        rep.draws.push_back(draw_from(ci(fit.sinkhorn_cost(), var, level), var));
        break;
      }
      case Target::plan: {
        const Eigen::MatrixXd eta = eta_table(parse_eta(config.eta, pop.cost), fit.p, fit.q);
        const auto var = var_plan(*ops, eta, config.policy);
        rep.draws.push_back(draw_from(ci(plan_expectation(fit.plan, eta), var, level), var));
        break;
      }
      case Target::cond: {
        const Eigen::VectorXd row = eta_row(parse_eta(config.eta, pop.cost), x0, fit.q);
        const double est = cond_expectation(fit.potentials, x0, row, fit.q, fit.cost, fit.epsilon());
        const auto var = var_cond(fit, *ops, x0, row, config.policy);
        rep.draws.push_back(draw_from(ci(est, var, level), var));
        break;
      }
      case Target::map: {
        if (!map) map = map_ci(fit, *ops, x0, level, config.policy);
        const auto k = static_cast<Eigen::Index>(e.index);
        const auto var = make_variance(map->covariance(k, k), n, m, VarianceMethod::conditional,
                                       map->terms_used);
        rep.draws.push_back(draw_from(map->intervals[e.index], var));
        break;
      }
      case Target::divergence: {
        const DivergenceResult solves = solve_divergence(pn, qm, pop.cost, pop.epsilon, config.solve);
        if (!solves.converged()) return Replication{index, false, {}};
        const DivergenceInference inf = divergence_ci(solves, level);
        rep.draws.push_back(draw_from(inf.interval, inf.variance));
        break;
      }
      case Target::coloc: {
        if (!coloc) coloc = coloc_curve(fit, *ops, config.thresholds, level, config.policy);
        const auto k = static_cast<Eigen::Index>(e.index);
        const auto var = make_variance(coloc->covariance(k, k), n, m, VarianceMethod::plan);
        rep.draws.push_back(draw_from(coloc->intervals[e.index], var));
        break;
      }
    }
  }
  rep.valid = true;
  return rep;
}

TargetStats aggregate(const EntrySpec& spec, std::size_t column, const std::vector<Replication>& reps,
                      double scale) {
  TargetStats s;
  s.name = spec.name;
  s.truth = spec.truth;
  s.sigma2_true = spec.sigma2;
  std::vector<double> pivots;
  double covered = 0.0;
  double width = 0.0;
  double err = 0.0;
  double sq = 0.0;
  double var_sum = 0.0;
  double var_err = 0.0;
  const double slack = 1e-12 * (1.0 + std::abs(spec.truth));
  for (const auto& rep : reps) {
    if (!rep.valid) {
      ++s.reps_invalid;
      continue;
    }
    ++s.reps_valid;
    const Draw& d = rep.draws[column];
    if (d.lower - slack <= spec.truth && spec.truth <= d.upper + slack) covered += 1.0;
    width += d.upper - d.lower;
    err += d.estimate - spec.truth;
    sq += (d.estimate - spec.truth) * (d.estimate - spec.truth);
    var_sum += d.variance;
    var_err += spec.sigma2 > 0.0 ? std::abs(d.variance - spec.sigma2) / spec.sigma2 : std::abs(d.variance);
    if (d.degenerate) {
      ++s.degenerate;
    } else {
      pivots.push_back(scale * (d.estimate - spec.truth) / std::sqrt(d.variance));
    }
  }
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  if (s.reps_valid == 0) {
    s.coverage = s.width_mean = s.bias = s.rmse = s.sigma2_mean = s.sigma2_error = nan;
  } else {
    const double k = static_cast<double>(s.reps_valid);
    s.coverage = covered / k;
    s.width_mean = width / k;
    s.bias = err / k;
    s.rmse = std::sqrt(sq / k);
    s.sigma2_mean = var_sum / k;
    s.sigma2_error = var_err / k;
  }
  if (pivots.size() >= 2) {
    s.ks = stats::ks_statistic_normal(pivots);
    s.ks_pvalue = stats::ks_pvalue(s.ks, pivots.size());
  } else {
    s.ks = s.ks_pvalue = nan;
  }
  return s;
}

}  // namespace

std::string_view to_string(Target target) {
  for (const auto& [t, name] : kTargetNames) {
    if (t == target) return name;
  }
  return "unknown";
}

Target parse_target(std::string_view name) {
  for (const auto& [t, text] : kTargetNames) {
    if (text == name) return t;
  }
  throw InputError("unknown target '" + std::string(name) + "'");
}

void SimConfig::validate() const {
  if (reps < 1) throw InputError("reps must be at least 1");
  if (n < 2 || m < 2) throw InputError("n and m must be at least 2");
  if (!(level > 0.0 && level < 1.0)) throw InputError("level must lie in (0, 1)");
  if (targets.empty()) throw InputError("no targets");
  if (!x0.empty() && x0.size() != population.p.dim()) throw InputError("x0 has the wrong dimension");
  if (has(*this, Target::coloc)) {
    if (thresholds.empty()) throw InputError("coloc needs thresholds");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
      throw InputError("thresholds must be ascending");
    }
  }
}

Point SimConfig::evaluation_point() const { return x0.empty() ? population.p.atom(0) : x0; }

const TargetStats& CoverageReport::at(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw InputError("no target '" + std::string(name) + "' in report");
}

nlohmann::json CoverageReport::to_json() const {
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& s : entries) {
    targets[s.name] = {{"truth", s.truth},
                       {"sigma2_true", s.sigma2_true},
                       {"coverage", s.coverage},
                       {"width_mean", s.width_mean},
                       {"bias", s.bias},
                       {"rmse", s.rmse},
                       {"ks", s.ks},
                       {"ks_pvalue", s.ks_pvalue},
                       {"sigma2_mean", s.sigma2_mean},
                       {"sigma2_error", s.sigma2_error},
                       {"degenerate", s.degenerate},
                       {"reps_valid", s.reps_valid},
                       {"reps_invalid", s.reps_invalid}};
  }
  return {{"config", config}, {"targets", targets}};
}

CoverageReport run_coverage(const SimConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<EntrySpec> entries = plan_entries(config);

  std::vector<Replication> reps(config.reps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t r = next++; r < config.reps; r = next++) {
      try {
        reps[r] = replicate(config, entries, r);
      } catch (const NumericError&) {
        reps[r] = Replication{r, false, {}};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.reps;
      }
    }
  };
  std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::clamp<std::size_t>(threads, 1, config.reps);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  CoverageReport report;
  report.config = to_json(config);
  const double n = static_cast<double>(config.n);
  const double m = static_cast<double>(config.m);
  const double scale = std::sqrt(n * m / (n + m));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    report.entries.push_back(aggregate(entries[k], k, reps, scale));
  }
  if (config.keep_replications) report.replications = std::move(reps);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<ConsistencyRow> run_consistency(SimConfig config, const std::vector<std::size_t>& ladder,
                                            std::size_t seeds) {
  std::vector<ConsistencyRow> out;
  config.reps = seeds;
  for (std::size_t rung : ladder) {
    config.n = config.m = rung;
    const CoverageReport report = run_coverage(config);
    for (const auto& e : report.entries) {
      out.push_back({rung, e.name, e.sigma2_true, e.sigma2_mean, e.sigma2_error});
    }
  }
  return out;
}

nlohmann::json to_json(const SimConfig& config) {
  nlohmann::json targets = nlohmann::json::array();
  for (Target t : config.targets) targets.push_back(std::string(to_string(t)));
  return {{"population", oracle::to_json(config.population)},
          {"n", config.n},
          {"m", config.m},
          {"reps", config.reps},
          {"level", config.level},
          {"targets", targets},
          {"seed", config.seed},
          {"N", config.policy.to_string()},
          {"eta", config.eta},
          {"x0", config.evaluation_point()},
          {"thresholds", config.thresholds},
          {"compress", config.compress},
          {"tol", config.solve.tol},
          {"max_iter", config.solve.max_iter}};
}

SimConfig sim_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("config must be a JSON object");
  static const std::set<std::string> known{"population", "n",      "m",     "reps",       "level",
                                           "targets",    "seed",   "N",     "eta",        "x0",
                                           "thresholds", "threads", "compress", "tol",    "max_iter"};
  std::vector<std::string> problems;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!known.count(it.key())) problems.push_back(it.key() + " (unknown key)");
  }
  for (const char* key : {"population", "n", "m", "reps", "seed"}) {
    if (!doc.contains(key)) problems.push_back(std::string(key) + " (missing)");
  }

  SimConfig config;
  config.targets.clear();
  const auto field = [&](const char* key, auto&& apply) {
    if (!doc.contains(key)) return;
    try {
      apply(doc.at(key));
    } catch (const std::exception& e) {
      problems.push_back(std::string(key) + " (" + e.what() + ")");
    }
  };
  const auto count = [](const nlohmann::json& v) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw InputError("expected a nonnegative integer");
    }
    return v.get<std::size_t>();
  };
  const auto number = [](const nlohmann::json& v) {
    if (!v.is_number()) throw InputError("expected a number");
    return v.get<double>();
  };
  field("population", [&](const auto& v) { config.population = oracle::population_from_json(v); });
  field("n", [&](const auto& v) {
    config.n = count(v);
    if (config.n < 2) throw InputError("must be at least 2");
  });
  field("m", [&](const auto& v) {
    config.m = count(v);
    if (config.m < 2) throw InputError("must be at least 2");
  });
  field("reps", [&](const auto& v) {
    config.reps = count(v);
    if (config.reps < 1) throw InputError("must be at least 1");
  });
  field("level", [&](const auto& v) {
    config.level = number(v);
    if (!(config.level > 0.0 && config.level < 1.0)) throw InputError("must lie in (0, 1)");
  });
  field("targets", [&](const auto& v) {
    if (!v.is_array() || v.empty()) throw InputError("expected a nonempty array of names");
    for (const auto& t : v) config.targets.push_back(parse_target(t.template get<std::string>()));
  });
  if (!doc.contains("targets")) config.targets = {Target::cost};
  field("seed", [&](const auto& v) { config.seed = count(v); });
  field("N", [&](const auto& v) {
    config.policy = NeumannPolicy::parse(v.is_string() ? v.template get<std::string>() : v.dump());
  });
  field("eta", [&](const auto& v) {
    config.eta = v.template get<std::string>();
    parse_eta(config.eta, config.population.cost);
  });
  field("x0", [&](const auto& v) {
    config.x0 = v.is_number() ? Point{v.template get<double>()} : v.template get<Point>();
  });
  field("thresholds", [&](const auto& v) {
    config.thresholds = v.template get<std::vector<double>>();
    if (!std::is_sorted(config.thresholds.begin(), config.thresholds.end())) {
      throw InputError("must be ascending");
    }
  });
  field("threads", [&](const auto& v) { config.threads = count(v); });
  field("compress", [&](const auto& v) {
    if (!v.is_boolean()) throw InputError("expected a boolean");
    config.compress = v.template get<bool>();
  });
  field("tol", [&](const auto& v) {
    config.solve.tol = number(v);
    if (!(config.solve.tol > 0.0)) throw InputError("must be positive");
  });
  field("max_iter", [&](const auto& v) { config.solve.max_iter = count(v); });

  if (problems.empty()) {
    try {
      config.validate();
    } catch (const InputError& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  return config;
}

}  // namespace eot::mc
