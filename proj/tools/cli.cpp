#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "eot/error.hpp"
#include "eot/inference.hpp"
#include "eot/json_format.hpp"
#include "eot/montecarlo.hpp"

#ifndef EOT_VERSION
#define EOT_VERSION "unknown"
#endif

namespace eot::cli {

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kNotConverged = 2;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Everything read from disk goes through here so the manifest digests the
// exact bytes that were parsed.
class Inputs {
 public:
  std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    digests_[path] = sha256_hex(bytes);
    return bytes;
  }

  SampleSet samples(const std::string& path, bool header) {
    return parse_samples(read(path), format_from_path(path), header, path);
  }

  json digests() const {
    json out = json::object();
    for (const auto& [path, hex] : digests_) out[path] = "sha256:" + hex;
    return out;
  }

 private:
  std::map<std::string, std::string> digests_;
};

struct Common {
  std::string x;
  std::string y;
  std::string cost = "sq_euclidean";
  double eps = 1.0;
  double tol = 1e-10;
  std::size_t max_iter = 10000;
  bool header = false;

  SolveOptions options() const { return {tol, max_iter}; }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--x", c.x, "samples from P (.csv or .json)")->required();
  cmd->add_option("--y", c.y, "samples from Q (.csv or .json)")->required();
  cmd->add_option("--cost", c.cost, "sq_euclidean, euclidean, lp:P, indicator:R or constant:K")
      ->capture_default_str();
  cmd->add_option("--eps", c.eps, "regularization strength")->required();
  cmd->add_option("--tol", c.tol, "fixed-point residual tolerance")->capture_default_str();
  cmd->add_option("--max-iter", c.max_iter, "iteration budget")->capture_default_str();
  cmd->add_flag("--header", c.header, "skip the first CSV line");
}

json common_flags(const Common& c) {
  return {{"x", c.x},     {"y", c.y},               {"cost", c.cost},     {"eps", c.eps},
          {"tol", c.tol}, {"max_iter", c.max_iter}, {"header", c.header}};
}

json report_json(const SolveReport& r) {
  return {{"iterations", r.iterations},
          {"residual", r.final_residual},
          {"converged", r.converged},
          {"duality_gap", r.duality_gap}};
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) rows.push_back(vector_json(a.row(i).transpose()));
  return rows;
}

json variance_json(const VarianceEstimate& v) {
  return {{"value", v.value},
          {"lambda_hat", v.lambda_hat},
          {"scale", v.scale},
          {"method", std::string(to_string(v.method))},
          {"terms", v.terms_used ? json(*v.terms_used) : json("direct")},
          {"n", v.n},
          {"m", v.m}};
}

json interval_json(const ConfidenceInterval& c) {
  return {{"estimate", c.estimate}, {"lower", c.lower},         {"upper", c.upper},
          {"level", c.level},       {"std_error", c.std_error}, {"degenerate", c.degenerate},
          {"width", c.width()}};
}

Point parse_point(const std::string& text) {
  Point out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("cannot parse point '" + text + "'");
    }
  }
  if (out.empty()) throw InputError("cannot parse point '" + text + "'");
  return out;
}

struct Fitted {
  TransportFit fit;
  json flags;
};

Fitted fit_inputs(const Common& c, Inputs& inputs) {
  const CostFunction cost = CostFunction::parse(c.cost);
  DiscreteMeasure p = from_samples(inputs.samples(c.x, c.header));
  DiscreteMeasure q = from_samples(inputs.samples(c.y, c.header));
  return {fit_transport(std::move(p), std::move(q), cost, c.eps, c.options()), common_flags(c)};
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int emit(const std::string& command, json flags, json result, std::optional<std::uint64_t> seed,
           int code, std::optional<double> wall_seconds = std::nullopt) {
    json manifest = {{"command", command},
                     {"flags", std::move(flags)},
                     {"inputs", inputs.digests()},
                     {"seed", seed ? json(*seed) : json(nullptr)},
                     {"version", EOT_VERSION},
                     {"timestamp", utc_timestamp()}};
    if (wall_seconds) manifest["wall_seconds"] = *wall_seconds;
    out_ << dump_json({{"result", std::move(result)}, {"manifest", std::move(manifest)}}) << '\n';
    if (code == kNotConverged) err_ << "eotinfer: solver did not converge\n";
    return code;
  }

  Inputs inputs;

 private:
  std::ostream& out_;
  std::ostream& err_;
};

int cmd_solve(Runner& run, const Common& c) {
  const Fitted f = fit_inputs(c, run.inputs);
  const TransportFit& fit = f.fit;
  json result = {{"potentials", {{"f", vector_json(fit.potentials.f)}, {"g", vector_json(fit.potentials.g)}}},
                 {"epsilon", fit.epsilon()},
                 {"report", report_json(fit.report)}};
  if (fit.report.converged) {
    result["cost"] = fit.entropic_cost();
    result["sinkhorn_cost"] = fit.sinkhorn_cost();
  } else {
    result["cost"] = nullptr;
    result["sinkhorn_cost"] = nullptr;
  }
  return run.emit("solve", f.flags, result, std::nullopt, fit.report.converged ? kOk : kNotConverged);
}

int cmd_divergence(Runner& run, const Common& c) {
  const CostFunction cost = CostFunction::parse(c.cost);
  const DiscreteMeasure p = from_samples(run.inputs.samples(c.x, c.header));
  const DiscreteMeasure q = from_samples(run.inputs.samples(c.y, c.header));
  const DivergenceResult d = solve_divergence(p, q, cost, c.eps, c.options());
  json result = {{"converged", d.converged()},
                 {"reports",
                  {{"pq", report_json(d.pq.report)},
                   {"pp", report_json(d.pp.report)},
                   {"qq", report_json(d.qq.report)}}}};
  if (d.converged()) {
    result["divergence"] = d.value;
    result["cost_pq"] = d.pq.entropic_cost();
    result["cost_pp"] = d.pp.entropic_cost();
    result["cost_qq"] = d.qq.entropic_cost();
  } else {
    result["divergence"] = nullptr;
  }
  return run.emit("divergence", common_flags(c), result, std::nullopt,
                  d.converged() ? kOk : kNotConverged);
}

struct CiFlags {
  std::string target;
  std::string eta;
  std::string x0;
  double level = 0.95;
  std::string neumann = "direct";
};

Eigen::MatrixXd eta_matrix(const std::string& spec, const TransportFit& fit, Runner& run) {
  if (std::filesystem::is_regular_file(spec)) {
    const SampleSet rows = parse_samples(run.inputs.read(spec), SampleFormat::csv, false, spec);
    const auto n = static_cast<Eigen::Index>(fit.p.size());
    const auto m = static_cast<Eigen::Index>(fit.q.size());
    if (static_cast<Eigen::Index>(rows.size()) != n || static_cast<Eigen::Index>(rows.dim()) != m) {
      throw InputError("eta table " + spec + " must be " + std::to_string(n) + " x " + std::to_string(m));
    }
    Eigen::MatrixXd out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        out(i, j) = rows.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
    return out;
  }
  return eta_table(parse_eta(spec, fit.cost), fit.p, fit.q);
}

int cmd_ci(Runner& run, const Common& c, const CiFlags& ci_flags) {
  const std::string& target = ci_flags.target;
  const bool needs_eta = target == "plan" || target == "cond";
  const bool needs_x0 = target == "cond" || target == "map";
  if (needs_eta && ci_flags.eta.empty()) throw CLI::RequiredError("--eta (target " + target + ")");
  if (needs_x0 && ci_flags.x0.empty()) throw CLI::RequiredError("--x0 (target " + target + ")");
  const NeumannPolicy policy = NeumannPolicy::parse(ci_flags.neumann);

  json flags = common_flags(c);
  flags["target"] = target;
  flags["eta"] = ci_flags.eta.empty() ? json(nullptr) : json(ci_flags.eta);
  flags["x0"] = ci_flags.x0.empty() ? json(nullptr) : json(ci_flags.x0);
  flags["level"] = ci_flags.level;
  flags["N"] = policy.to_string();
  if (!(ci_flags.level > 0.0 && ci_flags.level < 1.0)) throw InputError("--level must lie in (0, 1)");

  json result = {{"target", target}};
  if (target == "divergence") {
    const CostFunction cost = CostFunction::parse(c.cost);
    const DiscreteMeasure p = from_samples(run.inputs.samples(c.x, c.header));
    const DiscreteMeasure q = from_samples(run.inputs.samples(c.y, c.header));
    const DivergenceResult d = solve_divergence(p, q, cost, c.eps, c.options());
    result["converged"] = d.converged();
    if (!d.converged()) return run.emit("ci", flags, result, std::nullopt, kNotConverged);
    const DivergenceInference inf = divergence_ci(d, ci_flags.level);
    result["estimate"] = inf.estimate;
    result["variance"] = variance_json(inf.variance);
    result["ci"] = interval_json(inf.interval);
    return run.emit("ci", flags, result, std::nullopt, kOk);
  }

  const Fitted f = fit_inputs(c, run.inputs);
  const TransportFit& fit = f.fit;
  result["converged"] = fit.report.converged;
  if (!fit.report.converged) return run.emit("ci", flags, result, std::nullopt, kNotConverged);

  const auto finish = [&](double estimate, const VarianceEstimate& var) {
    const ConfidenceInterval interval = ci(estimate, var, ci_flags.level);
    result["estimate"] = estimate;
    result["variance"] = variance_json(var);
    result["ci"] = interval_json(interval);
    return run.emit("ci", flags, result, std::nullopt, kOk);
  };
  if (target == "cost") return finish(fit.entropic_cost(), var_cost(fit));

  const OperatorContext ops(fit);
  if (target == "sinkhorn_cost") return finish(fit.sinkhorn_cost(), var_plan(ops, fit.ctx.cost(), policy));
  if (target == "plan") {
    const Eigen::MatrixXd eta = eta_matrix(ci_flags.eta, fit, run);
    return finish(plan_expectation(fit.plan, eta), var_plan(ops, eta, policy));
  }
  const Point x0 = parse_point(ci_flags.x0);
  if (x0.size() != fit.p.dim()) throw InputError("--x0 has the wrong dimension");
  if (target == "cond") {
    const Eigen::VectorXd row = eta_row(parse_eta(ci_flags.eta, fit.cost), x0, fit.q);
    return finish(cond_expectation(fit.potentials, x0, row, fit.q, fit.cost, fit.epsilon()),
                  var_cond(fit, ops, x0, row, policy));
  }
  if (target == "map") {
    const MapInference map = map_ci(fit, ops, x0, ci_flags.level, policy);
    json intervals = json::array();
    for (const auto& interval : map.intervals) intervals.push_back(interval_json(interval));
    result["estimate"] = vector_json(map.value);
    result["covariance"] = matrix_json(map.covariance);
    result["terms"] = map.terms_used ? json(*map.terms_used) : json("direct");
    result["ci"] = intervals;
    return run.emit("ci", flags, result, std::nullopt, kOk);
  }
  throw InputError("unknown target '" + target + "'");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (double x : parse_point(text)) out.push_back(x);
  return out;
}

int cmd_coloc(Runner& run, const Common& c, const std::string& thresholds, double level) {
  const std::vector<double> t = parse_list(thresholds);
  if (!std::is_sorted(t.begin(), t.end())) throw InputError("thresholds must be ascending");
  json flags = common_flags(c);
  flags["thresholds"] = t;
  flags["level"] = level;
  const Fitted f = fit_inputs(c, run.inputs);
  json result = {{"converged", f.fit.report.converged}};
  if (!f.fit.report.converged) return run.emit("coloc", flags, result, std::nullopt, kNotConverged);
  const OperatorContext ops(f.fit);
  const ColocResult r = coloc_curve(f.fit, ops, t, level);
  json intervals = json::array();
  for (const auto& interval : r.intervals) intervals.push_back(interval_json(interval));
  result["thresholds"] = r.thresholds;
  result["values"] = vector_json(r.values);
  result["covariance"] = matrix_json(r.covariance);
  result["pointwise"] = vector_json(r.pointwise);
  result["band"] = vector_json(r.band);
  result["band_method"] = "bonferroni";
  result["intervals"] = intervals;
  result["level"] = r.level;
  return run.emit("coloc", flags, result, std::nullopt, kOk);
}

int cmd_simulate(Runner& run, const std::string& path, std::size_t threads) {
  json doc;
  try {
    doc = json::parse(run.inputs.read(path));
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid JSON in ") + path + ": " + e.what());
  }
  mc::SimConfig config = mc::sim_config_from_json(doc);
  if (threads > 0) config.threads = threads;
  const mc::CoverageReport report = mc::run_coverage(config);
  json flags = {{"config", path}};
  return run.emit("simulate", flags, report.to_json(), config.seed, kOk, report.wall_seconds);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropic optimal transport with confidence intervals"};
  app.set_version_flag("--version", EOT_VERSION);
  app.require_subcommand(1);

  Common solve_flags;
  auto* solve = app.add_subcommand("solve", "solve for the entropic potentials");
  add_common(solve, solve_flags);

  Common div_flags;
  auto* divergence = app.add_subcommand("divergence", "Sinkhorn divergence");
  add_common(divergence, div_flags);

  Common ci_common;
  CiFlags ci_flags;
  auto* ci_cmd = app.add_subcommand("ci", "estimate, variance and confidence interval");
  add_common(ci_cmd, ci_common);
  ci_cmd->add_option("--target", ci_flags.target, "cost|sinkhorn_cost|plan|cond|map|divergence")
      ->required()
      ->check(CLI::IsMember({"cost", "sinkhorn_cost", "plan", "cond", "map", "divergence"}));
  ci_cmd->add_option("--eta", ci_flags.eta, "cost, indicator:T, coord:K or an n x m CSV table");
  ci_cmd->add_option("--x0", ci_flags.x0, "evaluation point, comma separated");
  ci_cmd->add_option("--level", ci_flags.level, "confidence level")->capture_default_str();
  ci_cmd->add_option("--N", ci_flags.neumann, "direct, auto, proof or a term count")->capture_default_str();

  Common coloc_common;
  std::string thresholds;
  double coloc_level = 0.95;
  auto* coloc = app.add_subcommand("coloc", "colocalization curve with bands");
  add_common(coloc, coloc_common);
  coloc->add_option("--thresholds", thresholds, "ascending, comma separated")->required();
  coloc->add_option("--level", coloc_level, "confidence level")->capture_default_str();

  std::string config_path;
  std::size_t threads = 0;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo coverage study");
  simulate->add_option("--config", config_path, "simulation config (JSON)")->required();
  simulate->add_option("--threads", threads, "worker threads (0 keeps the config value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kFailure;
  }

  Runner runner(out, err);
  try {
    if (*solve) return cmd_solve(runner, solve_flags);
    if (*divergence) return cmd_divergence(runner, div_flags);
    if (*ci_cmd) return cmd_ci(runner, ci_common, ci_flags);
    if (*coloc) return cmd_coloc(runner, coloc_common, thresholds, coloc_level);
    if (*simulate) return cmd_simulate(runner, config_path, threads);
  } catch (const CLI::ParseError& e) {
    err << "eotinfer: missing required flag " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    err << "eotinfer: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace eot::cli
