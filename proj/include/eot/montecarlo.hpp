#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "eot/inference.hpp"
#include "eot/oracle.hpp"

namespace eot::mc {

enum class Target { cost, sinkhorn_cost, plan, cond, map, divergence, coloc };

std::string_view to_string(Target target);
Target parse_target(std::string_view name);

struct SimConfig {
  oracle::FinitePopulation population = oracle::fixture_f2();
  std::size_t n = 100;
  std::size_t m = 100;
  std::size_t reps = 100;
  double level = 0.95;
  std::vector<Target> targets{Target::cost};
  std::uint64_t seed = 0;
  NeumannPolicy policy = NeumannPolicy::direct();
  std::string eta = "cost";       ///< evaluation function for plan and cond
  Point x0;                       ///< empty means the first atom of P
  std::vector<double> thresholds;  ///< coloc grid, ascending
  std::size_t threads = 0;         ///< 0 means hardware concurrency
  bool compress = true;            ///< merge repeated draws into weighted atoms
  bool keep_replications = false;
  SolveOptions solve;

  /// Throws InputError on violated invariants.
  void validate() const;
  Point evaluation_point() const;
};

/// Per-replication outcome of one reported quantity.
struct Draw {
  double estimate = 0.0;
  double variance = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool degenerate = false;
};

struct Replication {
  std::size_t index = 0;
  bool valid = false;
  std::vector<Draw> draws;  ///< aligned with CoverageReport::entries
};

struct TargetStats {
  std::string name;
  double truth = 0.0;
  double sigma2_true = 0.0;
  double coverage = 0.0;
  double width_mean = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double ks = 0.0;  ///< KS distance of the studentized pivots to N(0, 1)
  double ks_pvalue = 1.0;
  double sigma2_mean = 0.0;
  /// mean |sigma2_hat - sigma2| / sigma2, or mean |sigma2_hat| when sigma2 == 0
  double sigma2_error = 0.0;
  std::size_t degenerate = 0;
  std::size_t reps_valid = 0;
  std::size_t reps_invalid = 0;
};

struct CoverageReport {
  nlohmann::json config;
  std::vector<TargetStats> entries;
  std::vector<Replication> replications;  ///< only with keep_replications
  double wall_seconds = 0.0;              ///< excluded from to_json

  const TargetStats& at(std::string_view name) const;
  nlohmann::json to_json() const;
};

CoverageReport run_coverage(const SimConfig& config);

struct ConsistencyRow {
  std::size_t n = 0;
  std::string target;
  double sigma2_true = 0.0;
  double sigma2_mean = 0.0;
  double error = 0.0;
};

/// Variance-estimator error along n = m in `ladder`, `seeds` replications
/// per rung.
std::vector<ConsistencyRow> run_consistency(SimConfig config,
                                            const std::vector<std::size_t>& ladder = {100, 500, 2000},
                                            std::size_t seeds = 50);

nlohmann::json to_json(const SimConfig& config);
/// Throws InputError naming every offending key.
SimConfig sim_config_from_json(const nlohmann::json& doc);

}  // namespace eot::mc
