#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace eot {

/// A point of the ground space. Metric-space data without coordinates is
/// carried as a one-element label vector (see CostFunction::table).
using Point = std::vector<double>;

struct SampleSet {
  std::vector<Point> points;
  std::string source;

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : points.front().size(); }
};

/// Weighted atoms. Weights are nonnegative and sum to one.
///
/// `sample_size` is the number of i.i.d. draws the measure summarizes. It
/// equals the atom count for measures built by from_samples, and differs
/// when repeated draws were merged into weighted atoms (see
/// DiscreteMeasure::from_counts). All sqrt(nm/(n+m)) scalings use it.
class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<Point> atoms, Eigen::VectorXd weights,
                  std::size_t sample_size = 0);

  static DiscreteMeasure uniform(std::vector<Point> atoms);
  /// Empirical measure of draws given as multiplicities over `atoms`.
  /// Atoms with zero count are dropped.
  static DiscreteMeasure from_counts(const std::vector<Point>& atoms,
                                     const std::vector<std::size_t>& counts);

  std::size_t size() const { return atoms_.size(); }
  std::size_t sample_size() const { return sample_size_; }
  std::size_t dim() const { return atoms_.front().size(); }
  const std::vector<Point>& atoms() const { return atoms_; }
  const Point& atom(std::size_t i) const { return atoms_[i]; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double weight(std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }

  /// Same atoms, permuted by `order` (new atom k is old atom order[k]).
  DiscreteMeasure permuted(const std::vector<std::size_t>& order) const;

 private:
  std::vector<Point> atoms_;
  Eigen::VectorXd weights_;
  std::size_t sample_size_;
};

/// Uniform weights 1/n over the sample points; duplicates stay distinct atoms.
DiscreteMeasure from_samples(const SampleSet& samples);

/// A bounded cost c(x, y) with a display name.
class CostFunction {
 public:
  using Fn = std::function<double(const Point&, const Point&)>;

  CostFunction(std::string name, Fn fn);

  static CostFunction sq_euclidean();
  static CostFunction euclidean();
  /// ||x - y||_p for p >= 1.
  static CostFunction lp(double p);
  /// 0 when ||x - y|| <= radius, 1 otherwise. Discontinuous on purpose.
  static CostFunction indicator(double radius);
  static CostFunction constant(double value);
  /// Lookup table indexed by labels: c(x, y) = table(x[0], y[0]).
  static CostFunction table(Eigen::MatrixXd values);

  /// Parses "sq_euclidean", "euclidean", "lp:P", "indicator:R", "constant:K".
  static CostFunction parse(std::string_view spec);

  double operator()(const Point& x, const Point& y) const { return fn_(x, y); }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

/// Dense cost table on a product support together with the Gibbs kernel
/// exp(-c/epsilon). Downstream code works with the rescaled cost c/epsilon.
class CostContext {
 public:
  CostContext(Eigen::MatrixXd cost, double epsilon);

  Eigen::Index rows() const { return cost_.rows(); }
  Eigen::Index cols() const { return cost_.cols(); }
  const Eigen::MatrixXd& cost() const { return cost_; }
  /// c / epsilon.
  const Eigen::MatrixXd& scaled() const { return scaled_; }
  const Eigen::MatrixXd& gibbs() const { return gibbs_; }
  double epsilon() const { return epsilon_; }
  /// max |c|.
  double sup_bound() const { return sup_bound_; }
  /// max |c / epsilon|.
  double scaled_sup_bound() const { return sup_bound_ / epsilon_; }

 private:
  Eigen::MatrixXd cost_;
  Eigen::MatrixXd scaled_;
  Eigen::MatrixXd gibbs_;
  double epsilon_;
  double sup_bound_;
};

CostContext build_cost(const CostFunction& cost, const DiscreteMeasure& x,
                       const DiscreteMeasure& y, double epsilon);
/// Custom table; its shape must be |x| by |y|.
CostContext build_cost(const Eigen::MatrixXd& table, const DiscreteMeasure& x,
                       const DiscreteMeasure& y, double epsilon);

enum class SampleFormat { csv, json };

SampleFormat format_from_path(const std::filesystem::path& path);
SampleSet parse_samples(std::string_view text, SampleFormat format,
                        bool skip_header = false, std::string source = {});
SampleSet load_samples(const std::filesystem::path& path, SampleFormat format,
                       bool skip_header = false);

// ---------------------------------------------------------------------------
// Synthetic data

struct FiniteSupport {
  std::vector<Point> atoms;
  std::vector<double> probabilities;
};

struct NormalFamily {
  Point mean;
  double stddev = 1.0;
};

struct UniformFamily {
  std::size_t dim = 1;
  double low = 0.0;
  double high = 1.0;
};

using Generator = std::variant<FiniteSupport, NormalFamily, UniformFamily>;

/// "normal", "normal:D", "uniform", "uniform:D", "coin" (fair {0, 1}).
Generator make_generator(std::string_view name);

/// Pure function of (generator, n, seed).
SampleSet sample_from(const Generator& generator, std::size_t n, std::uint64_t seed);

/// Draws n atom indices from a finite support and returns per-atom counts.
std::vector<std::size_t> draw_counts(const std::vector<double>& probabilities,
                                     std::size_t n, std::uint64_t seed);

}  // namespace eot
