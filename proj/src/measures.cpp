#include "eot/measures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "eot/error.hpp"
#include "eot/stats.hpp"

namespace eot {

namespace {

constexpr double kWeightSumTolerance = 1e-12;

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw InputError(std::string(what) + ": expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void require_same_dim(const Point& x, const Point& y) {
  if (x.size() != y.size()) throw InputError("cost: points have different dimensions");
}

}  // namespace

// ---------------------------------------------------------------------------
// DiscreteMeasure

DiscreteMeasure::DiscreteMeasure(std::vector<Point> atoms, Eigen::VectorXd weights,
                                 std::size_t sample_size)
    : atoms_(std::move(atoms)), weights_(std::move(weights)), sample_size_(sample_size) {
  if (atoms_.empty()) throw InputError("empty sample");
  if (static_cast<std::size_t>(weights_.size()) != atoms_.size()) {
    throw InputError("measure: atoms and weights differ in length");
  }
  const std::size_t dim = atoms_.front().size();
  for (const auto& a : atoms_) {
    if (a.size() != dim) throw InputError("measure: atoms have different dimensions");
  }
  if ((weights_.array() < 0.0).any() || !weights_.allFinite()) {
    throw InputError("measure: weights must be finite and nonnegative");
  }
  if (std::abs(weights_.sum() - 1.0) > kWeightSumTolerance) {
    throw InputError("measure: weights must sum to 1");
  }
  if (sample_size_ == 0) sample_size_ = atoms_.size();
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Point> atoms) {
  const auto n = static_cast<Eigen::Index>(atoms.size());
  if (n == 0) throw InputError("empty sample");
  return DiscreteMeasure(std::move(atoms), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

DiscreteMeasure DiscreteMeasure::from_counts(const std::vector<Point>& atoms,
                                             const std::vector<std::size_t>& counts) {
  if (atoms.size() != counts.size()) throw InputError("from_counts: length mismatch");
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) throw InputError("empty sample");
  std::vector<Point> kept;
  std::vector<double> w;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (counts[i] == 0) continue;
    kept.push_back(atoms[i]);
    w.push_back(static_cast<double>(counts[i]) / static_cast<double>(total));
  }
  return DiscreteMeasure(std::move(kept), Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())),
                         total);
}

DiscreteMeasure DiscreteMeasure::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != atoms_.size()) throw InputError("permuted: wrong permutation length");
  std::vector<Point> atoms;
  Eigen::VectorXd w(weights_.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    atoms.push_back(atoms_.at(order[k]));
    w[static_cast<Eigen::Index>(k)] = weights_[static_cast<Eigen::Index>(order[k])];
  }
  return DiscreteMeasure(std::move(atoms), std::move(w), sample_size_);
}

DiscreteMeasure from_samples(const SampleSet& samples) {
  if (samples.points.empty()) throw InputError("empty sample");
  return DiscreteMeasure::uniform(samples.points);
}

// ---------------------------------------------------------------------------
// Costs

CostFunction::CostFunction(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

CostFunction CostFunction::sq_euclidean() {
  return {"sq_euclidean", [](const Point& x, const Point& y) {
            require_same_dim(x, y);
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
            return s;
          }};
}

CostFunction CostFunction::euclidean() {
  return {"euclidean", [](const Point& x, const Point& y) {
            require_same_dim(x, y);
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
            return std::sqrt(s);
          }};
}

CostFunction CostFunction::lp(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw InputError("lp cost requires finite p >= 1");
  std::ostringstream name;
  name << "lp:" << p;
  return {name.str(), [p](const Point& x, const Point& y) {
            require_same_dim(x, y);
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) s += std::pow(std::abs(x[k] - y[k]), p);
            return std::pow(s, 1.0 / p);
          }};
}

CostFunction CostFunction::indicator(double radius) {
  std::ostringstream name;
  name << "indicator:" << radius;
  return {name.str(), [radius](const Point& x, const Point& y) {
            require_same_dim(x, y);
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
            return std::sqrt(s) <= radius ? 0.0 : 1.0;
          }};
}

CostFunction CostFunction::constant(double value) {
  std::ostringstream name;
  name << "constant:" << value;
  return {name.str(), [value](const Point&, const Point&) { return value; }};
}

CostFunction CostFunction::table(Eigen::MatrixXd values) {
  return {"table", [values = std::move(values)](const Point& x, const Point& y) {
            if (x.size() != 1 || y.size() != 1) throw InputError("table cost expects label points");
            const auto i = static_cast<Eigen::Index>(x[0]);
            const auto j = static_cast<Eigen::Index>(y[0]);
            if (i < 0 || j < 0 || i >= values.rows() || j >= values.cols() ||
                static_cast<double>(i) != x[0] || static_cast<double>(j) != y[0]) {
              throw InputError("table cost: label out of range");
            }
            return values(i, j);
          }};
}

CostFunction CostFunction::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view head = spec.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  if (head == "sq_euclidean" && arg.empty()) return sq_euclidean();
  if (head == "euclidean" && arg.empty()) return euclidean();
  if (head == "lp" && !arg.empty()) return lp(parse_double(arg, "lp exponent"));
  if (head == "indicator" && !arg.empty()) return indicator(parse_double(arg, "indicator radius"));
  if (head == "constant" && !arg.empty()) return constant(parse_double(arg, "constant cost"));
  throw InputError("unknown cost '" + std::string(spec) + "'");
}

CostContext::CostContext(Eigen::MatrixXd cost, double epsilon)
    : cost_(std::move(cost)), epsilon_(epsilon) {
  if (!(epsilon_ > 0.0) || !std::isfinite(epsilon_)) throw InputError("epsilon must be positive");
  if (cost_.size() == 0) throw InputError("empty cost table");
  if (!cost_.allFinite()) throw InputError("unbounded cost");
  sup_bound_ = cost_.cwiseAbs().maxCoeff();
  scaled_ = cost_ / epsilon_;
  gibbs_ = (-scaled_.array()).exp().matrix();
}

CostContext build_cost(const CostFunction& cost, const DiscreteMeasure& x,
                       const DiscreteMeasure& y, double epsilon) {
  Eigen::MatrixXd table(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost(x.atom(i), y.atom(j));
    }
  }
  return CostContext(std::move(table), epsilon);
}

CostContext build_cost(const Eigen::MatrixXd& table, const DiscreteMeasure& x,
                       const DiscreteMeasure& y, double epsilon) {
  if (table.rows() != static_cast<Eigen::Index>(x.size()) ||
      table.cols() != static_cast<Eigen::Index>(y.size())) {
    std::ostringstream msg;
    msg << "cost table shape " << table.rows() << "x" << table.cols() << " does not match supports "
        << x.size() << "x" << y.size();
    throw InputError(msg.str());
  }
  return CostContext(table, epsilon);
}

// ---------------------------------------------------------------------------
// Sample files

SampleFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json") return SampleFormat::json;
  return SampleFormat::csv;
}

namespace {

void check_dim(std::vector<Point>& points, std::size_t record) {
  if (points.size() > 1 && points.back().size() != points.front().size()) {
    throw InputError("ragged rows at record " + std::to_string(record));
  }
}

SampleSet parse_csv(std::string_view text, bool skip_header) {
  SampleSet out;
  std::size_t line_no = 0;
  std::size_t record = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (skip_header && line_no == 1) continue;
    line = trim(line);
    if (line.empty()) continue;
    ++record;
    Point p;
    while (true) {
      const auto comma = line.find(',');
      const auto cell = trim(line.substr(0, comma));
      p.push_back(parse_double(cell, "row " + std::to_string(record)));
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    out.points.push_back(std::move(p));
    check_dim(out.points, record);
  }
  return out;
}

SampleSet parse_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw InputError("JSON samples must be an array of arrays");
  SampleSet out;
  std::size_t record = 0;
  for (const auto& row : doc) {
    ++record;
    Point p;
    if (row.is_number()) {
      p.push_back(row.get<double>());
    } else if (row.is_array()) {
      for (const auto& cell : row) {
        if (!cell.is_number()) {
          throw InputError("record " + std::to_string(record) + ": expected a number");
        }
        p.push_back(cell.get<double>());
      }
    } else {
      throw InputError("record " + std::to_string(record) + ": expected an array of numbers");
    }
    out.points.push_back(std::move(p));
    check_dim(out.points, record);
  }
  return out;
}

}  // namespace

SampleSet parse_samples(std::string_view text, SampleFormat format, bool skip_header,
                        std::string source) {
  SampleSet out = format == SampleFormat::csv ? parse_csv(text, skip_header) : parse_json(text);
  if (out.points.empty()) throw InputError("empty sample");
  if (out.dim() == 0) throw InputError("points must have at least one coordinate");
  out.source = std::move(source);
  return out;
}

SampleSet load_samples(const std::filesystem::path& path, SampleFormat format, bool skip_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_samples(buf.str(), format, skip_header, path.string());
}

// ---------------------------------------------------------------------------
// Synthetic data

Generator make_generator(std::string_view name) {
  const auto colon = name.find(':');
  const std::string_view head = name.substr(0, colon);
  std::size_t dim = 1;
  if (colon != std::string_view::npos) {
    const double d = parse_double(name.substr(colon + 1), "generator dimension");
    if (d < 1 || d != std::floor(d)) throw InputError("generator dimension must be a positive integer");
    dim = static_cast<std::size_t>(d);
  }
  if (head == "normal") return NormalFamily{Point(dim, 0.0), 1.0};
  if (head == "uniform") return UniformFamily{dim, 0.0, 1.0};
  if (head == "coin" && colon == std::string_view::npos) {
    return FiniteSupport{{{0.0}, {1.0}}, {0.5, 0.5}};
  }
  throw InputError("unknown generator '" + std::string(name) + "'");
}

std::vector<std::size_t> draw_counts(const std::vector<double>& probabilities, std::size_t n,
                                     std::uint64_t seed) {
  if (probabilities.empty()) throw InputError("finite support has no atoms");
  std::vector<double> cdf(probabilities.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    if (!(probabilities[k] >= 0.0)) throw InputError("negative probability");
    acc += probabilities[k];
    cdf[k] = acc;
  }
  if (std::abs(acc - 1.0) > 1e-12) throw InputError("probabilities must sum to 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> counts(probabilities.size(), 0);
  for (std::size_t draw = 0; draw < n; ++draw) {
    const double u = stats::uniform_open01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    ++counts[static_cast<std::size_t>(it - cdf.begin())];
  }
  return counts;
}

SampleSet sample_from(const Generator& generator, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample size must be at least 1");
  SampleSet out;
  std::mt19937_64 rng(seed);
  std::visit(
      [&](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, FiniteSupport>) {
          if (g.atoms.size() != g.probabilities.size() || g.atoms.empty()) {
            throw InputError("finite support: atoms and probabilities differ in length");
          }
          std::vector<double> cdf(g.probabilities.size());
          std::partial_sum(g.probabilities.begin(), g.probabilities.end(), cdf.begin());
          if (std::abs(cdf.back() - 1.0) > 1e-12) throw InputError("probabilities must sum to 1");
          for (std::size_t k = 0; k < n; ++k) {
            const double u = stats::uniform_open01(rng) * cdf.back();
            auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            if (it == cdf.end()) --it;
            out.points.push_back(g.atoms[static_cast<std::size_t>(it - cdf.begin())]);
          }
          out.source = "finite:" + std::to_string(seed);
        } else if constexpr (std::is_same_v<G, NormalFamily>) {
          for (std::size_t k = 0; k < n; ++k) {
            Point p(g.mean.size());
            for (std::size_t d = 0; d < p.size(); ++d) {
              p[d] = g.mean[d] + g.stddev * stats::normal_quantile(stats::uniform_open01(rng));
            }
            out.points.push_back(std::move(p));
          }
          out.source = "normal:" + std::to_string(seed);
        } else {
          for (std::size_t k = 0; k < n; ++k) {
            Point p(g.dim);
            for (auto& c : p) c = g.low + (g.high - g.low) * stats::uniform_open01(rng);
            out.points.push_back(std::move(p));
          }
          out.source = "uniform:" + std::to_string(seed);
        }
      },
      generator);
  return out;
}

}  // namespace eot
