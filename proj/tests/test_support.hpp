#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "eot/measures.hpp"

namespace testing {

inline eot::DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n, std::size_t dim = 1) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_real_distribution<double> mass(0.2, 1.0);
  std::vector<eot::Point> atoms(n, eot::Point(dim));
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : atoms[i]) x = coord(rng);
    w[static_cast<Eigen::Index>(i)] = mass(rng);
  }
  return eot::DiscreteMeasure(std::move(atoms), w / w.sum());
}

/// Bounded random cost table with entries in [0, bound].
inline Eigen::MatrixXd random_table(std::mt19937_64& rng, std::size_t n, std::size_t m, double bound) {
  std::uniform_real_distribution<double> u(0.0, bound);
  Eigen::MatrixXd c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) c(i, j) = u(rng);
  }
  return c;
}

/// Label atoms 0..n-1 with random weights, for use with CostFunction::table.
inline eot::DiscreteMeasure random_labels(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> mass(0.2, 1.0);
  std::vector<eot::Point> atoms;
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    atoms.push_back({static_cast<double>(i)});
    w[static_cast<Eigen::Index>(i)] = mass(rng);
  }
  return eot::DiscreteMeasure(std::move(atoms), w / w.sum());
}

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace testing
