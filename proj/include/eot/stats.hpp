#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Dense>

namespace eot::stats {

double normal_cdf(double x);

/// Inverse of the standard normal CDF. Acklam's rational approximation
/// followed by one Halley step against erfc; absolute error below 1e-12 on
/// (1e-300, 1 - 1e-16).
double normal_quantile(double p);

/// Two-sided quantile z_{(1+level)/2}.
double two_sided_z(double level);

/// sup_x |F_n(x) - Phi(x)| for the empirical CDF of `samples`.
double ks_statistic_normal(std::span<const double> samples);

/// Asymptotic Kolmogorov p-value P(D_n > d), with Stephens' small-sample
/// correction (sqrt(n) + 0.12 + 0.11/sqrt(n)).
double ks_pvalue(double d, std::size_t n);

double weighted_mean(const Eigen::VectorXd& weights, const Eigen::VectorXd& h);
double weighted_variance(const Eigen::VectorXd& weights, const Eigen::VectorXd& h);
double weighted_covariance(const Eigen::VectorXd& weights, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b);

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x);
/// Deterministic child seed for stream `index` of `seed`.
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index);

/// Uniform double in (0, 1) from 53 random bits; fully specified, unlike
/// std::uniform_real_distribution.
inline double uniform_open01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace eot::stats
