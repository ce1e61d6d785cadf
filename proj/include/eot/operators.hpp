#pragma once

#include <cstddef>
#include <memory>
#include <optional>

#include <Eigen/Dense>

#include "eot/sinkhorn.hpp"

namespace eot {

/// Which space a composite operator acts on: functions on the atoms of P
/// (A_Q A_P) or on the atoms of Q (A_P A_Q).
enum class Side { P, Q };

/// Truncation depth for the Neumann series; std::nullopt means the exact
/// inverse (N = infinity).
using NeumannTerms = std::optional<std::size_t>;

struct SpectralEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Conditional-expectation operators of an entropic plan:
///   (A_P h)_j = sum_i v_i xi_ij h_i   (P-functions to Q-functions)
///   (A_Q h)_i = sum_j w_j xi_ij h_j   (Q-functions to P-functions)
/// Immutable; composite tables and factorizations are built on first use
/// and shared between copies.
class OperatorContext {
 public:
  /// `scaled_sup_bound` is ||c/eps||_inf; sample sizes default to the
  /// atom counts.
  OperatorContext(const PlanDensity& plan, double scaled_sup_bound, std::size_t n_samples = 0,
                  std::size_t m_samples = 0);
  explicit OperatorContext(const TransportFit& fit);

  Eigen::Index n() const { return xi_.rows(); }
  Eigen::Index m() const { return xi_.cols(); }
  std::size_t n_samples() const { return n_samples_; }
  std::size_t m_samples() const { return m_samples_; }
  const Eigen::MatrixXd& xi() const { return xi_; }
  const Eigen::VectorXd& v() const { return v_; }
  const Eigen::VectorXd& w() const { return w_; }
  const Eigen::VectorXd& weights(Side side) const { return side == Side::P ? v_ : w_; }
  double sup_bound() const { return sup_bound_; }
  /// 1 - exp(-3 ||c/eps||_inf), the contraction bound on centered functions.
  double delta() const { return delta_; }

  Eigen::VectorXd apply_AP(const Eigen::VectorXd& h) const;
  Eigen::VectorXd apply_AQ(const Eigen::VectorXd& h) const;
  /// A_Q A_P for Side::P, A_P A_Q for Side::Q.
  Eigen::VectorXd apply_composite(Side side, const Eigen::VectorXd& h) const;
  /// Dense table of the composite operator.
  const Eigen::MatrixXd& composite(Side side) const;

  /// sum_{k=0}^{N} T^k rhs, or (I - T)^{-1} rhs on centered vectors when
  /// `terms` is nullopt. `rhs` must be centered under the side's weights.
  Eigen::VectorXd neumann_solve(const Eigen::VectorXd& rhs, Side side, NeumannTerms terms) const;

  /// Power-iteration estimate of the top eigenvalue of the composite
  /// operator restricted to centered vectors.
  SpectralEstimate spectral_gap(Side side) const;

 private:
  struct Cache;

  Eigen::MatrixXd xi_;
  Eigen::VectorXd v_;
  Eigen::VectorXd w_;
  double sup_bound_;
  double delta_;
  std::size_t n_samples_;
  std::size_t m_samples_;
  std::shared_ptr<Cache> cache_;
};

/// h - sum_i weight_i h_i.
Eigen::VectorXd center(const Eigen::VectorXd& weights, const Eigen::VectorXd& h);

/// ceil(sqrt(log_+(nm/(n+m)))) with log_+(t) = max(0, log t).
std::size_t proof_schedule_terms(std::size_t n, std::size_t m);

/// Smallest N with rate^{N+1} / (1 - rate) <= tail_tol, never below the
/// proof schedule. Falls back to the proof schedule when rate is 0.
std::size_t adaptive_terms(double rate, std::size_t n, std::size_t m, double tail_tol = 1e-8,
                           std::size_t cap = 100000);

}  // namespace eot
