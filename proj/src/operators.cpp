#include "eot/operators.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "eot/error.hpp"

namespace eot {

namespace {

constexpr double kCenteringTolerance = 1e-8;
constexpr double kMarginalTolerance = 1e-8;
constexpr std::size_t kPowerIterations = 20000;
constexpr double kPowerTolerance = 1e-14;

int index(Side side) { return side == Side::P ? 0 : 1; }

}  // namespace

struct OperatorContext::Cache {
  std::once_flag composite_once[2];
  Eigen::MatrixXd composite[2];
  std::once_flag lu_once[2];
  Eigen::PartialPivLU<Eigen::MatrixXd> lu[2];
  double rcond[2] = {0.0, 0.0};
};

OperatorContext::OperatorContext(const PlanDensity& plan, double scaled_sup_bound,
                                 std::size_t n_samples, std::size_t m_samples)
    : xi_(plan.xi),
      v_(plan.v),
      w_(plan.w),
      sup_bound_(scaled_sup_bound),
      delta_(1.0 - std::exp(-3.0 * scaled_sup_bound)),
      n_samples_(n_samples == 0 ? static_cast<std::size_t>(plan.rows()) : n_samples),
      m_samples_(m_samples == 0 ? static_cast<std::size_t>(plan.cols()) : m_samples),
      cache_(std::make_shared<Cache>()) {
  if (v_.size() != xi_.rows() || w_.size() != xi_.cols()) {
    throw InputError("operator context: weights do not match the plan");
  }
  const double row_err = ((xi_ * w_).array() - 1.0).abs().maxCoeff();
  const double col_err = ((xi_.transpose() * v_).array() - 1.0).abs().maxCoeff();
  if (!(std::max(row_err, col_err) <= kMarginalTolerance)) {
    throw NumericError("non-optimal potentials: plan marginals are off");
  }
}

OperatorContext::OperatorContext(const TransportFit& fit)
    : OperatorContext(fit.plan, fit.ctx.scaled_sup_bound(), fit.p.sample_size(),
                      fit.q.sample_size()) {}

Eigen::VectorXd OperatorContext::apply_AP(const Eigen::VectorXd& h) const {
  if (h.size() != n()) throw InputError("apply_AP: vector length does not match P");
  return xi_.transpose() * v_.cwiseProduct(h);
}

Eigen::VectorXd OperatorContext::apply_AQ(const Eigen::VectorXd& h) const {
  if (h.size() != m()) throw InputError("apply_AQ: vector length does not match Q");
  return xi_ * w_.cwiseProduct(h);
}

Eigen::VectorXd OperatorContext::apply_composite(Side side, const Eigen::VectorXd& h) const {
  return side == Side::P ? apply_AQ(apply_AP(h)) : apply_AP(apply_AQ(h));
}

const Eigen::MatrixXd& OperatorContext::composite(Side side) const {
  const int s = index(side);
  std::call_once(cache_->composite_once[s], [&] {
    // AQ = xi diag(w) (n x m), AP = xi^T diag(v) (m x n)
    const Eigen::MatrixXd aq = xi_ * w_.asDiagonal();
    const Eigen::MatrixXd ap = xi_.transpose() * v_.asDiagonal();
    cache_->composite[s] = side == Side::P ? Eigen::MatrixXd(aq * ap) : Eigen::MatrixXd(ap * aq);
  });
  return cache_->composite[s];
}

Eigen::VectorXd OperatorContext::neumann_solve(const Eigen::VectorXd& rhs, Side side,
                                               NeumannTerms terms) const {
  const Eigen::VectorXd& wts = weights(side);
  if (rhs.size() != wts.size()) throw InputError("neumann_solve: vector length mismatch");
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (std::abs(wts.dot(rhs)) > kCenteringTolerance * scale) {
    throw InputError("rhs not centered");
  }

  if (terms) {
    Eigen::VectorXd sum = rhs;
    Eigen::VectorXd term = rhs;
    // Iterates are kept in the centered subspace, where the series is
    // defined; T maps it into itself only up to the plan's marginal error.
    for (std::size_t k = 0; k < *terms; ++k) {
      term = center(wts, apply_composite(side, term));
      sum += term;
    }
    return sum;
  }

  // T fixes constants, so I - T is singular; I - T + 1 w^T is not, and
  // its solution for centered rhs is the centered solution of (I - T)x = rhs.
  const int s = index(side);
  std::call_once(cache_->lu_once[s], [&] {
    const auto k = wts.size();
    Eigen::MatrixXd system = -composite(side);
    system.diagonal().array() += 1.0;
    system += Eigen::VectorXd::Ones(k) * wts.transpose();
    cache_->lu[s].compute(system);
    cache_->rcond[s] = cache_->lu[s].rcond();
  });
  if (!(cache_->rcond[s] > 1e-14)) throw NumericError("singular direct solve");
  return center(wts, cache_->lu[s].solve(rhs));
}

SpectralEstimate OperatorContext::spectral_gap(Side side) const {
  const Eigen::VectorXd& wts = weights(side);
  const auto k = wts.size();
  SpectralEstimate out;
  if (k < 2) {
    out.converged = true;
    return out;
  }
  const auto norm = [&](const Eigen::VectorXd& x) {
    return std::sqrt(wts.dot(x.cwiseProduct(x)));
  };

  // Deterministic start with components along every direction.
  Eigen::VectorXd x(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    x[i] = std::sin(1.0 + 2.399963229728653 * static_cast<double>(i)) + 0.1;
  }
  x = center(wts, x);
  double nx = norm(x);
  if (nx == 0.0) {
    out.converged = true;
    return out;
  }
  x /= nx;

  double previous = -1.0;
  for (std::size_t it = 1; it <= kPowerIterations; ++it) {
    Eigen::VectorXd y = center(wts, apply_composite(side, x));
    // Rayleigh quotient in L^2(weights); the composite is self-adjoint there.
    const double rayleigh = wts.dot(x.cwiseProduct(y));
    out.value = std::max(0.0, rayleigh);
    out.iterations = it;
    const double ny = norm(y);
    if (ny <= 1e-300) {
      out.value = 0.0;
      out.converged = true;
      return out;
    }
    if (std::abs(rayleigh - previous) <= kPowerTolerance * std::max(1.0, std::abs(rayleigh))) {
      out.converged = true;
      return out;
    }
    previous = rayleigh;
    x = y / ny;
  }
  return out;
}

Eigen::VectorXd center(const Eigen::VectorXd& weights, const Eigen::VectorXd& h) {
  if (weights.size() != h.size()) throw InputError("center: length mismatch");
  return h.array() - weights.dot(h);
}

std::size_t proof_schedule_terms(std::size_t n, std::size_t m) {
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double t = nd * md / (nd + md);
  const double log_plus = std::max(0.0, std::log(t));
  return static_cast<std::size_t>(std::ceil(std::sqrt(log_plus)));
}

std::size_t adaptive_terms(double rate, std::size_t n, std::size_t m, double tail_tol,
                           std::size_t cap) {
  const std::size_t floor_terms = proof_schedule_terms(n, m);
  if (!(rate > 0.0)) return floor_terms;
  if (rate >= 1.0) return cap;
  // rate^{N+1} <= tail_tol (1 - rate)
  const double needed = std::log(tail_tol * (1.0 - rate)) / std::log(rate) - 1.0;
  const auto terms = static_cast<std::size_t>(std::ceil(std::max(0.0, needed)));
  return std::clamp(terms, floor_terms, cap);
}

}  // namespace eot
