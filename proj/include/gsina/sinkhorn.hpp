#ifndef GSINA_SINKHORN_HPP
#define GSINA_SINKHORN_HPP

// Dense entropic-OT building blocks for soft top-r selection, templated on the
// scalar type. These work on plain Eigen values (no tape) and serve both as the
// convergence laboratory and as the reference for the differentiable path.

#include "gsina/error.hpp"
#include "gsina/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gsina {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Two-row plan: row 0 transports to the low-score ("variant") anchor, row 1
/// to the high-score ("invariant") anchor.
template <typename Scalar>
using PlanMatrix = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;

// |D / tau| is clamped here before exponentiation: exp(-700) is still a normal
// double, so plan entries stay strictly positive and finite.
inline constexpr double kExpArgLimit = 700.0;
inline constexpr double kMarginalFloor = 1e-300;

template <typename Scalar>
struct TransportPlan {
  PlanMatrix<Scalar> T;
  double r = 0.0;
  double tau = 1.0;

  Eigen::Index m() const { return T.cols(); }
};

template <typename Scalar>
struct Marginals {
  Eigen::Matrix<Scalar, 2, 1> row;  // [(1 - r) m, r m]
  VectorX<Scalar> col;              // all ones
};

struct ConvergenceTrace {
  std::vector<double> row_residual;  // ||T_k 1 - R||_2 after iteration k
  std::vector<double> plan_delta;    // ||T_k - T_{k-1}||_F
};

/// s~ = s - sigma * log(-log u), u ~ U(0,1) open. sigma == 0 returns the input
/// untouched and draws nothing.
template <typename Scalar>
VectorX<Scalar> gumbel_perturb(const VectorX<Scalar>& scores, double sigma, Rng& rng) {
  if (sigma < 0.0) throw Error(ErrorCode::InvalidConfig, "Gumbel factor must be >= 0");
  if (sigma == 0.0) return scores;
  VectorX<Scalar> out = scores;
  for (Eigen::Index e = 0; e < out.size(); ++e) out[e] -= Scalar(sigma * std::log(-std::log(rng.uniform_open())));
  return out;
}

/// Row 0 = s~ - min(s), row 1 = max(s) - s~, anchors taken over the
/// unperturbed scores.
template <typename Scalar>
PlanMatrix<Scalar> build_cost(const VectorX<Scalar>& perturbed, const VectorX<Scalar>& scores) {
  if (scores.size() == 0) throw Error(ErrorCode::EmptySegment, "cost of an empty score vector");
  if (perturbed.size() != scores.size()) throw Error(ErrorCode::ShapeMismatch, "perturbed/score length");
  const Scalar lo = scores.minCoeff();
  const Scalar hi = scores.maxCoeff();
  PlanMatrix<Scalar> D(2, scores.size());
  D.row(0) = (perturbed.array() - lo).matrix().transpose();
  D.row(1) = (hi - perturbed.array()).matrix().transpose();
  return D;
}

template <typename Scalar>
PlanMatrix<Scalar> build_cost(const VectorX<Scalar>& scores) {
  return build_cost<Scalar>(scores, scores);
}

template <typename Scalar = double>
Marginals<Scalar> build_marginals(Eigen::Index m, double r) {
  if (m < 1) throw Error(ErrorCode::EmptySegment, "marginals need m >= 1");
  if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidRatio, "r must lie in (0, 1], got " + std::to_string(r));
  Marginals<Scalar> out;
  out.row << Scalar((1.0 - r) * static_cast<double>(m)), Scalar(r * static_cast<double>(m));
  out.col = VectorX<Scalar>::Ones(m);
  return out;
}

/// T0 = exp(-clamp(D / tau, -700, 700)).
template <typename Scalar>
TransportPlan<Scalar> sinkhorn_init(const PlanMatrix<Scalar>& D, double tau, double r = 0.0) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  TransportPlan<Scalar> plan;
  plan.T = (-(D.array() / Scalar(tau)).max(Scalar(-kExpArgLimit)).min(Scalar(kExpArgLimit))).exp().matrix();
  plan.tau = tau;
  plan.r = r;
  return plan;
}

/// One row step then one column step per iteration; the last operation is a
/// column step, so columns sum to C on return.
template <typename Scalar>
std::pair<TransportPlan<Scalar>, ConvergenceTrace> sinkhorn_iterate(TransportPlan<Scalar> plan,
                                                                   const Marginals<Scalar>& marg, int n_iters) {
  if (n_iters < 1) throw Error(ErrorCode::InvalidConfig, "n_iters must be >= 1");
  if (marg.col.size() != plan.m()) throw Error(ErrorCode::ShapeMismatch, "column marginal length");
  if ((plan.T.array() <= Scalar(0)).any()) throw Error(ErrorCode::ZeroMarginal, "plan must be strictly positive");
  ConvergenceTrace trace;
  trace.row_residual.reserve(static_cast<std::size_t>(n_iters));
  trace.plan_delta.reserve(static_cast<std::size_t>(n_iters));
  PlanMatrix<Scalar> prev = plan.T;
  for (int k = 0; k < n_iters; ++k) {
    for (Eigen::Index i = 0; i < 2; ++i) {
      const Scalar s = plan.T.row(i).sum();
      if (!(s >= Scalar(kMarginalFloor))) throw Error(ErrorCode::ZeroMarginal, "row " + std::to_string(i));
      plan.T.row(i) *= marg.row[i] / s;
    }
    for (Eigen::Index j = 0; j < plan.m(); ++j) {
      const Scalar s = plan.T.col(j).sum();
      if (!(s >= Scalar(kMarginalFloor))) throw Error(ErrorCode::ZeroMarginal, "column " + std::to_string(j));
      plan.T.col(j) *= marg.col[j] / s;
    }
    const Eigen::Matrix<Scalar, 2, 1> resid = plan.T.rowwise().sum() - marg.row;
    trace.row_residual.push_back(static_cast<double>(resid.norm()));
    trace.plan_delta.push_back(static_cast<double>((plan.T - prev).norm()));
    prev = plan.T;
  }
  return {std::move(plan), std::move(trace)};
}

/// Invariant-row mass per item.
template <typename Scalar>
VectorX<Scalar> edge_attention(const TransportPlan<Scalar>& plan) {
  return plan.T.row(1).transpose();
}

/// Single-segment soft top-r on plain values. r == 1 returns all ones.
template <typename Scalar>
VectorX<Scalar> soft_top_r_reference(const VectorX<Scalar>& scores, double r, double tau, int n_iters,
                                     double sigma = 0.0, Rng* rng = nullptr, ConvergenceTrace* trace = nullptr) {
  if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidRatio, "r must lie in (0, 1]");
  if (scores.size() == 0) throw Error(ErrorCode::SegmentTooSmall, "no edges");
  if (r == 1.0) return VectorX<Scalar>::Ones(scores.size());
  Rng fallback(0);
  const VectorX<Scalar> perturbed = gumbel_perturb<Scalar>(scores, sigma, rng ? *rng : fallback);
  const auto marg = build_marginals<Scalar>(scores.size(), r);
  auto [plan, tr] = sinkhorn_iterate(sinkhorn_init<Scalar>(build_cost<Scalar>(perturbed, scores), tau, r), marg, n_iters);
  if (trace) *trace = std::move(tr);
  return edge_attention(plan);
}

struct RhoEstimate {
  double rho = 1.0;
  double r2 = 0.0;
  bool contracting = false;  // rho < 1
};

/// Least-squares fit of log(residual_k) against k; rho = exp(slope).
/// Throws DegenerateTrace for fewer than 4 points or residuals <= 1e-14.
inline RhoEstimate estimate_rho(const std::vector<double>& residuals) {
  if (residuals.size() < 4) throw Error(ErrorCode::DegenerateTrace, "need at least 4 residuals");
  const double n = static_cast<double>(residuals.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> y(residuals.size());
  for (std::size_t k = 0; k < residuals.size(); ++k) {
    if (!(residuals[k] > 1e-14)) throw Error(ErrorCode::DegenerateTrace, "residual at or below 1e-14");
    y[k] = std::log(residuals[k]);
    const double x = static_cast<double>(k);
    sx += x;
    sy += y[k];
    sxx += x * x;
    sxy += x * y[k];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  const double ybar = sy / n;
  double ss_tot = 0, ss_res = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double fit = intercept + slope * static_cast<double>(k);
    ss_res += (y[k] - fit) * (y[k] - fit);
    ss_tot += (y[k] - ybar) * (y[k] - ybar);
  }
  RhoEstimate est;
  est.rho = std::exp(slope);
  // A flat trace is fit exactly by a constant line.
  est.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  est.contracting = est.rho < 1.0;
  return est;
}

inline RhoEstimate estimate_rho(const ConvergenceTrace& trace) { return estimate_rho(trace.row_residual); }

}  // namespace gsina

#endif  // GSINA_SINKHORN_HPP
