#ifndef GSINA_DIAGNOSTICS_HPP
#define GSINA_DIAGNOSTICS_HPP

#include "gsina/model.hpp"
#include "gsina/sinkhorn.hpp"
#include "gsina/tape.hpp"

#include <cstdint>
#include <vector>

namespace gsina {

/// Residuals at or below this are treated as converged to round-off.
inline constexpr double kResidualFloor = 1e-12;

/// Fits rho over 1-based iterations [first, last] of the trace, dropping the
/// tail once the residual reaches `floor`. Throws DegenerateTrace with fewer
/// than 4 usable points.
RhoEstimate estimate_rho_window(const std::vector<double>& residuals, int first, int last,
                                double floor = kResidualFloor);

struct ConvergenceTrial {
  Index m = 0;
  double r = 0.0;
  double tau = 1.0;
  ConvergenceTrace trace;
  RhoEstimate fit;
};

/// `trials` single-segment problems with N(0,1) scores (sigma = 0), each run
/// for `iters` iterations and fit over the whole trace. Trial t draws from
/// Rng(seed).stream(t). Throws DegenerateTrace when a fit is impossible.
std::vector<ConvergenceTrial> convergence_study(Index m, double r, double tau, int trials, int iters,
                                                std::uint64_t seed);

/// Gradient of sum(w .* alpha) + 0.5 * sum(alpha .^ 2) with respect to N(0,1)
/// scores, w ~ U(-1, 1), sigma = 0.
GradCheckReport check_topr_gradient(Index m, double r, double tau, int n_iters, double tol, std::uint64_t seed);

/// Train-mode NLL on a 2-graph synthetic batch against every phi and theta
/// parameter. Dropout and Gumbel draws are frozen across evaluations.
GradCheckReport check_end_to_end_gradient(const ModelConfig& config, double tol, std::uint64_t seed);

}  // namespace gsina

#endif  // GSINA_DIAGNOSTICS_HPP
