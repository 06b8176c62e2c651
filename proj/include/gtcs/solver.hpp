#pragma once
// Lasso and Robust Lasso by cyclic coordinate descent, KKT verification,
// and the support-refit (relaxed) variant used by the detection/correction
// pipelines.

#include <optional>
#include <span>
#include <vector>

#include "gtcs/matrix.hpp"

namespace gtcs::solve {

struct SolveOptions {
  double tol_rel = 1e-8;
  long max_sweeps = 100000;
};

struct RobustFit {
  std::vector<double> beta;
  std::vector<double> delta;  // empty for a plain lasso fit
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  long iterations = 0;
  double kkt_gap = 0.0;
  double objective = 0.0;
  // RMS of the penalized base-fit residual when this fit came from the
  // relaxed (support-refit) path; 0 otherwise. The shrinkage bias makes it
  // an upward-biased noise estimate, which the support test wants.
  double base_scale = 0.0;
};

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// (1/2n')||y - A beta - delta||^2 + lambda1 ||beta||_1 + lambda2 ||delta||_1
double objective_value(std::span<const double> y, const Mat& A, std::span<const double> beta,
                       std::span<const double> delta, double lambda1, double lambda2);

RobustFit lasso(std::span<const double> y, const Mat& A, double lambda,
                const SolveOptions& opts = {}, const std::vector<double>* warm = nullptr);

RobustFit robust_lasso(std::span<const double> y, const Mat& A, double lambda1, double lambda2,
                       const SolveOptions& opts = {}, const RobustFit* warm = nullptr);

// Max subgradient violation across both blocks; 0 iff exactly optimal.
double kkt_residual(std::span<const double> y, const Mat& A, const RobustFit& fit);

// Relaxed robust lasso: run the penalized fit for support selection (the
// beta penalty scaled by sel_factor), then least-squares refit on the
// selected support using rows with delta_hat = 0 and residuals within
// 3 * 1.4826 * MAD; delta is re-soft-thresholded against the refit.
struct RelaxedOptions {
  double sel_factor = 1.0;
  SolveOptions solve;
};

// penalized_out, when given, receives the plain robust-lasso fit at the
// full (lambda1, lambda2) pair (computed internally for the scale reference).
RobustFit relaxed_robust_lasso(std::span<const double> y, const Mat& A, double lambda1,
                               double lambda2, const RelaxedOptions& opts = {},
                               RobustFit* penalized_out = nullptr);

// Theory regularization pair from the Robust-Lasso error bound:
//   lambda1 = 4 sigma sqrt(log p) / sqrt(n' - r_hat)
//   lambda2 = 4 sigma sqrt(log n') / (n' - r_hat)
std::pair<double, double> theory_lambdas(double sigma, int p, int np, int r_hat = 0);

}  // namespace gtcs::solve
