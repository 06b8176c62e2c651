#pragma once
// Closed-form debiasing matrix for centered-Bernoulli designs, constraint
// verification for the underlying convex program, and the debiased
// estimators with their standard errors.

#include <span>
#include <vector>

#include "gtcs/matrix.hpp"
#include "gtcs/solver.hpp"

namespace gtcs::debias {

// Orientation/scale of the smoothing matrix. The closed form makes
// (1/p) A W^T have diagonal exactly 1 - mu3, which is the self-consistent
// default; the 1/n' variants are kept for experimentation.
enum class Smoothing { p_awt, np_awt, np_wat };

enum class Radii { main_text, h_scaled };

struct DebiasOperator {
  Mat W;                        // n' x p
  Mat M;                        // n' x n' smoothing matrix
  std::vector<double> row_norm; // ||(I - M) row i||_2
  double mu1 = 0.0;             // main-text constraint radii
  double mu2 = 0.0;
  double mu3 = 0.0;
  double tau = 0.0;             // max_{i != k} |a_i . a_k| / ||a_i||^2
  bool feasible = false;        // tau / (1 + tau) <= mu3
  double h = 0.0;
  int np = 0, p = 0;
};

DebiasOperator closed_form_W(const Mat& A, double theta, double c_mu = 2.0,
                             Smoothing smoothing = Smoothing::p_awt);

struct ConstraintRow {
  const char* name;
  double lhs;
  double radius;
  bool pass;
};

struct ConstraintReport {
  ConstraintRow c0, c1, c2, c3;
  bool all_pass;
};

ConstraintReport verify_constraints(const Mat& W, const Mat& A, double theta,
                                    Radii radii = Radii::main_text, double c_mu = 2.0);

struct DebiasedDelta {
  std::vector<double> delta_w;
  std::vector<double> sigma_diag;  // sqrt(diag Sigma_delta) at the given sigma
};

DebiasedDelta debias_delta(std::span<const double> y, const Mat& A, const DebiasOperator& op,
                           const solve::RobustFit& fit, double sigma);

// Debiased signal coordinates with their standard errors:
//   beta_w_j = beta_j + (1 - mu_b) a_.j . (y - A beta) / ||a_.j||^2,
//   se_j = sigma |1 - mu_b| / ||a_.j||,   mu_b = 2 sqrt(2 log p / n').
std::pair<std::vector<double>, std::vector<double>> debias_beta(std::span<const double> y,
                                                                const Mat& A,
                                                                std::span<const double> beta_hat,
                                                                double sigma);

}  // namespace gtcs::debias
