#pragma once
// Per-measurement hypothesis tests on the debiased error estimate and the
// iterative detection loop that produces the flagged set J.

#include <span>
#include <vector>

#include "gtcs/debias.hpp"
#include "gtcs/simkit.hpp"

namespace gtcs::detect {

struct OdrltResult {
  std::vector<double> stats;    // |delta_w_i| / sigma_diag_i
  std::vector<double> pvalues;  // two-sided by default
  std::vector<int> rejected;
};

OdrltResult odrlt_test(const debias::DebiasedDelta& dd, double alpha, bool one_sided = false);

// Scale used to standardize the test statistic. `known` divides by the
// supplied sigma; `studentized_rms` divides by the RMS of the current fit
// residual, which stays calibrated when the regularization bias leaks
// through the closed-form debiasing.
enum class SigmaMode { studentized_rms, known };

// Threshold rule inside the detection loop. `bonferroni` divides alpha by
// the current system size so the union over passes stops compounding
// per-index false flags; `per_index` is the raw per-index rule.
enum class Multiplicity { bonferroni, per_index };

struct DetectOptions {
  double alpha = 0.05;
  int max_iterations = 20;
  SigmaMode sigma_mode = SigmaMode::studentized_rms;
  Multiplicity multiplicity = Multiplicity::bonferroni;
  double c_mu = 2.0;
  double sel_factor = 1.0;  // support-stage lambda1 scaling inside the loop
  bool one_sided = false;
};

struct DetectionResult {
  std::vector<int> J;           // flagged centered indices, sorted
  std::vector<double> stats;    // last-known statistic per centered index
  std::vector<double> pvalues;  // matching p-values
  int r_hat = 0;
  std::vector<int> rows_B;      // induced original rows (2 per flagged index)
};

// Core loop on an explicit (y, A) system. sigma feeds the theory lambdas
// and (in `known` mode) the statistic denominators.
DetectionResult detect_mmes(std::span<const double> y, const Mat& A, double sigma, int r_U,
                            double alpha = 0.05, const DetectOptions& opts = {});

// Convenience overload that also maps J back to original rows of B.
DetectionResult detect_mmes(const sim::CenteredSystem& cs, double sigma, int r_U,
                            double alpha = 0.05, const DetectOptions& opts = {});

}  // namespace gtcs::detect
